#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "nrm/baselines.hpp"
#include "nrm/pdnrm.hpp"

namespace nrm {

struct BenchPlan {
    Instance instance;
    std::vector<std::string> policies;
    PdNrmSettings pdnrm;
    EtcConfig etc;
    std::vector<long> T_grid;
    int replications = 1;
    std::map<long, int> replications_at;  // per-horizon override
    std::uint64_t base_seed = 0;
    std::string output_dir;
    int threads = 0;  // 0: hardware concurrency
    bool verify_reruns = false;
    nlohmann::json echo;  // the plan document as given

    int replications_for(long T) const;
    void validate() const;
};

/// Relative instance paths resolve against `base_dir`.
BenchPlan plan_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = ".");
BenchPlan load_plan(const std::string& path);

struct EpisodeResult {
    std::string policy;
    long T = 0;
    int replicate = 0;
    std::uint64_t seed = 0;
    double revenue = 0;
    double loss = 0;
    long shutoff = 0;  // shutoff period, or T + 1 when the market stayed open
    double wall_ms = 0;
    bool ok = false;
    std::string error;
    EpisodeAudit audit;
    bool rerun_identical = true;
    int dual_updates = 0;
    int max_loops_per_epoch = 0;
    bool epoch_bounds_ok = true;
};

struct SummaryRow {
    std::string policy;
    long T = 0;
    double mean_loss = 0;
    double stderr_loss = 0;
    double mean_revenue = 0;
    double mean_shutoff = 0;
    double wall_ms = 0;
    double mean_regret = 0;
    int count = 0;
};

struct BenchSummary {
    std::vector<SummaryRow> rows;
    std::vector<EpisodeResult> episodes;
    std::map<std::string, double> slopes;
    double fluid_value = 0;
    double wall_ms = 0;
    std::map<long, PdNrmConfig> pdnrm_configs;

    const SummaryRow& row(const std::string& policy, long T) const;
};

/// Runs every (T, policy, replicate) episode; replicate i uses seed
/// mix_seed(base_seed, i). Writes CSV and metadata when output_dir is set.
BenchSummary run_bench(const BenchPlan& plan);

/// Pairwise summation in the given order.
double pairwise_sum(const double* x, std::size_t n);

/// Least-squares slope of ln(regret) on ln(T). Needs >= 3 points, all positive.
double loglog_slope(const std::vector<double>& T, const std::vector<double>& regret);
double loglog_slope(const std::vector<SummaryRow>& rows, const std::string& policy);

void write_summary_csv(std::ostream& out, const std::vector<SummaryRow>& rows);
void write_episodes_csv(std::ostream& out, const std::vector<EpisodeResult>& episodes);

/// Builds a fresh policy for one episode.
std::unique_ptr<Policy> make_policy(const std::string& name, const Instance& inst, const FluidSolution& fluid,
                                    const PdNrmConfig* pdnrm, const EtcConfig& etc);

} // namespace nrm
