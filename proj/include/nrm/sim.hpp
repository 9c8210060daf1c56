#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "nrm/fluid.hpp"

namespace nrm {

/// One entry of a policy's algorithm log.
struct AlgorithmEvent {
    enum class Kind { GradEst, DualUpdate, Note };

    Kind kind = Kind::Note;
    long period = 0;  // first period covered by the event
    int epoch = -1;
    int loop = -1;
    Vector lambda;
    Vector price;
    Vector balanced_price;
    std::string balancing;  // feasible | infeasible | skipped | truncated
    long n = 0;
    long periods = 0;
    double u = 0;
    bool clipped = false;
    Vector d_hat;
    Vector g_hat;
    Vector lambda_next;
    double eps_bar = 0;
    std::string note;
};

nlohmann::json event_to_json(const AlgorithmEvent& e);

/// Admissible pricing policy. The simulator calls next_price(t) and then
/// observe(t, ...) for t = 1..T in order, so next_price(t) can only depend
/// on observations of periods before t.
class Policy {
public:
    virtual ~Policy() = default;
    virtual PostedPrice next_price(long period) = 0;
    virtual void observe(long period, const PostedPrice& price, const DemandVector& realized) = 0;
    virtual const std::vector<AlgorithmEvent>& events() const;
    virtual std::string name() const = 0;
};

struct InventoryState {
    Vector remaining;
    bool shut_off = false;
    std::optional<long> shutoff_period;
};

struct PeriodRecord {
    long period = 0;
    PostedPrice price = PostedPrice::shutoff();
    DemandVector demand;
    double revenue = 0;
    Vector inventory;
};

/// Checks computed alongside the simulation by an independent observer.
struct EpisodeAudit {
    long negative_inventory = 0;
    long inventory_increase = 0;
    long sales_after_shutoff = 0;
    double recomputed_revenue = 0;
    bool revenue_identity = true;
    std::uint64_t digest = 0;

    bool ok() const {
        return negative_inventory == 0 && inventory_increase == 0 && sales_after_shutoff == 0 &&
               revenue_identity;
    }
};

struct EpisodeTrace {
    long horizon = 0;
    std::vector<PeriodRecord> periods;  // filled only when requested
    double total_revenue = 0;
    std::optional<long> shutoff_period;
    Vector final_inventory;
    std::vector<AlgorithmEvent> events;
    EpisodeAudit audit;
};

struct EpisodeOptions {
    bool record_periods = false;
    std::ostream* trace_csv = nullptr;  // streamed, one row per period
};

/// Runs periods 1..T. A purchase that the remaining inventory cannot serve
/// is lost and shuts the market off; a resource at zero also shuts it off.
EpisodeTrace run_episode(const Instance& inst, Policy& policy, std::uint64_t seed,
                         const EpisodeOptions& options = {});

double percentage_loss(double upper_bound, double revenue);
double percentage_loss(const Instance& inst, const FluidSolution& fluid, const EpisodeTrace& trace);

void write_trace_header(std::ostream& out, Eigen::Index N, Eigen::Index M);
void write_trace_row(std::ostream& out, const PeriodRecord& rec);
void write_trace_csv(std::ostream& out, const EpisodeTrace& trace, Eigen::Index N, Eigen::Index M);
void write_events_jsonl(std::ostream& out, const std::vector<AlgorithmEvent>& events);

/// Shortest round-trip decimal form.
std::string format_double(double x);

} // namespace nrm
