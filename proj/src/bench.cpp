#include "nrm/bench.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <fstream>
#include <mutex>
#include <stdexcept>
#include <thread>

#include "nrm/rng.hpp"

#ifndef NRM_GIT_HASH
#define NRM_GIT_HASH "unknown"
#endif

namespace nrm {

using nlohmann::json;

int BenchPlan::replications_for(long T) const {
    auto it = replications_at.find(T);
    return it == replications_at.end() ? replications : it->second;
}

void BenchPlan::validate() const {
    instance.validate();
    if (replications < 1) throw std::invalid_argument("plan: replications must be >= 1");
    for (const auto& [T, r] : replications_at)
        if (r < 1) throw std::invalid_argument("plan: replications must be >= 1 for T=" + std::to_string(T));
    if (T_grid.empty()) throw std::invalid_argument("plan: T_grid is empty");
    for (std::size_t i = 0; i < T_grid.size(); ++i) {
        if (T_grid[i] < 2) throw std::invalid_argument("plan: horizons must be >= 2");
        if (i && T_grid[i] <= T_grid[i - 1]) throw std::invalid_argument("plan: T_grid must be strictly increasing");
    }
    if (policies.empty()) throw std::invalid_argument("plan: no policies");
    for (const auto& p : policies)
        if (p != "pdnrm" && p != "clairvoyant" && p != "etc") throw std::invalid_argument("plan: unknown policy " + p);
    etc.validate();
}

BenchPlan plan_from_json(const json& j, const std::filesystem::path& base_dir) {
    static const std::vector<std::string> keys = {"instance",    "policies",   "pdnrm_config",  "etc_config",
                                                  "T_grid",      "replications", "replications_at", "base_seed",
                                                  "output_dir",  "threads",    "verify_reruns"};
    if (!j.is_object()) throw std::invalid_argument("plan must be a JSON object");
    for (auto it = j.begin(); it != j.end(); ++it)
        if (std::find(keys.begin(), keys.end(), it.key()) == keys.end())
            throw std::invalid_argument("plan: unknown key '" + it.key() + "'");
    try {
        BenchPlan plan;
        const json& inst = j.at("instance");
        if (inst.is_string()) {
            std::filesystem::path p = inst.get<std::string>();
            plan.instance = load_instance((p.is_absolute() ? p : base_dir / p).string());
        } else {
            plan.instance = instance_from_json(inst);
        }
        plan.policies = j.at("policies").get<std::vector<std::string>>();
        if (j.contains("pdnrm_config")) plan.pdnrm = settings_from_json(j["pdnrm_config"]);
        if (j.contains("etc_config")) plan.etc = etc_config_from_json(j["etc_config"]);
        for (const auto& t : j.at("T_grid")) plan.T_grid.push_back(static_cast<long>(t.get<double>()));
        plan.replications = j.value("replications", 1);
        if (j.contains("replications_at"))
            for (auto it = j["replications_at"].begin(); it != j["replications_at"].end(); ++it)
                plan.replications_at[static_cast<long>(std::stod(it.key()))] = it.value().get<int>();
        plan.base_seed = j.value("base_seed", std::uint64_t{0});
        plan.output_dir = j.value("output_dir", std::string());
        if (!plan.output_dir.empty() && std::filesystem::path(plan.output_dir).is_relative())
            plan.output_dir = (base_dir / plan.output_dir).string();
        plan.threads = j.value("threads", 0);
        plan.verify_reruns = j.value("verify_reruns", false);
        plan.echo = j;
        plan.validate();
        return plan;
    } catch (const json::exception& e) {
        throw std::invalid_argument(std::string("plan: ") + e.what());
    }
}

BenchPlan load_plan(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::invalid_argument("cannot open plan file: " + path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw std::invalid_argument("plan file " + path + ": " + e.what());
    }
    return plan_from_json(j, std::filesystem::path(path).parent_path());
}

const SummaryRow& BenchSummary::row(const std::string& policy, long T) const {
    for (const auto& r : rows)
        if (r.policy == policy && r.T == T) return r;
    throw std::out_of_range("no summary row for " + policy + " at T=" + std::to_string(T));
}

double pairwise_sum(const double* x, std::size_t n) {
    if (n == 0) return 0.0;
    if (n <= 8) {
        double s = 0.0;
        for (std::size_t i = 0; i < n; ++i) s += x[i];
        return s;
    }
    const std::size_t h = n / 2;
    return pairwise_sum(x, h) + pairwise_sum(x + h, n - h);
}

double loglog_slope(const std::vector<double>& T, const std::vector<double>& regret) {
    if (T.size() != regret.size() || T.size() < 3) throw std::invalid_argument("loglog_slope: need >= 3 points");
    std::vector<double> x, y;
    for (std::size_t i = 0; i < T.size(); ++i) {
        if (!(T[i] > 0) || !(regret[i] > 0)) throw std::invalid_argument("loglog_slope: values must be positive");
        x.push_back(std::log(T[i]));
        y.push_back(std::log(regret[i]));
    }
    const double n = static_cast<double>(x.size());
    const double mx = pairwise_sum(x.data(), x.size()) / n, my = pairwise_sum(y.data(), y.size()) / n;
    double sxx = 0, sxy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxx += (x[i] - mx) * (x[i] - mx);
        sxy += (x[i] - mx) * (y[i] - my);
    }
    if (sxx <= 0) throw std::invalid_argument("loglog_slope: degenerate horizon grid");
    return sxy / sxx;
}

double loglog_slope(const std::vector<SummaryRow>& rows, const std::string& policy) {
    std::vector<double> T, r;
    for (const auto& row : rows)
        if (row.policy == policy) {
            T.push_back(static_cast<double>(row.T));
            r.push_back(row.mean_regret);
        }
    return loglog_slope(T, r);
}

void write_summary_csv(std::ostream& out, const std::vector<SummaryRow>& rows) {
    out << "policy,T,mean_loss,stderr,mean_revenue,mean_shutoff,wall_ms\n";
    for (const auto& r : rows)
        out << r.policy << ',' << r.T << ',' << format_double(r.mean_loss) << ',' << format_double(r.stderr_loss)
            << ',' << format_double(r.mean_revenue) << ',' << format_double(r.mean_shutoff) << ','
            << format_double(std::round(r.wall_ms * 1000) / 1000) << '\n';
}

void write_episodes_csv(std::ostream& out, const std::vector<EpisodeResult>& episodes) {
    out << "policy,T,replicate,seed,revenue,loss,shutoff\n";
    for (const auto& e : episodes) {
        if (!e.ok) continue;
        out << e.policy << ',' << e.T << ',' << e.replicate << ',' << e.seed << ',' << format_double(e.revenue)
            << ',' << format_double(e.loss) << ',' << e.shutoff << '\n';
    }
}

std::unique_ptr<Policy> make_policy(const std::string& name, const Instance& inst, const FluidSolution& fluid,
                                    const PdNrmConfig* pdnrm, const EtcConfig& etc) {
    if (name == "pdnrm") {
        if (!pdnrm) throw std::invalid_argument("make_policy: pdnrm needs a resolved config");
        return dual_opt_policy(inst, *pdnrm);
    }
    if (name == "clairvoyant") return clairvoyant_policy(inst, fluid);
    if (name == "etc") return explore_then_commit_policy(inst, etc);
    throw std::invalid_argument("unknown policy: " + name);
}

namespace {

struct WorkItem {
    std::string policy;
    long T;
    int replicate;
};

EpisodeResult run_one(const BenchPlan& plan, const WorkItem& w, const FluidSolution& fluid,
                      const std::map<long, PdNrmConfig>& configs) {
    EpisodeResult r;
    r.policy = w.policy;
    r.T = w.T;
    r.replicate = w.replicate;
    r.seed = mix_seed(plan.base_seed, static_cast<std::uint64_t>(w.replicate));
    const auto start = std::chrono::steady_clock::now();
    try {
        Instance inst = plan.instance.with_horizon(w.T);
        const PdNrmConfig* cfg = configs.count(w.T) ? &configs.at(w.T) : nullptr;
        auto policy = make_policy(w.policy, inst, fluid, cfg, plan.etc);
        EpisodeTrace trace = run_episode(inst, *policy, r.seed);
        r.revenue = trace.total_revenue;
        r.loss = percentage_loss(fluid_upper_bound(inst, fluid), trace.total_revenue);
        r.shutoff = trace.shutoff_period.value_or(w.T + 1);
        r.audit = trace.audit;
        if (w.policy == "pdnrm") {
            EpochCounts counts = count_epochs(trace.events);
            EpochBounds bounds = epoch_bounds(*cfg, w.T);
            r.dual_updates = counts.dual_updates;
            r.max_loops_per_epoch = counts.max_loops_per_epoch;
            r.epoch_bounds_ok = counts.dual_updates <= bounds.max_dual_updates &&
                                counts.max_loops_per_epoch <= bounds.max_loops_per_epoch;
        }
        if (plan.verify_reruns) {
            auto again = make_policy(w.policy, inst, fluid, cfg, plan.etc);
            EpisodeTrace second = run_episode(inst, *again, r.seed);
            r.rerun_identical =
                second.audit.digest == trace.audit.digest && second.total_revenue == trace.total_revenue;
        }
        r.ok = true;
    } catch (const std::exception& e) {
        r.ok = false;
        r.error = e.what();
    }
    r.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
    return r;
}

SummaryRow summarize(const std::string& policy, long T, const std::vector<const EpisodeResult*>& eps,
                     double bound) {
    SummaryRow row;
    row.policy = policy;
    row.T = T;
    std::vector<double> loss, rev, shut, wall;
    for (const auto* e : eps) {
        wall.push_back(e->wall_ms);
        if (!e->ok) continue;
        loss.push_back(e->loss);
        rev.push_back(e->revenue);
        shut.push_back(static_cast<double>(e->shutoff));
    }
    row.count = static_cast<int>(loss.size());
    row.wall_ms = pairwise_sum(wall.data(), wall.size());
    if (loss.empty()) {
        row.mean_loss = row.stderr_loss = row.mean_revenue = row.mean_shutoff = row.mean_regret = std::nan("");
        return row;
    }
    const double n = static_cast<double>(loss.size());
    row.mean_loss = pairwise_sum(loss.data(), loss.size()) / n;
    row.mean_revenue = pairwise_sum(rev.data(), rev.size()) / n;
    row.mean_shutoff = pairwise_sum(shut.data(), shut.size()) / n;
    row.mean_regret = bound - row.mean_revenue;
    if (loss.size() > 1) {
        std::vector<double> sq;
        for (double l : loss) sq.push_back((l - row.mean_loss) * (l - row.mean_loss));
        row.stderr_loss = std::sqrt(pairwise_sum(sq.data(), sq.size()) / (n - 1)) / std::sqrt(n);
    }
    return row;
}

} // namespace

BenchSummary run_bench(const BenchPlan& plan) {
    plan.validate();
    const auto start = std::chrono::steady_clock::now();
    BenchSummary out;
    FluidSolution fluid = solve_fluid(plan.instance);
    out.fluid_value = fluid.value;
    if (std::find(plan.policies.begin(), plan.policies.end(), "pdnrm") != plan.policies.end())
        for (long T : plan.T_grid) out.pdnrm_configs.emplace(T, resolve_config(plan.pdnrm, plan.instance.with_horizon(T)));

    std::vector<WorkItem> work;
    for (long T : plan.T_grid)
        for (const auto& p : plan.policies)
            for (int r = 0; r < plan.replications_for(T); ++r) work.push_back({p, T, r});
    out.episodes.resize(work.size());

    const unsigned hw = std::max(1u, std::thread::hardware_concurrency());
    const unsigned nthreads =
        std::min<unsigned>(plan.threads > 0 ? static_cast<unsigned>(plan.threads) : hw, static_cast<unsigned>(work.size()));
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i = next++; i < work.size(); i = next++)
            out.episodes[i] = run_one(plan, work[i], fluid, out.pdnrm_configs);
    };
    if (nthreads <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (unsigned t = 0; t < nthreads; ++t) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }

    // Reduce in (T, policy, replicate) order regardless of completion order.
    for (long T : plan.T_grid)
        for (const auto& p : plan.policies) {
            std::vector<const EpisodeResult*> eps;
            for (const auto& e : out.episodes)
                if (e.T == T && e.policy == p) eps.push_back(&e);
            std::sort(eps.begin(), eps.end(), [](auto* a, auto* b) { return a->replicate < b->replicate; });
            out.rows.push_back(summarize(p, T, eps, static_cast<double>(T) * fluid.value));
        }
    for (const auto& p : plan.policies) {
        try {
            out.slopes[p] = loglog_slope(out.rows, p);
        } catch (const std::invalid_argument&) {
        }
    }
    out.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();

    if (!plan.output_dir.empty()) {
        std::filesystem::create_directories(plan.output_dir);
        const std::filesystem::path dir = plan.output_dir;
        std::ofstream summary(dir / "summary.csv");
        std::ofstream episodes(dir / "episodes.csv");
        if (!summary || !episodes) throw std::runtime_error("cannot write to " + plan.output_dir);
        write_summary_csv(summary, out.rows);
        write_episodes_csv(episodes, out.episodes);

        json meta;
        meta["git_hash"] = NRM_GIT_HASH;
        meta["plan"] = plan.echo;
        meta["fluid"] = fluid_to_json(fluid);
        meta["loss_denominator"] = "T * phi(d*), the fluid upper bound; losses are conservative";
        meta["seed_rule"] = "seed = mix_seed(base_seed, replicate)";
        meta["shutoff_column"] = "first shutoff period, T+1 if the market never shut";
        for (const auto& [T, cfg] : out.pdnrm_configs) meta["pdnrm_resolved"][std::to_string(T)] = cfg.to_json();
        for (const auto& [p, s] : out.slopes) meta["loglog_slope"][p] = s;
        json errors = json::array();
        long audit_failures = 0, rerun_mismatches = 0, bound_violations = 0;
        for (const auto& e : out.episodes) {
            if (!e.ok)
                errors.push_back({{"policy", e.policy}, {"T", e.T}, {"replicate", e.replicate}, {"error", e.error}});
            if (e.ok && !e.audit.ok()) ++audit_failures;
            if (e.ok && !e.rerun_identical) ++rerun_mismatches;
            if (e.ok && !e.epoch_bounds_ok) ++bound_violations;
        }
        meta["episode_errors"] = errors;
        meta["audit_failures"] = audit_failures;
        meta["rerun_mismatches"] = rerun_mismatches;
        meta["epoch_bound_violations"] = bound_violations;
        meta["wall_ms"] = out.wall_ms;
        std::ofstream(dir / "run.json") << meta.dump(2) << '\n';
    }
    return out;
}

} // namespace nrm
