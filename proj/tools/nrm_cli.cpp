#include <CLI11.hpp>

#include <fstream>
#include <iostream>

#include "nrm/bench.hpp"
#include "nrm/checks.hpp"

using nlohmann::json;

namespace {

// Exit codes: 0 ok, 1 invariant failure, 2 malformed input, 3 runtime error.
constexpr int kInvariant = 1;
constexpr int kMalformed = 2;
constexpr int kRuntime = 3;

json read_json(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::invalid_argument("cannot open " + path);
    try {
        return json::parse(in);
    } catch (const json::exception& e) {
        throw std::invalid_argument(path + ": " + e.what());
    }
}

std::vector<double> to_std(const nrm::Vector& v) { return {v.data(), v.data() + v.size()}; }

int cmd_fluid(const std::string& path, double tol) {
    nrm::Instance inst = nrm::load_instance(path);
    nrm::FluidSolution sol = nrm::solve_fluid(inst, tol);
    json j = nrm::fluid_to_json(sol);
    j["upper_bound"] = nrm::fluid_upper_bound(inst, sol);
    std::cout << j.dump(2) << '\n';
    return 0;
}

int cmd_run(const std::string& path, const std::string& policy, std::uint64_t seed, const std::string& trace,
            const std::string& events, const std::string& config, long T) {
    nrm::Instance inst = nrm::load_instance(path);
    if (T > 0) inst = inst.with_horizon(T);
    nrm::FluidSolution sol = nrm::solve_fluid(inst);
    std::optional<nrm::PdNrmConfig> pd;
    nrm::EtcConfig etc;
    if (policy == "pdnrm") {
        nrm::PdNrmSettings s = config.empty() ? nrm::PdNrmSettings{} : nrm::settings_from_json(read_json(config));
        pd = nrm::resolve_config(s, inst);
    } else if (policy == "etc" && !config.empty()) {
        etc = nrm::etc_config_from_json(read_json(config));
    }
    auto pol = nrm::make_policy(policy, inst, sol, pd ? &*pd : nullptr, etc);

    std::ofstream trace_out;
    nrm::EpisodeOptions opts;
    if (!trace.empty()) {
        trace_out.open(trace);
        if (!trace_out) throw std::runtime_error("cannot write " + trace);
        opts.trace_csv = &trace_out;
    }
    nrm::EpisodeTrace tr = nrm::run_episode(inst, *pol, seed, opts);
    if (!events.empty()) {
        std::ofstream ev(events);
        if (!ev) throw std::runtime_error("cannot write " + events);
        nrm::write_events_jsonl(ev, tr.events);
    }
    json j;
    j["policy"] = policy;
    j["T"] = inst.T;
    j["seed"] = seed;
    j["revenue"] = tr.total_revenue;
    j["loss"] = nrm::percentage_loss(inst, sol, tr);
    j["shutoff_period"] = tr.shutoff_period ? json(*tr.shutoff_period) : json(nullptr);
    j["final_inventory"] = to_std(tr.final_inventory);
    j["digest"] = tr.audit.digest;
    j["audit_ok"] = tr.audit.ok();
    if (policy == "pdnrm") {
        nrm::EpochCounts c = nrm::count_epochs(tr.events);
        j["dual_updates"] = c.dual_updates;
        j["max_loops_per_epoch"] = c.max_loops_per_epoch;
    }
    std::cout << j.dump(2) << '\n';
    return tr.audit.ok() ? 0 : kInvariant;
}

int cmd_bench(const std::string& path, const std::string& out_dir, int threads, const std::vector<double>& T_grid,
              int reps) {
    nrm::BenchPlan plan = nrm::load_plan(path);
    if (!out_dir.empty()) plan.output_dir = out_dir;
    if (threads > 0) plan.threads = threads;
    if (!T_grid.empty()) {
        plan.T_grid.clear();
        for (double t : T_grid) plan.T_grid.push_back(static_cast<long>(t));
        plan.replications_at.clear();
    }
    if (reps > 0) plan.replications = reps;
    plan.validate();
    nrm::BenchSummary s = nrm::run_bench(plan);
    nrm::write_summary_csv(std::cout, s.rows);
    for (const auto& [p, slope] : s.slopes) std::cerr << "loglog slope " << p << ": " << slope << '\n';
    int failed = 0;
    for (const auto& e : s.episodes) {
        if (!e.ok) std::cerr << "episode error " << e.policy << " T=" << e.T << " rep=" << e.replicate << ": " << e.error << '\n';
        if (e.ok && (!e.audit.ok() || !e.rerun_identical || !e.epoch_bounds_ok)) ++failed;
    }
    if (failed) std::cerr << failed << " episodes broke an invariant\n";
    return failed ? kInvariant : 0;
}

int cmd_check(const std::string& path, std::uint64_t seed, long horizon) {
    nrm::Instance inst = nrm::load_instance(path);
    nrm::CheckOptions opts;
    opts.seed = seed;
    opts.sim_horizon = horizon;
    int failed = 0;
    for (const auto& r : nrm::run_checks(inst, opts)) {
        std::cout << (r.passed ? "ok   " : "FAIL ") << r.name << ": " << r.detail << '\n';
        if (!r.passed) ++failed;
    }
    return failed ? kInvariant : 0;
}

int cmd_constants(const std::string& path, const std::string& mode, const std::string& config, long T) {
    nrm::Instance inst = nrm::load_instance(path);
    if (T > 0) inst = inst.with_horizon(T);
    nrm::PdNrmSettings s = config.empty() ? nrm::PdNrmSettings{} : nrm::settings_from_json(read_json(config));
    if (!mode.empty()) s.mode = nrm::parse_constants_mode(mode);
    std::cout << nrm::resolve_config(s, inst).to_json().dump(2) << '\n';
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Blind network revenue management: fluid solver, simulator and benchmark"};
    app.require_subcommand(1);

    std::string instance, policy, trace, events, config, plan, out_dir, mode;
    std::uint64_t seed = 0;
    long T = 0, horizon = 0;
    double tol = 1e-10;
    int threads = 0, reps = 0;
    std::vector<double> T_grid;

    auto* fluid = app.add_subcommand("fluid", "Solve the fluid program and print the certificate");
    fluid->add_option("instance", instance, "instance JSON")->required();
    fluid->add_option("--tol", tol, "solver tolerance");

    auto* run = app.add_subcommand("run", "Simulate one episode");
    run->add_option("instance", instance, "instance JSON")->required();
    run->add_option("policy", policy, "pdnrm | clairvoyant | etc")->required();
    run->add_option("--seed", seed, "episode seed");
    run->add_option("--trace", trace, "per-period CSV output");
    run->add_option("--events", events, "algorithm event log (JSON lines)");
    run->add_option("--config", config, "policy config JSON");
    run->add_option("--T", T, "override the horizon");

    auto* bench = app.add_subcommand("bench", "Run a benchmark plan");
    bench->add_option("plan", plan, "plan JSON")->required();
    bench->add_option("--output-dir", out_dir, "override output_dir");
    bench->add_option("--threads", threads, "worker threads");
    bench->add_option("--T-grid", T_grid, "override the horizons, e.g. --T-grid 1e4 1e5 1e6 1e7");
    bench->add_option("--replications", reps, "override replications");

    auto* check = app.add_subcommand("check", "Run the invariant suite on an instance");
    check->add_option("instance", instance, "instance JSON")->required();
    check->add_option("--seed", seed, "seed for the randomized checks");
    check->add_option("--horizon", horizon, "horizon of the simulator checks (default: instance T)");

    auto* constants = app.add_subcommand("constants", "Print the resolved PD-NRM configuration");
    constants->add_option("instance", instance, "instance JSON")->required();
    constants->add_option("--mode", mode, "theory | tuned | explicit");
    constants->add_option("--config", config, "PD-NRM settings JSON");
    constants->add_option("--T", T, "override the horizon");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : kMalformed;
    }

    try {
        if (*fluid) return cmd_fluid(instance, tol);
        if (*run) return cmd_run(instance, policy, seed, trace, events, config, T);
        if (*bench) return cmd_bench(plan, out_dir, threads, T_grid, reps);
        if (*check) return cmd_check(instance, seed ? seed : 7, horizon);
        if (*constants) return cmd_constants(instance, mode, config, T);
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kMalformed;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kRuntime;
    }
    return 0;
}
