#include <doctest.h>

#include <cmath>

#include "nrm/environment.hpp"
#include "nrm/pdnrm.hpp"
#include "nrm/rng.hpp"

using namespace nrm;
using nlohmann::json;

namespace {

Vector v2(double a, double b) { return (Vector(2) << a, b).finished(); }

// Horizon-independent log slope of x(2N)/x(N).
double n_exponent(double (*f)(long), long N) { return std::log2(f(2 * N) / f(N)); }

double tuned_n0_at(long N) { return static_cast<double>(constants_tuned(N, 1000000 / N).n0); }
double tuned_k3_at(long N) { return constants_tuned(N, 1000000 / N).kappa3; }
double tuned_k6_at(long N) { return constants_tuned(N, 1000).kappa6; }

PdNrmConfig tuned_config(const Instance& inst, json extra = json::object()) {
    json j = {{"mode", "tuned"}};
    j.update(extra);
    return resolve_config(settings_from_json(j), inst);
}

} // namespace

TEST_CASE("tuned constants") {
    PdNrmConstants c = constants_tuned(2, 100000);
    CHECK(c.n0 == 239);
    CHECK(c.kappa1 == doctest::Approx(3.93187).epsilon(1e-5));
    CHECK(c.kappa6 == doctest::Approx(std::sqrt(2.0)));
    CHECK(c.eta1 == 1.0);
    CHECK(c.eta2 == 1.0);
    CHECK(c.mu == 1.0);
    CHECK(c.kappa2 * c.kappa2 == doctest::Approx(c.kappa5).epsilon(1e-14));
    CHECK(c.kappa3 == doctest::Approx(tuned_kappa3(c.kappa1, 2, 100000)));
    CHECK(c.contraction == 0.5);
    // n0 never drops below 4N.
    CHECK(constants_tuned(1, 2).n0 == 4);
    CHECK_THROWS_AS(constants_tuned(0, 10), std::invalid_argument);
}

TEST_CASE("tuned constants follow the stated asymptotic orders") {
    // NT held fixed so only the N power moves.
    CHECK(n_exponent(tuned_n0_at, 64) == doctest::Approx(4.0).epsilon(0.01));
    const double k3 = n_exponent(tuned_k3_at, 256);
    CHECK(k3 > 2.3);
    CHECK(k3 < 2.55);
    CHECK(n_exponent(tuned_k6_at, 8) == doctest::Approx(0.5));
    // Growth in T is polylogarithmic.
    const double r = static_cast<double>(constants_tuned(2, 100000000).n0) / constants_tuned(2, 10000).n0;
    CHECK(r < 4.0);
    CHECK(r > 1.0);
}

TEST_CASE("theory constants") {
    Instance inst = reference_instance(100000);
    PdNrmConfig cfg = resolve_config(settings_from_json({{"mode", "theory"}}), inst);
    const auto& c = cfg.c;
    for (double v : {c.kappa1, c.kappa2, c.kappa3, c.kappa5, c.kappa6, c.eta1, c.eta2, c.mu}) CHECK(v > 0);
    REQUIRE(c.kappa4.has_value());
    CHECK(*c.kappa4 > 0);
    CHECK(c.n0 >= 8);
    CHECK(c.kappa2 * c.kappa2 == doctest::Approx(c.kappa5).epsilon(1e-12));
    CHECK(c.contraction > 0);
    CHECK(c.contraction < 1);

    RegularityConstants rc =
        estimate_regularity(*inst.model, inst.box, inst.A, inst.gamma, inst.noise, 101);
    CHECK(c.eta1 == doctest::Approx(1.0 / (8 * (rc.B_f + rc.B_A * rc.B_J * cfg.dual_set.lambda_bar()))));
    CHECK(c.eta2 == doctest::Approx(rc.sigma_phi / (rc.B_A * rc.B_A)));
    CHECK(c.mu == doctest::Approx(rc.sigma_A * rc.sigma_A / rc.B_phi));

    // Polylogarithmic, not polynomial, growth in T.
    PdNrmConstants a = constants_theory(inst, rc, 10000, cfg.dual_set, cfg.price_margin);
    PdNrmConstants b = constants_theory(inst, rc, 100000000, cfg.dual_set, cfg.price_margin);
    CHECK(static_cast<double>(b.n0) / a.n0 < 30);
    CHECK(b.kappa3 / a.kappa3 < 30);
    CHECK(b.kappa6 == doctest::Approx(a.kappa6));

    RegularityConstants zero = rc;
    zero.sigma_D = 0;
    CHECK_THROWS_AS(constants_theory(inst, zero, 1000, cfg.dual_set, cfg.price_margin), std::invalid_argument);
}

TEST_CASE("config ingestion") {
    Instance inst = reference_instance(100000);
    PdNrmConfig cfg = tuned_config(inst);
    CHECK(cfg.lambda0 == cfg.dual_set.center());
    CHECK_FALSE(cfg.warm_start);
    CHECK(cfg.price_margin == doctest::Approx(0.21));
    CHECK(cfg.region.lo == doctest::Approx(1.01));

    PdNrmConfig o = tuned_config(inst, {{"lambda_max", {4, 2}}, {"lambda0", {1.7, 0}}, {"contraction", 0.9},
                                        {"warm_start", true}, {"n0", 100}});
    CHECK(o.dual_set.lambda_max == v2(4, 2));
    CHECK(o.lambda0 == v2(1.7, 0));
    CHECK(o.c.contraction == 0.9);
    CHECK(o.c.n0 == 100);
    CHECK(o.c.kappa1 == doctest::Approx(std::pow(100.0, 0.25)));
    CHECK(o.c.kappa3 == doctest::Approx(tuned_kappa3(o.c.kappa1, 2, 100000)));
    CHECK(o.warm_start);

    PdNrmSettings s = settings_from_json({{"mode", "tuned"}, {"kappa5", 3.0}, {"lambda_max", {4, 2}}});
    PdNrmSettings back = settings_from_json(settings_to_json(s));
    CHECK(back.kappa5 == s.kappa5);
    CHECK(*back.lambda_max == *s.lambda_max);
    CHECK(tuned_config(inst, {{"kappa5", 3.0}}).c.kappa2 == doctest::Approx(std::sqrt(3.0)));

    auto bad = [&](json j) { CHECK_THROWS_AS(resolve_config(settings_from_json(j), inst), std::invalid_argument); };
    bad({{"mode", "tuned"}, {"kappa7", 1}});
    bad({{"mode", "fancy"}});
    bad({{"mode", "tuned"}, {"kappa2", 1}});
    bad({{"mode", "theory"}, {"n0", 100}});
    bad({{"mode", "explicit"}, {"n0", 100}});
    bad({{"mode", "tuned"}, {"lambda0", {9, 0}}, {"lambda_max", {4, 2}}});
    bad({{"mode", "tuned"}, {"contraction", 1.0}});
    bad({{"mode", "tuned"}, {"n0", 3}});
    bad({{"mode", "tuned"}, {"n0", "many"}});

    json ex = {{"mode", "explicit"}, {"n0", 50}, {"kappa1", 2}, {"kappa2", 5}, {"kappa3", 10}, {"kappa5", 1},
               {"kappa6", 1}, {"eta1", 1}, {"eta2", 1}, {"mu", 1}};
    PdNrmConfig e = resolve_config(settings_from_json(ex), inst);
    CHECK(e.c.kappa2 == 5);
    CHECK(e.to_json()["mode"] == "explicit");
}

TEST_CASE("demand balancing") {
    Matrix A(2, 2);
    A << 1, 1, 0, 2;
    const Vector gamma = v2(0.1, 0.1);
    const PriceBox box{0.8, 5.0};
    Matrix J(2, 2);
    J << -0.1, 0.02, 0.02, -0.08;
    const PriceVector p = v2(2.0, 2.0);

    SUBCASE("already feasible") {
        BalanceResult r = demand_balance(v2(0.05, 0.04), J, p, v2(1, 0), 10000, gamma, A, 4, 0.5, 500, box);
        CHECK(r.feasible);
        CHECK(r.sweeps == 0);
        CHECK(r.tilde_p == p);
    }
    SUBCASE("contradictory constraints fall back to p") {
        BalanceResult r = demand_balance(v2(0.5, 0.4), J, p, v2(1, 1), 10000, gamma, A, 4, 1e-6, 1e-6, box);
        CHECK_FALSE(r.feasible);
        CHECK(r.tilde_p == p);
    }
    SUBCASE("correction stays local and meets the linearized constraints") {
        const long n = 10000;
        const double k1 = 8, k2 = 0.01, k3 = 0.5;
        const DemandVector D = v2(0.09, 0.04);
        BalanceResult r = demand_balance(D, J, p, v2(1, 1), n, gamma, A, k1, k2, k3, box);
        REQUIRE(r.feasible);
        CHECK(r.sweeps > 0);
        CHECK((r.tilde_p - p).lpNorm<Eigen::Infinity>() <= k1 * std::pow(double(n), -0.25) + 1e-12);
        CHECK(box.contains(r.tilde_p));
        Vector use = A * (D + 0.5 * J * (r.tilde_p - p));
        for (int j = 0; j < 2; ++j) {
            CHECK(use(j) <= gamma(j) + k3 / 100 + 1e-9);
            CHECK(use(j) >= gamma(j) - k2 / 100 - k3 / 100 - 1e-9);
        }
    }
}

TEST_CASE("prox dual step") {
    DualSet set{v2(10, 10)};
    CHECK(prox_dual_step(v2(1, 1), v2(0, 0), 1, 1, set) == v2(0.5, 0.5));
    CHECK(prox_dual_step(v2(0, 0), v2(-1, 2), 1, 1, set) == v2(0.5, 0));

    // Brute-force minimization over the box.
    const Vector ls = v2(1.3, 0.2), g = v2(0.4, -0.7);
    const double mu = 0.3, eta = 0.8;
    DualSet small{v2(2, 1)};
    auto obj = [&](const Vector& l) { return g.dot(l) + mu / 2 * l.squaredNorm() + (l - ls).squaredNorm() / (2 * eta); };
    const Vector x = prox_dual_step(ls, g, mu, eta, small);
    Rng rng(5);
    double best = obj(x);
    for (int k = 0; k < 1000000; ++k) {
        Vector l = v2(2 * uniform01(rng), uniform01(rng));
        best = std::min(best, obj(l));
    }
    CHECK(obj(x) <= best + 1e-8);
}

TEST_CASE("gradient estimation") {
    Instance inst = reference_instance(100000, NoiseMode::None);
    KnownParameters known = KnownParameters::from(inst);
    ExpectedDemandEnvironment env(*inst.model);
    RegularityConstants rc = estimate_regularity(*inst.model, inst.box, inst.A, inst.gamma, NoiseMode::None, 101);
    PdNrmConstants c = constants_tuned(2, inst.T);

    SUBCASE("step size is capped by the distance to the box edge") {
        GradEstOutput out = grad_est(env, known, {v2(0.85, 3.0), v2(1, 0), 10000, c.kappa1, c.kappa2, c.kappa3});
        CHECK(out.u == doctest::Approx(0.05));
        GradEstOutput mid = grad_est(env, known, {v2(3.0, 3.0), v2(1, 0), 10000, c.kappa1, c.kappa2, c.kappa3});
        CHECK(mid.u == doctest::Approx(std::sqrt(2.0) / 10));
        CHECK(mid.periods_consumed == 10000);
        CHECK(mid.complete);
    }
    SUBCASE("noiseless bias bounds") {
        Rng rng(31);
        for (int k = 0; k < 20; ++k) {
            PriceVector p = v2(0.85 + 4.1 * uniform01(rng), 0.85 + 4.1 * uniform01(rng));
            const long n = k % 2 ? 1000000 : 10000;
            GradEstOutput out = grad_est(env, known, {p, v2(0.5, 0.5), n, c.kappa1, c.kappa2, c.kappa3});
            const double u = out.u;
            CHECK((out.D_hat - inst.model->mean(p)).lpNorm<Eigen::Infinity>() <= 2 * rc.L_D * u * u);
            Matrix J = inst.model->jacobian(p);
            for (int i = 0; i < 2; ++i) CHECK((out.J_hat.col(i) - J.col(i)).norm() <= 0.5 * rc.L_D * u);
            CHECK((out.gradf_hat - grad_f(*inst.model, p)).norm() <= rc.B_f * u * std::sqrt(2.0) / 2 + 1e-9);
        }
    }
    SUBCASE("too short to perturb") {
        GradEstOutput out = grad_est(env, known, {v2(2, 2), v2(1, 0), 7, c.kappa1, c.kappa2, c.kappa3});
        CHECK(out.balancing == "skipped");
        CHECK(out.periods_consumed == 7);
        CHECK(out.tilde_p == v2(2, 2));
    }
    SUBCASE("truncation mid-routine") {
        GradEstimator est(known, {v2(2, 2), v2(1, 0), 1000, c.kappa1, c.kappa2, c.kappa3});
        auto req = est.next_request();
        REQUIRE(req);
        CHECK(req->periods == 125);
        est.record({inst.model->mean(req->price), 40});
        CHECK(est.done());
        CHECK_FALSE(est.output().complete);
        CHECK(est.output().periods_consumed == 40);
    }
}

TEST_CASE("primal optimization") {
    Instance inst = reference_instance(1000000, NoiseMode::None);
    KnownParameters known = KnownParameters::from(inst);
    ExpectedDemandEnvironment env(*inst.model);

    auto drive = [&](PrimalOptimizer& po) {
        long clock = 0;
        while (auto req = po.next_request()) {
            po.record(env.commit(req->price, req->periods));
            clock += req->periods;
        }
        return clock;
    };

    SUBCASE("stopping rule") {
        PdNrmConfig cfg = tuned_config(inst, {{"n0", 8}, {"kappa5", 100.0}});
        std::vector<AlgorithmEvent> log;
        PrimalOptimizer po(known, cfg, v2(0, 0), 1.0, cfg.region.center(2), 0, &log, nullptr);
        drive(po);
        // n = 8, 32, 128: the third loop is the first longer than 100
        REQUIRE(log.size() == 3);
        CHECK(log.back().n == 128);
        CHECK(log[1].n == 32);
        CHECK(po.complete());
    }
    SUBCASE("unconstrained revenue maximum") {
        PdNrmConfig cfg = tuned_config(inst, {{"n0", 10000}, {"kappa5", 4e6}, {"contraction", 0.99}, {"eta1", 3.0}});
        PrimalOptimizer po(known, cfg, v2(0, 0), 1.0, cfg.region.center(2), 0, nullptr, nullptr);
        drive(po);
        // the optimizer lives on the shrunk region, so the oracle searches the same set
        const double lo = cfg.region.lo, w = cfg.region.hi - cfg.region.lo;
        double best = 0;
        for (int i = 0; i <= 400; ++i)
            for (int k = 0; k <= 400; ++k)
                best = std::max(best, revenue_f(*inst.model, v2(lo + w * i / 400, lo + w * k / 400)));
        CHECK(revenue_f(*inst.model, po.p_hat()) >= best - 1e-3);
    }
    SUBCASE("iterates approach the Lagrangian maximizer") {
        const Vector lstar = v2(1.36386938349037, 0);
        const PriceVector target = solve_inner_max(inst, lstar).p;
        PdNrmConfig cfg = tuned_config(inst, {{"n0", 10000}, {"kappa5", 1e6}, {"contraction", 0.98}, {"eta1", 3.0}});
        std::vector<AlgorithmEvent> log;
        PrimalOptimizer po(known, cfg, lstar, 1.0, cfg.region.center(2), 0, &log, nullptr);
        drive(po);
        REQUIRE(log.size() > 10);
        double prev = (log.front().price - target).norm();
        for (const auto& e : log) {
            const double d = (e.price - target).norm();
            CHECK(d <= prev + 1e-3);
            prev = std::min(prev, d);
        }
        CHECK((po.next_start() - target).norm() < 0.1 * (log.front().price - target).norm());
    }
}

TEST_CASE("full policy bookkeeping") {
    Instance inst = reference_instance(200000);
    PdNrmConfig cfg = tuned_config(inst, {{"lambda_max", {4, 2}}, {"contraction", 0.9}});
    Rng rng(77);
    SampledDemandEnvironment env(*inst.model, rng, inst.noise);
    DualOptimizer algo(KnownParameters::from(inst), cfg);
    run_pdnrm(algo, env, inst.T);
    CHECK(algo.clock() == inst.T);

    long periods = 0;
    double prev_eps = std::numeric_limits<double>::infinity();
    int epoch = -1;
    long prev_n = 0;
    const double ratio = 1 / std::sqrt(1 + cfg.c.mu * cfg.c.eta2);
    for (const auto& e : algo.events()) {
        if (e.kind == AlgorithmEvent::Kind::GradEst) {
            periods += e.periods;
            if (e.epoch == epoch) CHECK(e.n > prev_n);
            epoch = e.epoch;
            prev_n = e.n;
            if (e.balancing == "feasible")
                CHECK((e.balanced_price - e.price).lpNorm<Eigen::Infinity>() <=
                      cfg.c.kappa1 * std::pow(double(e.n), -0.25) + 1e-12);
            CHECK(inst.box.contains(e.balanced_price));
        } else if (e.kind == AlgorithmEvent::Kind::DualUpdate) {
            CHECK(cfg.dual_set.contains(e.lambda_next));
            if (std::isfinite(prev_eps)) CHECK(e.eps_bar == doctest::Approx(prev_eps * ratio));
            prev_eps = e.eps_bar;
        }
    }
    CHECK(periods == inst.T);
    EpochCounts n = count_epochs(algo.events());
    EpochBounds b = epoch_bounds(cfg, inst.T);
    CHECK(n.dual_updates >= 1);
    CHECK(n.dual_updates <= b.max_dual_updates);
    CHECK(n.max_loops_per_epoch <= b.max_loops_per_epoch);
}

TEST_CASE("theory constants still run to the horizon") {
    Instance inst = reference_instance(5000);
    PdNrmConfig cfg = resolve_config(settings_from_json({{"mode", "theory"}}), inst);
    Rng rng(3);
    SampledDemandEnvironment env(*inst.model, rng, inst.noise);
    DualOptimizer algo(KnownParameters::from(inst), cfg);
    run_pdnrm(algo, env, inst.T);
    CHECK(algo.clock() == inst.T);
    CHECK(algo.dual_updates() == 0);
}

TEST_CASE("stochastic estimates center on the noiseless bias") {
    Instance inst = reference_instance(100000);
    PdNrmConfig cfg = tuned_config(inst, {{"lambda_max", {4, 2}}, {"contraction", 0.9}});
    RegularityConstants rc = estimate_regularity(*inst.model, inst.box, inst.A, inst.gamma, NoiseMode::None, 101);
    std::vector<double> err0, err1, bias;
    for (int rep = 0; rep < 50; ++rep) {
        Rng rng(mix_seed(1234, rep));
        SampledDemandEnvironment env(*inst.model, rng, inst.noise);
        DualOptimizer algo(KnownParameters::from(inst), cfg);
        run_pdnrm(algo, env, inst.T);
        for (const auto& e : algo.events()) {
            if (e.kind != AlgorithmEvent::Kind::GradEst || e.balancing == "truncated" || e.balancing == "skipped")
                continue;
            DemandVector diff = e.d_hat - inst.model->mean(e.price);
            err0.push_back(diff(0));
            err1.push_back(diff(1));
            bias.push_back(2 * rc.L_D * e.u * e.u);
        }
    }
    REQUIRE(err0.size() > 100);
    auto mean = [](const std::vector<double>& x) {
        double s = 0;
        for (double v : x) s += v;
        return s / x.size();
    };
    auto se = [&](const std::vector<double>& x) {
        const double m = mean(x);
        double s = 0;
        for (double v : x) s += (v - m) * (v - m);
        return std::sqrt(s / (x.size() - 1) / x.size());
    };
    const double b = mean(bias);
    CHECK(std::abs(mean(err0)) <= b + 4 * se(err0));
    CHECK(std::abs(mean(err1)) <= b + 4 * se(err1));
}
