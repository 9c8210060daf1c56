#include "nrm/checks.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "nrm/baselines.hpp"
#include "nrm/environment.hpp"
#include "nrm/pdnrm.hpp"
#include "nrm/rng.hpp"

namespace nrm {

namespace {

double uniform(Rng& rng, double lo, double hi) { return lo + (hi - lo) * uniform01(rng); }

Vector random_lambda(Rng& rng, const DualSet& set, double margin = 0.0) {
    Vector l(set.lambda_max.size());
    for (Eigen::Index j = 0; j < l.size(); ++j) l(j) = uniform(rng, margin, set.lambda_max(j) - margin);
    return l;
}

PriceVector random_price(Rng& rng, const PriceBox& box, Eigen::Index N) {
    PriceVector p(N);
    for (Eigen::Index i = 0; i < N; ++i) p(i) = uniform(rng, box.lo, box.hi);
    return p;
}

CheckResult finish(CheckResult r, const std::string& extra = {}) {
    r.passed = r.violations == 0;
    std::ostringstream os;
    os << r.violations << "/" << r.trials << " violations, worst " << r.worst;
    if (!extra.empty()) os << "; " << extra;
    r.detail = os.str();
    return r;
}

} // namespace

CheckResult check_fluid_certificate(const Instance& inst, const FluidSolution& sol) {
    CheckResult r;
    r.name = "fluid_certificate";
    r.trials = 3;
    const double feas = (inst.A * sol.d_star - inst.gamma).maxCoeff();
    const double gap = std::abs(dual_Q(inst, sol.lambda_star, 1e-11) - revenue_phi(*inst.model, sol.d_star));
    double slack = 0.0;
    for (Eigen::Index j = 0; j < inst.M(); ++j)
        slack = std::max(slack, std::abs(sol.lambda_star(j) * (inst.gamma(j) - inst.A.row(j).dot(sol.d_star))));
    if (feas > 1e-6) ++r.violations;
    if (gap > 1e-5) ++r.violations;
    if (slack > 1e-5) ++r.violations;
    r.worst = std::max({feas, gap, slack});
    std::ostringstream os;
    os << "Ad*-gamma max " << feas << ", |Q(l*)-phi(d*)| " << gap << ", slackness " << slack;
    return finish(r, os.str());
}

CheckResult check_fluid_grid(const Instance& inst, const FluidSolution& sol, int grid) {
    CheckResult r;
    r.name = "fluid_grid";
    const Eigen::Index N = inst.N();
    const double budget = 4.1e6;
    const int per_axis = std::max(2, std::min(grid, static_cast<int>(std::pow(budget, 1.0 / N))));

    // Bounding box of {d >= 0, Ad <= gamma}; unbounded axes fall back to the largest demand seen.
    Vector hi = Vector::Constant(N, std::numeric_limits<double>::infinity());
    for (Eigen::Index i = 0; i < N; ++i)
        for (Eigen::Index j = 0; j < inst.M(); ++j)
            if (inst.A(j, i) > 0) hi(i) = std::min(hi(i), inst.gamma(j) / inst.A(j, i));
    if (!hi.allFinite()) {
        Vector dmax = inst.model->mean(PriceVector::Constant(N, inst.box.lo));
        for (Eigen::Index i = 0; i < N; ++i)
            if (!std::isfinite(hi(i))) hi(i) = dmax(i);
    }
    const Vector step = hi / per_axis;

    double best = -std::numeric_limits<double>::infinity();
    DemandVector best_d;
    std::vector<int> idx(static_cast<std::size_t>(N), 0);
    DemandVector d(N);
    for (;;) {
        for (Eigen::Index i = 0; i < N; ++i) d(i) = idx[static_cast<std::size_t>(i)] * step(i);
        ++r.trials;
        if ((inst.A * d - inst.gamma).maxCoeff() <= 1e-15 && inst.model->in_domain_of_inverse(d)) {
            PriceVector p = inst.model->inverse(d);
            if (inst.box.contains(p, 1e-12)) {
                const double v = p.dot(d);
                if (v > best) {
                    best = v;
                    best_d = d;
                }
            }
        }
        Eigen::Index k = 0;
        while (k < N && ++idx[static_cast<std::size_t>(k)] > per_axis) idx[static_cast<std::size_t>(k++)] = 0;
        if (k == N) break;
    }
    if (best_d.size() == 0) {
        r.violations = 1;
        return finish(r, "no feasible grid point");
    }
    const double phi_star = revenue_phi(*inst.model, sol.d_star);
    const double dist = (best_d - sol.d_star).lpNorm<Eigen::Infinity>();
    // d* must beat every feasible grid point and sit within a few cells of the best one.
    const double tol = 4 * step.maxCoeff();
    if (best > phi_star + 1e-9) ++r.violations;
    if (dist > tol) ++r.violations;
    r.worst = dist;
    std::ostringstream os;
    os << per_axis << " cells/axis, grid best phi " << best << " vs " << phi_star << ", |d_grid-d*| " << dist
       << " (tol " << tol << ")";
    return finish(r, os.str());
}

CheckResult check_dual_gradient(const Instance& inst, const DualSet& dual_set, int trials, std::uint64_t seed) {
    CheckResult r;
    r.name = "dual_gradient";
    Rng rng(mix_seed(seed, 1));
    const double h = 1e-5;
    for (int t = 0; t < trials; ++t) {
        Vector l = random_lambda(rng, dual_set, h);
        Vector g = grad_Q(inst, l, 1e-11);
        Vector fd(l.size());
        for (Eigen::Index j = 0; j < l.size(); ++j) {
            Vector lp = l, lm = l;
            lp(j) += h;
            lm(j) -= h;
            fd(j) = (dual_Q(inst, lp, 1e-11) - dual_Q(inst, lm, 1e-11)) / (2 * h);
        }
        const double rel = (fd - g).lpNorm<Eigen::Infinity>() / std::max(g.lpNorm<Eigen::Infinity>(), 1e-6);
        ++r.trials;
        r.worst = std::max(r.worst, rel);
        if (rel > 1e-4) ++r.violations;
    }
    return finish(r, "relative error vs central differences, h=1e-5");
}

CheckResult check_dual_curvature(const Instance& inst, const DualSet& dual_set, const RegularityConstants& rc,
                                 int trials, std::uint64_t seed) {
    CheckResult r;
    r.name = "dual_curvature";
    Rng rng(mix_seed(seed, 2));
    const double h = 1e-4;
    const double floor = rc.sigma_A * rc.sigma_A / rc.B_phi - 1e-3;
    r.worst = std::numeric_limits<double>::infinity();
    const Eigen::Index M = inst.M();
    for (int t = 0; t < trials; ++t) {
        Vector l = random_lambda(rng, dual_set, h);
        Matrix H(M, M);
        for (Eigen::Index j = 0; j < M; ++j) {
            Vector lp = l, lm = l;
            lp(j) += h;
            lm(j) -= h;
            H.col(j) = (grad_Q(inst, lp, 1e-11) - grad_Q(inst, lm, 1e-11)) / (2 * h);
        }
        const double asym = (H - H.transpose()).cwiseAbs().maxCoeff();
        Matrix S = (H + H.transpose()) / 2;
        const double min_eig = Eigen::SelfAdjointEigenSolver<Matrix>(S).eigenvalues().minCoeff();
        ++r.trials;
        r.worst = std::min(r.worst, min_eig);
        if (min_eig < floor || asym > 1e-3 * std::max(1.0, S.cwiseAbs().maxCoeff())) ++r.violations;
    }
    std::ostringstream os;
    os << "min eigenvalue floor " << floor;
    return finish(r, os.str());
}

CheckResult check_estimator_bias(const Instance& inst, const RegularityConstants& rc, int trials,
                                 std::uint64_t seed) {
    CheckResult r;
    r.name = "estimator_bias";
    Rng rng(mix_seed(seed, 3));
    const Eigen::Index N = inst.N();
    const DemandModel& model = *inst.model;
    ExpectedDemandEnvironment env(model);
    KnownParameters known = KnownParameters::from(inst);
    const PriceBox inner = inst.box.shrink(0.01 * inst.box.width());
    const PdNrmConstants c = constants_tuned(N, inst.T);
    double worst = 0.0;
    for (int t = 0; t < trials; ++t) {
        GradEstParams params;
        params.p = random_price(rng, inner, N);
        params.lambda = Vector::Zero(inst.M());
        params.n = t % 2 == 0 ? 10000 : 1000000;
        params.kappa1 = c.kappa1;
        params.kappa2 = c.kappa2;
        params.kappa3 = c.kappa3;
        GradEstOutput out = grad_est(env, known, params);
        const double u = out.u;
        const DemandVector D = model.mean(params.p);
        const Matrix J = model.jacobian(params.p);
        const Vector gf = grad_f(model, params.p);
        const double eD = (out.D_hat - D).lpNorm<Eigen::Infinity>() / (2 * rc.L_D * u * u);
        double eJ = 0.0;
        for (Eigen::Index i = 0; i < N; ++i) eJ = std::max(eJ, (out.J_hat.col(i) - J.col(i)).norm() / (0.5 * rc.L_D * u));
        const double ef = (out.gradf_hat - gf).norm() / (rc.B_f * u * std::sqrt(double(N)) / 2 + 1e-9);
        const double e = std::max({eD, eJ, ef});
        worst = std::max(worst, e);
        ++r.trials;
        if (e > 1.0) ++r.violations;
    }
    r.worst = worst;
    return finish(r, "worst error as a fraction of its bound");
}

CheckResult check_balancing_sandwich(const Instance& inst, const RegularityConstants& rc, const DualSet& dual_set,
                                     int trials, std::uint64_t seed) {
    CheckResult r;
    r.name = "balancing_sandwich";
    Rng rng(mix_seed(seed, 4));
    const Eigen::Index N = inst.N();
    const DemandModel& model = *inst.model;
    ExpectedDemandEnvironment env(model);
    KnownParameters known = KnownParameters::from(inst);
    const PriceBox region = inst.box.shrink(0.05 * inst.box.width());
    const PdNrmConstants c = constants_tuned(N, inst.T);
    const double Nd = static_cast<double>(N);
    const double lg = std::log(2 * Nd * inst.T);
    const double kappa3 = 4 * rc.d_hi * rc.L_D * c.kappa1 * std::sqrt(Nd * Nd * Nd * lg) + 3 * rc.L_D * c.kappa1 * c.kappa1;
    long accepted = 0;
    double worst = -std::numeric_limits<double>::infinity();
    for (int t = 0; t < trials; ++t) {
        GradEstParams params;
        params.p = random_price(rng, region, N);
        params.lambda = random_lambda(rng, dual_set);
        if (t % 4 == 1) params.lambda(t % inst.M()) = 0.0;
        params.n = static_cast<long>(std::exp(uniform(rng, std::log(1e3), std::log(1e7))));
        params.n = std::max<long>(params.n, 4 * N);
        params.kappa1 = c.kappa1;
        params.kappa2 = c.kappa2;
        params.kappa3 = kappa3;
        GradEstOutput out = grad_est(env, known, params);
        ++r.trials;
        if (!out.balancing_feasible) continue;
        ++accepted;
        const DemandVector avg = (model.mean(params.p) + model.mean(out.tilde_p)) / 2;
        const double sn = std::sqrt(static_cast<double>(params.n));
        bool bad = false;
        for (Eigen::Index j = 0; j < inst.M(); ++j) {
            const double use = inst.A.row(j).dot(avg);
            const double up = inst.gamma(j) + 2 * kappa3 / sn;
            const double lj = std::min(1.0, params.lambda(j));
            const double lo = lj > 0 ? inst.gamma(j) - c.kappa2 / (lj * sn) - 2 * kappa3 / sn
                                     : -std::numeric_limits<double>::infinity();
            worst = std::max({worst, use - up, lo - use});
            if (use > up || use < lo) bad = true;
        }
        if (bad) ++r.violations;
    }
    r.worst = worst;
    std::ostringstream os;
    os << accepted << " accepted, kappa3 " << kappa3 << ", worst margin is max(use-upper, lower-use)";
    return finish(r, os.str());
}

CheckResult check_pl(const Instance& inst, const RegularityConstants& rc, const DualSet& dual_set, int trials,
                     std::uint64_t seed, double tol) {
    CheckResult r;
    r.name = "pl_and_decay";
    Rng rng(mix_seed(seed, 5));
    const double s = rc.sigma_D * rc.sigma_D * rc.sigma_phi;
    double worst = -std::numeric_limits<double>::infinity();
    for (int t = 0; t < trials; ++t) {
        Vector l = random_lambda(rng, dual_set);
        PriceVector p = random_price(rng, inst.box, inst.N());
        InnerMax inner = solve_inner_max(inst, l, 1e-11);
        const double Lstar = lagrangian_L(inst, l, inner.p);
        const double L = lagrangian_L(inst, l, p);
        const double pl = s * (Lstar - L) - 0.5 * grad_p_lagrangian(inst, l, p).squaredNorm();
        const double decay = L - (Lstar - s / 2 * (p - inner.p).squaredNorm());
        worst = std::max({worst, pl, decay});
        ++r.trials;
        if (pl > tol || decay > tol) ++r.violations;
    }
    r.worst = worst;
    return finish(r, "worst is the largest excess over either inequality");
}

CheckResult check_demand_model(const Instance& inst, int trials, std::uint64_t seed) {
    CheckResult r;
    r.name = "demand_model";
    Rng rng(mix_seed(seed, 6));
    const DemandModel& model = *inst.model;
    for (int t = 0; t < trials; ++t) {
        PriceVector p = random_price(rng, inst.box, inst.N());
        DemandVector d = model.mean(p);
        const double round_trip = (model.inverse(d) - p).lpNorm<Eigen::Infinity>() / p.lpNorm<Eigen::Infinity>();
        const double max_eig = Eigen::SelfAdjointEigenSolver<Matrix>(model.hessian_phi(d)).eigenvalues().maxCoeff();
        ++r.trials;
        r.worst = std::max(r.worst, round_trip);
        if (round_trip > 1e-8 || !(max_eig < 0)) ++r.violations;
    }
    return finish(r, "inverse round trip and concavity of phi");
}

CheckResult check_simulator(const Instance& inst, const FluidSolution& sol, long horizon, int seeds,
                            std::uint64_t seed) {
    CheckResult r;
    r.name = "simulator";
    Instance run = inst.with_horizon(horizon);
    const PdNrmConfig cfg = resolve_config(PdNrmSettings{}, run);
    const EtcConfig etc;
    std::ostringstream problems;
    for (const std::string name : {"pdnrm", "clairvoyant", "etc"}) {
        for (int k = 0; k < seeds; ++k) {
            const std::uint64_t s = mix_seed(seed, static_cast<std::uint64_t>(k));
            std::unique_ptr<Policy> a, b;
            if (name == "pdnrm") {
                a = dual_opt_policy(run, cfg);
                b = dual_opt_policy(run, cfg);
            } else if (name == "clairvoyant") {
                a = clairvoyant_policy(run, sol);
                b = clairvoyant_policy(run, sol);
            } else {
                a = explore_then_commit_policy(run, etc);
                b = explore_then_commit_policy(run, etc);
            }
            EpisodeTrace t1 = run_episode(run, *a, s);
            EpisodeTrace t2 = run_episode(run, *b, s);
            ++r.trials;
            bool bad = false;
            if (!t1.audit.ok()) {
                bad = true;
                problems << name << " audit failed; ";
            }
            if (t1.audit.digest != t2.audit.digest || t1.total_revenue != t2.total_revenue) {
                bad = true;
                problems << name << " rerun differs; ";
            }
            if (name == "pdnrm") {
                EpochCounts n = count_epochs(t1.events);
                EpochBounds bnd = epoch_bounds(cfg, run.T);
                if (n.dual_updates > bnd.max_dual_updates || n.max_loops_per_epoch > bnd.max_loops_per_epoch) {
                    bad = true;
                    problems << "pdnrm epoch bound exceeded; ";
                }
            }
            if (bad) ++r.violations;
        }
    }
    return finish(r, problems.str());
}

std::vector<CheckResult> run_checks(const Instance& inst, const CheckOptions& options) {
    inst.validate();
    std::vector<CheckResult> out;
    const FluidSolution sol = solve_fluid(inst);
    const RegularityConstants rc =
        estimate_regularity(*inst.model, inst.box, inst.A, inst.gamma, NoiseMode::None, options.regularity_grid);
    const DualSet set = default_dual_set(inst);
    out.push_back(check_fluid_certificate(inst, sol));
    out.push_back(check_fluid_grid(inst, sol, options.fluid_grid));
    out.push_back(check_dual_gradient(inst, set, 10, options.seed));
    out.push_back(check_dual_curvature(inst, set, rc, 5, options.seed));
    out.push_back(check_estimator_bias(inst, rc, 20, options.seed));
    out.push_back(check_balancing_sandwich(inst, rc, set, 100, options.seed));
    out.push_back(check_pl(inst, rc, set, 100, options.seed));
    out.push_back(check_demand_model(inst, 100, options.seed));
    const long horizon = options.sim_horizon > 0 ? options.sim_horizon : inst.T;
    out.push_back(check_simulator(inst, sol, horizon, 2, options.seed));
    return out;
}

} // namespace nrm
