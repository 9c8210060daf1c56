#include "nrm/pdnrm.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>
#include <stdexcept>

namespace nrm {

ConstantsMode parse_constants_mode(const std::string& s) {
    if (s == "theory") return ConstantsMode::Theory;
    if (s == "tuned") return ConstantsMode::Tuned;
    if (s == "explicit") return ConstantsMode::Explicit;
    throw std::invalid_argument("unknown constants mode: " + s);
}

std::string to_string(ConstantsMode mode) {
    switch (mode) {
    case ConstantsMode::Theory: return "theory";
    case ConstantsMode::Tuned: return "tuned";
    case ConstantsMode::Explicit: return "explicit";
    }
    return "?";
}

// ---------------------------------------------------------------- constants

PdNrmConstants constants_theory(const Instance& inst, const RegularityConstants& rc, long T,
                                const DualSet& dual_set, double price_margin) {
    if (T < 2) throw std::invalid_argument("constants_theory: T must be >= 2");
    const double vals[] = {rc.B_D, rc.sigma_D, rc.L_D, rc.B_f,   rc.B_phi, rc.sigma_phi,
                           rc.B_A, rc.sigma_A, rc.B_r, rc.B_J,   rc.d_hi,  rc.gamma_max};
    for (double v : vals)
        if (!(v > 0) || !std::isfinite(v))
            throw std::invalid_argument("constants_theory: regularity constants must be positive");
    if (!(price_margin > 0)) throw std::invalid_argument("constants_theory: price margin must be positive");

    const double N = static_cast<double>(inst.N());
    const double lnT = std::log(static_cast<double>(T));
    const double ln2NT = std::log(2.0 * N * static_cast<double>(T));
    const double lambda_bar = dual_set.lambda_bar();
    const double rho_bar = std::sqrt(N) * (inst.box.width() - 2 * price_margin);
    const double rho_lo = price_margin;
    const double d_bar = rc.d_hi;

    PdNrmConstants c;
    c.eta1 = 1.0 / (8.0 * (rc.B_f + rc.B_A * rc.B_J * lambda_bar));
    c.eta2 = rc.sigma_phi / (rc.B_A * rc.B_A);
    c.mu = rc.sigma_A * rc.sigma_A / rc.B_phi;
    const double k4 = 2.0 * d_bar * std::max(rc.L_D * std::sqrt(N), rc.B_f * std::sqrt(N) + rc.B_r) *
                      std::sqrt(N * ln2NT);
    c.kappa4 = k4;
    const double n0_a = std::pow(1 + rc.B_A * lambda_bar, 4) * std::pow(k4, 4) * lnT * lnT /
                        (rc.B_phi * rc.B_phi * std::pow(rc.B_D, 4) * std::pow(rho_bar, 4));
    const double n0_b = N * N / std::pow(rho_lo, 4);
    const double n0 = std::max({n0_a, n0_b, 4 * N});
    if (n0 > 1e17) throw std::invalid_argument("constants_theory: n0 overflows");
    c.n0 = static_cast<long>(std::ceil(n0));
    c.kappa1 = std::sqrt(8 * rc.B_phi * rc.B_D * rc.B_D * rho_bar * rho_bar /
                         (rc.sigma_phi * rc.sigma_D * rc.sigma_D)) *
               std::pow(static_cast<double>(c.n0), 0.25);
    c.kappa3 = 4 * d_bar * rc.L_D * c.kappa1 * std::sqrt(N * N * N * ln2NT) + 3 * rc.L_D * c.kappa1 * c.kappa1;
    const double me = c.mu * c.eta2;
    c.kappa6 = 2 * (rc.B_phi + lambda_bar * (rc.B_A * d_bar + rc.gamma_max) * std::sqrt(N)) *
               std::pow(1 + me, 1.5) / me;
    const double k5_a = 32 * c.kappa3 * c.kappa3 * c.kappa6 * c.kappa6 * lambda_bar * rc.B_A * lnT * lnT /
                        (c.mu * c.mu * c.eta2 * d_bar * std::sqrt(N));
    const double k5_b = 16 * std::pow(c.kappa1, 4) * c.kappa6 * c.kappa6 * lambda_bar * lambda_bar *
                        std::pow(rc.B_D, 4) * (1 + me) / (std::pow(c.mu, 4) * c.eta2 * c.eta2 * d_bar * d_bar * N);
    c.kappa5 = std::max(k5_a, k5_b);
    c.kappa2 = std::sqrt(c.kappa5);
    c.contraction = 1 - c.eta1 * rc.sigma_D * rc.sigma_D * rc.sigma_phi / 2;
    return c;
}

double tuned_kappa3(double kappa1, long N, long T) {
    const double n = static_cast<double>(N);
    return 8 * kappa1 * std::sqrt(n * n * n * std::log(2.0 * n * static_cast<double>(T))) +
           12 * kappa1 * kappa1;
}

PdNrmConstants constants_tuned(long N, long T) {
    if (N < 1 || T < 2) throw std::invalid_argument("constants_tuned: need N >= 1 and T >= 2");
    const double n = static_cast<double>(N);
    const double L = std::log(n * static_cast<double>(T));
    PdNrmConstants c;
    c.n0 = std::max(static_cast<long>(std::ceil(0.1 * std::pow(n, 4) * L * L)), 4 * N);
    c.kappa1 = std::pow(static_cast<double>(c.n0), 0.25);
    c.kappa5 = (2.0 / 3.0) * 1e-8 * (std::pow(n, 5.5) * L * L * L + std::pow(n, 4) * std::pow(L, 6));
    c.kappa2 = std::sqrt(c.kappa5);
    c.kappa3 = tuned_kappa3(c.kappa1, N, T);
    c.kappa6 = std::sqrt(n);
    c.eta1 = c.eta2 = c.mu = 1.0;
    c.contraction = 0.5;
    return c;
}

// ---------------------------------------------------------------- config

namespace {

std::vector<double> as_std(const Vector& v) { return {v.data(), v.data() + v.size()}; }

Vector json_vector(const nlohmann::json& j, const char* key) {
    if (j.is_number()) return Vector::Constant(1, j.get<double>());
    if (!j.is_array()) throw std::invalid_argument(std::string(key) + " must be a number or array");
    Vector v(static_cast<Eigen::Index>(j.size()));
    for (std::size_t i = 0; i < j.size(); ++i) v(static_cast<Eigen::Index>(i)) = j[i].get<double>();
    return v;
}

} // namespace

void PdNrmConfig::validate(Eigen::Index N, Eigen::Index M) const {
    auto fail = [](const std::string& m) { throw std::invalid_argument("pdnrm config: " + m); };
    if (c.n0 < 4 * N) fail("n0 must be >= 4N");
    for (double v : {c.kappa1, c.kappa2, c.kappa3, c.kappa5, c.kappa6, c.eta1, c.eta2, c.mu})
        if (!(v > 0) || !std::isfinite(v)) fail("constants must be positive and finite");
    if (mode != ConstantsMode::Explicit && std::abs(c.kappa2 * c.kappa2 - c.kappa5) > 1e-9 * c.kappa5)
        fail("kappa2 must equal sqrt(kappa5)");
    if (!(c.contraction > 0 && c.contraction < 1)) fail("contraction must lie in (0, 1)");
    if (dual_set.lambda_max.size() != M || (dual_set.lambda_max.array() <= 0).any())
        fail("lambda_max must have M positive entries");
    if (lambda0.size() != M || !dual_set.contains(lambda0)) fail("lambda0 must lie in Lambda");
    if (!(price_margin > 0) || !(region.hi > region.lo)) fail("price region is empty");
}

nlohmann::json PdNrmConfig::to_json() const {
    nlohmann::json j{{"mode", to_string(mode)},
                     {"n0", c.n0},
                     {"kappa1", c.kappa1},
                     {"kappa2", c.kappa2},
                     {"kappa3", c.kappa3},
                     {"kappa5", c.kappa5},
                     {"kappa6", c.kappa6},
                     {"eta1", c.eta1},
                     {"eta2", c.eta2},
                     {"mu", c.mu},
                     {"contraction", c.contraction},
                     {"lambda_max", as_std(dual_set.lambda_max)},
                     {"lambda_bar", dual_set.lambda_bar()},
                     {"lambda0", as_std(lambda0)},
                     {"price_margin", price_margin},
                     {"price_region", {region.lo, region.hi}},
                     {"warm_start", warm_start}};
    if (c.kappa4) j["kappa4"] = *c.kappa4;
    return j;
}

PdNrmSettings settings_from_json(const nlohmann::json& j) {
    static const std::set<std::string> known = {
        "mode",   "n0",   "kappa1", "kappa2",      "kappa3",     "kappa4",   "kappa5",       "kappa6",
        "eta1",   "eta2", "mu",     "lambda_max",  "lambda0",    "contraction", "warm_start", "price_margin",
        "B_J",    "regularity_grid"};
    if (!j.is_object()) throw std::invalid_argument("pdnrm config must be a JSON object");
    try {
        for (auto it = j.begin(); it != j.end(); ++it)
            if (!known.count(it.key())) throw std::invalid_argument("pdnrm config: unknown key '" + it.key() + "'");
        PdNrmSettings s;
        if (j.contains("mode")) s.mode = parse_constants_mode(j["mode"].get<std::string>());
        if (j.contains("n0")) {
            s.n0 = j["n0"].get<long>();
            if (*s.n0 < 1) throw std::invalid_argument("pdnrm config: n0 must be >= 1");
        }
        auto num = [&](const char* key, std::optional<double>& dst) {
            if (!j.contains(key)) return;
            dst = j[key].get<double>();
            const bool zero_ok = std::string(key) == "price_margin";
            if (!std::isfinite(*dst) || *dst < 0 || (*dst == 0 && !zero_ok))
                throw std::invalid_argument(std::string("pdnrm config: ") + key + " must be positive and finite");
        };
        num("kappa1", s.kappa1);
        num("kappa2", s.kappa2);
        num("kappa3", s.kappa3);
        num("kappa5", s.kappa5);
        num("kappa6", s.kappa6);
        num("eta1", s.eta1);
        num("eta2", s.eta2);
        num("mu", s.mu);
        num("contraction", s.contraction);
        num("price_margin", s.price_margin);
        num("B_J", s.B_J);
        if (j.contains("lambda_max")) s.lambda_max = json_vector(j["lambda_max"], "lambda_max");
        if (j.contains("lambda0")) s.lambda0 = json_vector(j["lambda0"], "lambda0");
        if (j.contains("warm_start")) s.warm_start = j["warm_start"].get<bool>();
        if (j.contains("regularity_grid")) s.regularity_grid = j["regularity_grid"].get<int>();
        return s;
    } catch (const nlohmann::json::exception& e) {
        throw std::invalid_argument(std::string("pdnrm config: ") + e.what());
    }
}

nlohmann::json settings_to_json(const PdNrmSettings& s) {
    nlohmann::json j{{"mode", to_string(s.mode)}, {"warm_start", s.warm_start}};
    auto put = [&](const char* key, const std::optional<double>& v) {
        if (v) j[key] = *v;
    };
    if (s.n0) j["n0"] = *s.n0;
    put("kappa1", s.kappa1);
    put("kappa2", s.kappa2);
    put("kappa3", s.kappa3);
    put("kappa5", s.kappa5);
    put("kappa6", s.kappa6);
    put("eta1", s.eta1);
    put("eta2", s.eta2);
    put("mu", s.mu);
    put("contraction", s.contraction);
    put("price_margin", s.price_margin);
    put("B_J", s.B_J);
    if (s.lambda_max) j["lambda_max"] = as_std(*s.lambda_max);
    if (s.lambda0) j["lambda0"] = as_std(*s.lambda0);
    if (s.mode == ConstantsMode::Theory) j["regularity_grid"] = s.regularity_grid;
    return j;
}

PdNrmConfig resolve_config(const PdNrmSettings& s, const Instance& inst) {
    const Eigen::Index N = inst.N(), M = inst.M();
    PdNrmConfig cfg;
    cfg.mode = s.mode;
    cfg.price_margin = s.price_margin.value_or(0.05 * inst.box.width());
    cfg.region = inst.box.shrink(cfg.price_margin);
    if (s.lambda_max) {
        Vector lm = *s.lambda_max;
        if (lm.size() == 1 && M > 1) lm = Vector::Constant(M, lm(0));
        cfg.dual_set = DualSet{lm};
    } else {
        cfg.dual_set = default_dual_set(inst);
    }

    switch (s.mode) {
    case ConstantsMode::Tuned: {
        if (s.kappa2) throw std::invalid_argument("pdnrm config: kappa2 is sqrt(kappa5) outside explicit mode");
        cfg.c = constants_tuned(N, inst.T);
        if (s.n0) {
            cfg.c.n0 = *s.n0;
            cfg.c.kappa1 = std::pow(static_cast<double>(cfg.c.n0), 0.25);
        }
        if (s.kappa1) cfg.c.kappa1 = *s.kappa1;
        cfg.c.kappa3 = s.kappa3.value_or(tuned_kappa3(cfg.c.kappa1, N, inst.T));
        if (s.kappa5) cfg.c.kappa5 = *s.kappa5;
        cfg.c.kappa2 = std::sqrt(cfg.c.kappa5);
        if (s.kappa6) cfg.c.kappa6 = *s.kappa6;
        if (s.eta1) cfg.c.eta1 = *s.eta1;
        if (s.eta2) cfg.c.eta2 = *s.eta2;
        if (s.mu) cfg.c.mu = *s.mu;
        if (s.contraction) cfg.c.contraction = *s.contraction;
        break;
    }
    case ConstantsMode::Theory: {
        if (s.n0 || s.kappa1 || s.kappa2 || s.kappa3 || s.kappa5 || s.kappa6 || s.eta1 || s.eta2 || s.mu ||
            s.contraction)
            throw std::invalid_argument("pdnrm config: theory mode derives all constants; remove overrides");
        RegularityConstants rc =
            estimate_regularity(*inst.model, inst.box, inst.A, inst.gamma, inst.noise, s.regularity_grid);
        if (s.B_J) rc.B_J = *s.B_J;
        cfg.c = constants_theory(inst, rc, inst.T, cfg.dual_set, cfg.price_margin);
        break;
    }
    case ConstantsMode::Explicit: {
        if (!(s.n0 && s.kappa1 && s.kappa2 && s.kappa3 && s.kappa5 && s.kappa6 && s.eta1 && s.eta2 && s.mu))
            throw std::invalid_argument(
                "pdnrm config: explicit mode needs n0, kappa1, kappa2, kappa3, kappa5, kappa6, eta1, eta2, mu");
        cfg.c.n0 = *s.n0;
        cfg.c.kappa1 = *s.kappa1;
        cfg.c.kappa2 = *s.kappa2;
        cfg.c.kappa3 = *s.kappa3;
        cfg.c.kappa5 = *s.kappa5;
        cfg.c.kappa6 = *s.kappa6;
        cfg.c.eta1 = *s.eta1;
        cfg.c.eta2 = *s.eta2;
        cfg.c.mu = *s.mu;
        cfg.c.contraction = s.contraction.value_or(0.5);
        break;
    }
    }
    cfg.lambda0 = s.lambda0 ? *s.lambda0 : cfg.dual_set.center();
    cfg.warm_start = s.warm_start;
    cfg.validate(N, M);
    return cfg;
}

// ---------------------------------------------------------------- balancing

BalanceResult demand_balance(const DemandVector& D_hat, const Matrix& J_hat, const PriceVector& p,
                             const Vector& lambda, long n, const Vector& gamma, const Matrix& A,
                             double kappa1, double kappa2, double kappa3, const PriceBox& box) {
    const Eigen::Index M = A.rows();
    const double sqn = std::sqrt(static_cast<double>(n));
    const double radius = kappa1 * std::pow(static_cast<double>(n), -0.25);
    // box intersected with the sup-norm ball around p
    const Vector lo_b = (p.array() - radius).max(box.lo).matrix();
    const Vector hi_b = (p.array() + radius).min(box.hi).matrix();

    // Halfspaces g^T x <= h in the variable x = p~.
    std::vector<Vector> G;
    std::vector<double> H;
    for (Eigen::Index j = 0; j < M; ++j) {
        Vector c = 0.5 * J_hat.transpose() * A.row(j).transpose();
        const double base = A.row(j).dot(D_hat) - c.dot(p);  // <a_j, D^ + J^(x - p)/2> = base + c.x
        G.push_back(c);
        H.push_back(gamma(j) + kappa3 / sqn - base);
        if (lambda(j) > 0) {
            const double lower = gamma(j) - kappa2 / (std::min(1.0, lambda(j)) * sqn) - kappa3 / sqn;
            G.push_back(-c);
            H.push_back(-(lower - base));
        }
    }
    const double tol = 1e-9;
    auto worst = [&](const Vector& x) {
        double w = 0.0;
        for (std::size_t k = 0; k < G.size(); ++k) w = std::max(w, G[k].dot(x) - H[k]);
        return w;
    };

    BalanceResult res{p, false, 0};
    Vector x = p.cwiseMax(lo_b).cwiseMin(hi_b);
    if ((x - p).cwiseAbs().maxCoeff() == 0.0 && worst(x) <= tol) {
        res.feasible = true;
        return res;
    }
    for (int sweep = 1; sweep <= 500; ++sweep) {
        for (std::size_t k = 0; k < G.size(); ++k) {
            const double viol = G[k].dot(x) - H[k];
            if (viol <= 0) continue;
            const double nrm2 = G[k].squaredNorm();
            if (nrm2 <= 1e-300) return res;  // constant constraint that cannot be met
            x -= (viol / nrm2) * G[k];
        }
        x = x.cwiseMax(lo_b).cwiseMin(hi_b);
        if (worst(x) <= tol) {
            res.tilde_p = x;
            res.feasible = true;
            res.sweeps = sweep;
            return res;
        }
    }
    res.sweeps = 500;
    return res;
}

Vector prox_dual_step(const Vector& lambda_s, const Vector& g_h, double mu, double eta2,
                      const DualSet& dual_set) {
    return dual_set.clip((lambda_s - eta2 * g_h) / (1 + mu * eta2));
}

// ---------------------------------------------------------------- GradEst

GradEstimator::GradEstimator(const KnownParameters& known, GradEstParams params)
    : known_(known), params_(std::move(params)) {
    const Eigen::Index N = params_.p.size();
    if (N != known_.A.cols()) throw std::invalid_argument("grad_est: price dimension mismatch");
    if (params_.n < 1) throw std::invalid_argument("grad_est: n must be positive");
    if (!known_.box.contains(params_.p, 1e-12)) throw std::invalid_argument("grad_est: p outside the price box");
    const double to_edge = std::min((params_.p.array() - known_.box.lo).minCoeff(),
                                    (known_.box.hi - params_.p.array()).minCoeff());
    out_.u = std::min(std::sqrt(static_cast<double>(N)) / std::pow(static_cast<double>(params_.n), 0.25),
                      std::max(0.0, to_edge));
    m_ = params_.n / (4 * N);
    out_.tilde_p = params_.p;
    out_.J_hat = Matrix::Zero(N, N);
    out_.gradf_hat = Vector::Zero(N);
    if (m_ == 0 || out_.u <= 0) {
        // too short to perturb, or no room to: hold p, no estimates beyond D
        arm_ = static_cast<int>(2 * N);
        m_ = 0;
        out_.balancing = "skipped";
    }
}

std::optional<CommitRequest> GradEstimator::next_request() const {
    if (done_) return std::nullopt;
    const Eigen::Index N = params_.p.size();
    if (arm_ < 2 * N) {
        PriceVector q = params_.p;
        q(arm_ / 2) += (arm_ % 2 == 0 ? 1.0 : -1.0) * out_.u;
        return CommitRequest{q, m_};
    }
    return CommitRequest{out_.tilde_p, params_.n - 2 * N * m_};
}

void GradEstimator::record(const CommitResult& result) {
    if (done_) throw std::logic_error("grad_est: record after completion");
    const Eigen::Index N = params_.p.size();
    const long expected = next_request()->periods;
    out_.periods_consumed += result.periods;
    if (result.periods < expected) {
        done_ = true;
        out_.complete = false;
        if (arm_ >= 2 * N && m_ > 0) return;  // phase one estimates are already in place
        out_.D_hat = result.mean_demand;
        return;
    }
    if (arm_ < 2 * N) {
        arm_means_.push_back(result.mean_demand);
        if (++arm_ == 2 * N) finish_phase_one();
        return;
    }
    if (m_ == 0) out_.D_hat = result.mean_demand;
    done_ = true;
    out_.complete = true;
}

void GradEstimator::finish_phase_one() {
    const Eigen::Index N = params_.p.size();
    const double u = out_.u;
    out_.D_hat = DemandVector::Zero(N);
    for (const auto& d : arm_means_) out_.D_hat += d;
    out_.D_hat /= static_cast<double>(2 * N);
    for (Eigen::Index i = 0; i < N; ++i) {
        const DemandVector& dp = arm_means_[static_cast<std::size_t>(2 * i)];
        const DemandVector& dm = arm_means_[static_cast<std::size_t>(2 * i + 1)];
        PriceVector pp = params_.p, pm = params_.p;
        pp(i) += u;
        pm(i) -= u;
        out_.J_hat.col(i) = (dp - dm) / (2 * u);
        out_.gradf_hat(i) = (pp.dot(dp) - pm.dot(dm)) / (2 * u);
    }
    BalanceResult b = demand_balance(out_.D_hat, out_.J_hat, params_.p, params_.lambda, params_.n, known_.gamma,
                                     known_.A, params_.kappa1, params_.kappa2, params_.kappa3, known_.box);
    out_.tilde_p = b.tilde_p;
    out_.balancing_feasible = b.feasible;
    out_.balancing = b.feasible ? "feasible" : "infeasible";
    if (params_.n - 2 * N * m_ == 0) {
        done_ = true;
        out_.complete = true;
    }
}

GradEstOutput grad_est(PricingEnvironment& env, const KnownParameters& known, const GradEstParams& params) {
    GradEstimator est(known, params);
    while (auto req = est.next_request()) est.record(env.commit(req->price, req->periods));
    return est.output();
}

// ---------------------------------------------------------------- PrimalOpt

PrimalOptimizer::PrimalOptimizer(const KnownParameters& known, const PdNrmConfig& config, Vector lambda,
                                 double eps_bar, PriceVector p0, int epoch, std::vector<AlgorithmEvent>* log,
                                 const long* clock)
    : known_(known), config_(config), lambda_(std::move(lambda)), eps_bar_(eps_bar), epoch_(epoch), log_(log),
      clock_(clock), p_tau_(config.region.clip(p0)) {
    if (!(eps_bar_ > 0)) throw std::invalid_argument("primal_opt: eps_bar must be positive");
}

long PrimalOptimizer::loop_length(int tau) const {
    const double n = std::pow(config_.c.contraction, -2.0 * tau) * static_cast<double>(config_.c.n0);
    return static_cast<long>(std::ceil(std::min(n, 1e17)));
}

std::optional<CommitRequest> PrimalOptimizer::next_request() {
    if (done_) return std::nullopt;
    if (!est_) {
        const auto& c = config_.c;
        est_ = std::make_unique<GradEstimator>(
            known_, GradEstParams{p_tau_, lambda_, loop_length(tau_), c.kappa1, c.kappa2, c.kappa3});
        est_start_ = clock_ ? *clock_ : 0;
    }
    return est_->next_request();
}

void PrimalOptimizer::record(const CommitResult& result) {
    if (!est_) throw std::logic_error("primal_opt: record without a pending request");
    est_->record(result);
    if (!est_->done()) return;
    const GradEstOutput& out = est_->output();
    const long n_tau = loop_length(tau_);

    AlgorithmEvent ev;
    ev.kind = AlgorithmEvent::Kind::GradEst;
    ev.period = est_start_ + 1;
    ev.epoch = epoch_;
    ev.loop = tau_;
    ev.lambda = lambda_;
    ev.price = p_tau_;
    ev.balanced_price = out.tilde_p;
    ev.balancing = out.complete ? out.balancing : "truncated";
    ev.n = n_tau;
    ev.periods = out.periods_consumed;
    ev.u = out.u;
    ev.d_hat = out.D_hat;
    ev.eps_bar = eps_bar_;

    p_hat_ = p_tau_;
    D_hat_ = out.D_hat;
    if (!out.complete) {
        done_ = true;
        complete_ = false;
        if (log_) log_->push_back(std::move(ev));
        return;
    }
    Vector grad_L = out.gradf_hat - out.J_hat.transpose() * (known_.A.transpose() * lambda_);
    PriceVector raw = p_tau_ + config_.c.eta1 * grad_L;
    PriceVector next = config_.region.clip(raw);
    ev.clipped = (next - raw).cwiseAbs().maxCoeff() > 0;
    if (log_) log_->push_back(std::move(ev));
    p_tau_ = next;
    if (static_cast<double>(n_tau) > config_.c.kappa5 / (eps_bar_ * eps_bar_)) {
        done_ = true;
        complete_ = true;
        return;
    }
    ++tau_;
    est_.reset();
}

// ---------------------------------------------------------------- DualOpt

DualOptimizer::DualOptimizer(KnownParameters known, PdNrmConfig config)
    : known_(std::move(known)), config_(std::move(config)) {
    config_.validate(known_.A.cols(), known_.A.rows());
    lambda_ = config_.lambda0;
    warm_ = config_.region.center(known_.A.cols());
}

void DualOptimizer::start_epoch() {
    const double eps = std::pow(1 + config_.c.mu * config_.c.eta2, -0.5 * s_) * config_.c.kappa6;
    PriceVector p0 = config_.warm_start ? warm_ : config_.region.center(known_.A.cols());
    primal_ = std::make_unique<PrimalOptimizer>(known_, config_, lambda_, eps, p0, s_, &events_, &clock_);
}

std::optional<CommitRequest> DualOptimizer::next_request() {
    if (!primal_) start_epoch();
    return primal_->next_request();
}

void DualOptimizer::record(const CommitResult& result) {
    if (!primal_) throw std::logic_error("dual_opt: record without a pending request");
    clock_ += result.periods;
    primal_->record(result);
    if (!primal_->done() || !primal_->complete()) return;

    Vector g_hat = known_.gamma - known_.A * primal_->D_hat();
    Vector g_h = g_hat - config_.c.mu * lambda_;
    Vector next = prox_dual_step(lambda_, g_h, config_.c.mu, config_.c.eta2, config_.dual_set);

    AlgorithmEvent ev;
    ev.kind = AlgorithmEvent::Kind::DualUpdate;
    ev.period = clock_;
    ev.epoch = s_;
    ev.lambda = lambda_;
    ev.price = primal_->p_hat();
    ev.d_hat = primal_->D_hat();
    ev.g_hat = g_hat;
    ev.lambda_next = next;
    ev.eps_bar = std::pow(1 + config_.c.mu * config_.c.eta2, -0.5 * s_) * config_.c.kappa6;
    events_.push_back(std::move(ev));

    lambda_ = next;
    warm_ = primal_->next_start();
    ++updates_;
    ++s_;
    primal_.reset();
}

void run_pdnrm(DualOptimizer& algo, PricingEnvironment& env, long horizon) {
    long remaining = horizon - algo.clock();
    while (remaining > 0) {
        auto req = algo.next_request();
        if (!req) break;
        const long k = std::min(req->periods, remaining);
        algo.record(env.commit(req->price, k));
        remaining -= k;
    }
}

// ---------------------------------------------------------------- policy

PdNrmPolicy::PdNrmPolicy(const Instance& inst, PdNrmConfig config)
    : algo_(KnownParameters::from(inst), std::move(config)), horizon_(inst.T),
      sum_(DemandVector::Zero(inst.N())) {}

PostedPrice PdNrmPolicy::next_price(long period) {
    if (left_ == 0) {
        auto req = algo_.next_request();
        if (!req) throw std::logic_error("pdnrm: algorithm stopped before the horizon");
        length_ = std::min(req->periods, horizon_ - period + 1);
        left_ = length_;
        price_ = req->price;
        sum_.setZero();
    }
    return PostedPrice(price_);
}

void PdNrmPolicy::observe(long, const PostedPrice&, const DemandVector& realized) {
    sum_ += realized;
    if (--left_ == 0) algo_.record({sum_ / static_cast<double>(length_), length_});
}

std::unique_ptr<Policy> dual_opt_policy(const Instance& inst, const PdNrmConfig& config) {
    return std::make_unique<PdNrmPolicy>(inst, config);
}

EpochBounds epoch_bounds(const PdNrmConfig& config, long T) {
    const double lnT = std::log(static_cast<double>(std::max(T, 2L)));
    const auto& c = config.c;
    // The loop-count rate implied by g = 1 - eta1 * rate.
    const double rate = (1 - c.contraction) / c.eta1;
    return {2 * lnT / (c.mu * c.eta2) + 1, 2 * lnT / (c.eta1 * rate) + 1};
}

EpochCounts count_epochs(const std::vector<AlgorithmEvent>& events) {
    EpochCounts out;
    int epoch = -1, loops = 0;
    for (const auto& e : events) {
        if (e.kind == AlgorithmEvent::Kind::DualUpdate) ++out.dual_updates;
        if (e.kind != AlgorithmEvent::Kind::GradEst) continue;
        if (e.epoch != epoch) {
            epoch = e.epoch;
            loops = 0;
        }
        out.max_loops_per_epoch = std::max(out.max_loops_per_epoch, ++loops);
    }
    return out;
}

} // namespace nrm
