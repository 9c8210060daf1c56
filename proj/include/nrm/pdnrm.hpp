#pragma once

#include <memory>
#include <optional>

#include "nrm/environment.hpp"
#include "nrm/sim.hpp"

namespace nrm {

enum class ConstantsMode { Theory, Tuned, Explicit };

ConstantsMode parse_constants_mode(const std::string& s);
std::string to_string(ConstantsMode mode);

struct PdNrmConstants {
    long n0 = 0;
    double kappa1 = 0, kappa2 = 0, kappa3 = 0, kappa5 = 0, kappa6 = 0;
    std::optional<double> kappa4;  // only defined in theory mode
    double eta1 = 0, eta2 = 0, mu = 0;
    double contraction = 0.5;  // g: loop lengths grow by g^-2 per loop
};

/// Constants from the step-size and loop-length formulas of the analysis.
PdNrmConstants constants_theory(const Instance& inst, const RegularityConstants& rc, long T,
                                const DualSet& dual_set, double price_margin);

/// The hand-tuned constants used for the reported experiments.
PdNrmConstants constants_tuned(long N, long T);

/// kappa3 for tuned mode given kappa1.
double tuned_kappa3(double kappa1, long N, long T);

struct PdNrmConfig {
    ConstantsMode mode = ConstantsMode::Tuned;
    PdNrmConstants c;
    DualSet dual_set;
    double price_margin = 0;  // rho_lo
    PriceBox region;          // P: the price box shrunk by price_margin
    Vector lambda0;
    bool warm_start = false;

    /// Throws std::invalid_argument naming the broken invariant.
    void validate(Eigen::Index N, Eigen::Index M) const;
    nlohmann::json to_json() const;
};

/// User-facing settings; numbers left unset are derived per instance and horizon.
struct PdNrmSettings {
    ConstantsMode mode = ConstantsMode::Tuned;
    std::optional<long> n0;
    std::optional<double> kappa1, kappa2, kappa3, kappa5, kappa6;
    std::optional<double> eta1, eta2, mu, contraction;
    std::optional<Vector> lambda_max;
    std::optional<Vector> lambda0;
    std::optional<double> price_margin;
    std::optional<double> B_J;
    bool warm_start = false;
    int regularity_grid = 101;
};

/// Throws std::invalid_argument on unknown keys or bad values.
PdNrmSettings settings_from_json(const nlohmann::json& j);
nlohmann::json settings_to_json(const PdNrmSettings& s);

PdNrmConfig resolve_config(const PdNrmSettings& settings, const Instance& inst);

/// What the seller knows in advance: consumption matrix, capacity rates,
/// price range and horizon. Demand is not part of it.
struct KnownParameters {
    Matrix A;
    Vector gamma;
    PriceBox box;
    long T = 0;

    static KnownParameters from(const Instance& inst) { return {inst.A, inst.gamma, inst.box, inst.T}; }
};

struct BalanceResult {
    PriceVector tilde_p;
    bool feasible = false;
    int sweeps = 0;
};

/// Find p~ near p whose linearized two-phase consumption is close to gamma,
/// by cyclic projections. Returns (p, false) when none is found.
BalanceResult demand_balance(const DemandVector& D_hat, const Matrix& J_hat, const PriceVector& p,
                             const Vector& lambda, long n, const Vector& gamma, const Matrix& A,
                             double kappa1, double kappa2, double kappa3, const PriceBox& box);

/// argmin over the box Lambda of <g, l> + mu/2 |l|^2 + 1/(2 eta2) |l - l_s|^2.
Vector prox_dual_step(const Vector& lambda_s, const Vector& g_h, double mu, double eta2,
                      const DualSet& dual_set);

struct GradEstOutput {
    DemandVector D_hat;
    Matrix J_hat;
    Vector gradf_hat;
    PriceVector tilde_p;
    bool balancing_feasible = false;
    std::string balancing;  // feasible | infeasible | skipped
    long periods_consumed = 0;
    double u = 0;
    bool complete = false;
};

struct GradEstParams {
    PriceVector p;
    Vector lambda;
    long n = 0;
    double kappa1 = 0, kappa2 = 0, kappa3 = 0;
};

/// Perturbed-price estimation followed by a balancing commit, as a
/// sequence of commit requests. A result shorter than requested ends it.
class GradEstimator {
public:
    GradEstimator(const KnownParameters& known, GradEstParams params);

    std::optional<CommitRequest> next_request() const;
    void record(const CommitResult& result);
    bool done() const { return done_; }
    const GradEstOutput& output() const { return out_; }
    const GradEstParams& params() const { return params_; }

private:
    void finish_phase_one();

    const KnownParameters& known_;
    GradEstParams params_;
    long m_ = 0;
    int arm_ = 0;  // 0..2N-1 phase one, 2N phase two
    std::vector<DemandVector> arm_means_;
    GradEstOutput out_;
    bool done_ = false;
};

/// Runs the request/record loop against an environment until done.
GradEstOutput grad_est(PricingEnvironment& env, const KnownParameters& known, const GradEstParams& params);

class PrimalOptimizer {
public:
    PrimalOptimizer(const KnownParameters& known, const PdNrmConfig& config, Vector lambda,
                    double eps_bar, PriceVector p0, int epoch, std::vector<AlgorithmEvent>* log,
                    const long* clock);

    std::optional<CommitRequest> next_request();
    void record(const CommitResult& result);
    bool done() const { return done_; }
    /// False when the horizon ran out before the stopping rule fired.
    bool complete() const { return complete_; }

    const PriceVector& p_hat() const { return p_hat_; }
    const DemandVector& D_hat() const { return D_hat_; }
    const PriceVector& next_start() const { return p_tau_; }
    int loops() const { return tau_ + (done_ ? 1 : 0); }
    long loop_length(int tau) const;

private:
    const KnownParameters& known_;
    const PdNrmConfig& config_;
    Vector lambda_;
    double eps_bar_;
    int epoch_;
    std::vector<AlgorithmEvent>* log_;
    const long* clock_;
    int tau_ = 0;
    PriceVector p_tau_;
    std::unique_ptr<GradEstimator> est_;
    long est_start_ = 0;
    PriceVector p_hat_;
    DemandVector D_hat_;
    bool done_ = false;
    bool complete_ = false;
};

/// Outer dual loop; never finishes on its own, the caller stops it at T.
class DualOptimizer {
public:
    DualOptimizer(KnownParameters known, PdNrmConfig config);
    DualOptimizer(const DualOptimizer&) = delete;
    DualOptimizer& operator=(const DualOptimizer&) = delete;

    std::optional<CommitRequest> next_request();
    void record(const CommitResult& result);

    const Vector& lambda() const { return lambda_; }
    int epoch() const { return s_; }
    int dual_updates() const { return updates_; }
    long clock() const { return clock_; }
    const std::vector<AlgorithmEvent>& events() const { return events_; }
    const PdNrmConfig& config() const { return config_; }

private:
    void start_epoch();

    KnownParameters known_;
    PdNrmConfig config_;
    Vector lambda_;
    int s_ = 0;
    int updates_ = 0;
    long clock_ = 0;
    PriceVector warm_;
    std::unique_ptr<PrimalOptimizer> primal_;
    std::vector<AlgorithmEvent> events_;
};

/// Drives the dual loop for exactly `horizon` periods against `env`.
void run_pdnrm(DualOptimizer& algo, PricingEnvironment& env, long horizon);

/// Period-level adapter for the simulator.
class PdNrmPolicy final : public Policy {
public:
    PdNrmPolicy(const Instance& inst, PdNrmConfig config);

    PostedPrice next_price(long period) override;
    void observe(long period, const PostedPrice& price, const DemandVector& realized) override;
    const std::vector<AlgorithmEvent>& events() const override { return algo_.events(); }
    std::string name() const override { return "pdnrm"; }

    const DualOptimizer& algorithm() const { return algo_; }

private:
    DualOptimizer algo_;
    long horizon_;
    PriceVector price_;
    long left_ = 0;
    long length_ = 0;
    DemandVector sum_;
};

std::unique_ptr<Policy> dual_opt_policy(const Instance& inst, const PdNrmConfig& config);

/// Upper bounds on dual updates and on primal loops per epoch over T periods.
struct EpochBounds {
    double max_dual_updates = 0;
    double max_loops_per_epoch = 0;
};
EpochBounds epoch_bounds(const PdNrmConfig& config, long T);

struct EpochCounts {
    int dual_updates = 0;
    int max_loops_per_epoch = 0;
};
EpochCounts count_epochs(const std::vector<AlgorithmEvent>& events);

} // namespace nrm
