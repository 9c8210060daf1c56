#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "nrm/fluid.hpp"
#include "nrm/instance.hpp"

namespace nrm {

struct CheckResult {
    std::string name;
    bool passed = false;
    long trials = 0;
    long violations = 0;
    double worst = 0;  // worst margin or error seen, meaning depends on the check
    std::string detail;
};

struct CheckOptions {
    std::uint64_t seed = 7;
    int regularity_grid = 101;
    int fluid_grid = 2000;  // per axis, for the brute-force fluid comparison
    long sim_horizon = 0;   // 0: use the instance horizon
};

/// Feasibility, duality gap and complementary slackness of a fluid solution.
CheckResult check_fluid_certificate(const Instance& inst, const FluidSolution& sol);

/// Compares d* against a brute-force search over a grid of the feasible demand region.
CheckResult check_fluid_grid(const Instance& inst, const FluidSolution& sol, int grid);

/// grad_Q against central differences of dual_Q at random lambda.
CheckResult check_dual_gradient(const Instance& inst, const DualSet& dual_set, int trials, std::uint64_t seed);

/// Finite-difference Hessian of Q is PSD with min eigenvalue >= sigma_A^2/B_phi - 1e-3.
CheckResult check_dual_curvature(const Instance& inst, const DualSet& dual_set, const RegularityConstants& rc,
                                 int trials, std::uint64_t seed);

/// Noiseless grad_est bias bounds at random prices, n in {1e4, 1e6}.
CheckResult check_estimator_bias(const Instance& inst, const RegularityConstants& rc, int trials,
                                 std::uint64_t seed);

/// Accepted balanced prices satisfy the two-sided consumption sandwich under the true demand.
CheckResult check_balancing_sandwich(const Instance& inst, const RegularityConstants& rc, const DualSet& dual_set,
                                     int trials, std::uint64_t seed);

/// PL inequality and quadratic decay of the Lagrangian in p.
CheckResult check_pl(const Instance& inst, const RegularityConstants& rc, const DualSet& dual_set, int trials,
                     std::uint64_t seed, double tol = 1e-8);

/// Inverse round trip and negative definite Hessian of phi on random prices.
CheckResult check_demand_model(const Instance& inst, int trials, std::uint64_t seed);

/// Simulator audit, rerun identity and epoch-count bounds for every policy.
CheckResult check_simulator(const Instance& inst, const FluidSolution& sol, long horizon, int seeds,
                            std::uint64_t seed);

/// Everything above on one instance.
std::vector<CheckResult> run_checks(const Instance& inst, const CheckOptions& options = {});

} // namespace nrm
