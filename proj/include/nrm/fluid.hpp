#pragma once

#include <optional>

#include "nrm/instance.hpp"

namespace nrm {

/// Box of admissible dual vectors: prod_j [0, lambda_max_j].
struct DualSet {
    Vector lambda_max;

    double lambda_bar() const { return lambda_max.norm(); }
    bool contains(const Vector& lambda, double tol = 0.0) const;
    Vector clip(const Vector& lambda) const;
    Vector center() const { return 0.5 * lambda_max; }
};

/// Crude dual scale: max over a price grid of |grad phi| / sigma_min(A), times 10.
DualSet default_dual_set(const Instance& inst, int grid_points = 41);

double lagrangian_L(const Instance& inst, const Vector& lambda, const PriceVector& p);
double lagrangian_H(const Instance& inst, const Vector& lambda, const DemandVector& d);
/// grad_p L = grad f - J^T A^T lambda.
Vector grad_p_lagrangian(const Instance& inst, const Vector& lambda, const PriceVector& p);

struct InnerMax {
    PriceVector p;
    DemandVector d;
    double value = 0;
    int iterations = 0;
    double residual = 0;  // gradient-map norm at exit
};

/// argmax_d H(lambda, d) over the demand image. Throws std::runtime_error
/// after 1e5 iterations without reaching `tol`.
InnerMax solve_inner_max(const Instance& inst, const Vector& lambda, double tol = 1e-9,
                         const std::optional<DemandVector>& start = std::nullopt);

double dual_Q(const Instance& inst, const Vector& lambda, double tol = 1e-9);
Vector grad_Q(const Instance& inst, const Vector& lambda, double tol = 1e-9);

struct FluidSolution {
    DemandVector d_star;
    PriceVector p_star;
    Vector lambda_star;
    double value = 0;  // phi(d*)
    std::vector<bool> binding;
    double duality_gap = 0;  // Q(lambda*) - phi(d*)
    double feasibility_residual = 0;  // max_j (A d* - gamma)_j, clipped at 0
    double slackness_residual = 0;    // max_j |lambda_j (gamma_j - <a_j, d*>)|
    double stationarity_residual = 0; // |grad phi(d*) - A^T lambda*| on the interior
    int primal_iterations = 0;
    int dual_iterations = 0;
};

FluidSolution solve_fluid(const Instance& inst, double tol = 1e-10,
                          const std::optional<DualSet>& dual_set = std::nullopt);

/// T * phi(d*).
double fluid_upper_bound(const Instance& inst, const FluidSolution& sol);

nlohmann::json fluid_to_json(const FluidSolution& sol);

/// Euclidean projection onto {x : G x <= h} by Dykstra's algorithm.
/// Returns false when the sweep cap is hit before `tol`.
bool project_polyhedron(const Matrix& G, const Vector& h, Vector& x, double tol = 1e-12,
                        int max_sweeps = 1000);

} // namespace nrm
