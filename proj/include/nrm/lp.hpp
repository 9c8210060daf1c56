#pragma once

#include <optional>

#include "nrm/demand.hpp"

namespace nrm {

struct LpSolution {
    Vector x;
    double objective = 0;
};

/// max c^T x  s.t.  A_le x <= b_le (b_le >= 0),  A_eq x = b_eq,  x >= 0.
/// Dense two-phase simplex with Bland's rule; nullopt when infeasible.
/// Throws std::domain_error when unbounded.
std::optional<LpSolution> solve_lp(const Vector& c, const Matrix& A_le, const Vector& b_le,
                                   const Matrix& A_eq, const Vector& b_eq);

} // namespace nrm
