#include "nrm/lp.hpp"

#include <limits>
#include <stdexcept>
#include <vector>

namespace nrm {

namespace {

class Tableau {
public:
    Tableau(Matrix rows, Vector rhs, std::vector<int> basis)
        : t_(rows.rows(), rows.cols() + 1), basis_(std::move(basis)) {
        t_.leftCols(rows.cols()) = rows;
        t_.col(rows.cols()) = rhs;
    }

    Eigen::Index vars() const { return t_.cols() - 1; }

    // Maximize c^T x over columns j with allowed[j]; false when unbounded.
    bool maximize(const Vector& c, const std::vector<bool>& allowed) {
        const double eps = 1e-11;
        Vector obj = Vector::Zero(t_.cols());
        obj.head(vars()) = -c;
        for (Eigen::Index r = 0; r < t_.rows(); ++r) obj += c(basis_[static_cast<std::size_t>(r)]) * t_.row(r).transpose();
        for (int guard = 0; guard < 100000; ++guard) {
            Eigen::Index enter = -1;
            for (Eigen::Index j = 0; j < vars(); ++j)
                if (allowed[static_cast<std::size_t>(j)] && obj(j) < -eps) {
                    enter = j;
                    break;
                }
            if (enter < 0) {
                value_ = obj(vars());
                return true;
            }
            Eigen::Index leave = -1;
            double best = std::numeric_limits<double>::infinity();
            for (Eigen::Index r = 0; r < t_.rows(); ++r) {
                const double a = t_(r, enter);
                if (a <= eps) continue;
                const double ratio = t_(r, vars()) / a;
                if (ratio < best - 1e-14 ||
                    (ratio <= best + 1e-14 && leave >= 0 &&
                     basis_[static_cast<std::size_t>(r)] < basis_[static_cast<std::size_t>(leave)])) {
                    best = ratio;
                    leave = r;
                }
            }
            if (leave < 0) return false;
            pivot(leave, enter, obj);
        }
        throw std::runtime_error("simplex: iteration guard hit");
    }

    void pivot(Eigen::Index r, Eigen::Index j, Vector& obj) {
        t_.row(r) /= t_(r, j);
        for (Eigen::Index k = 0; k < t_.rows(); ++k)
            if (k != r && t_(k, j) != 0.0) t_.row(k) -= t_(k, j) * t_.row(r);
        if (obj(j) != 0.0) obj -= obj(j) * t_.row(r).transpose();
        basis_[static_cast<std::size_t>(r)] = static_cast<int>(j);
    }

    void pivot(Eigen::Index r, Eigen::Index j) {
        Vector dummy = Vector::Zero(t_.cols());
        pivot(r, j, dummy);
    }

    double value() const { return value_; }
    const Matrix& table() const { return t_; }
    const std::vector<int>& basis() const { return basis_; }

private:
    Matrix t_;
    std::vector<int> basis_;
    double value_ = 0;
};

} // namespace

std::optional<LpSolution> solve_lp(const Vector& c, const Matrix& A_le, const Vector& b_le,
                                   const Matrix& A_eq, const Vector& b_eq) {
    const Eigen::Index n = c.size(), mle = A_le.rows(), meq = A_eq.rows();
    if ((mle && A_le.cols() != n) || (meq && A_eq.cols() != n) || b_le.size() != mle || b_eq.size() != meq)
        throw std::invalid_argument("solve_lp: dimension mismatch");
    if ((b_le.array() < 0).any()) throw std::invalid_argument("solve_lp: inequality right-hand sides must be >= 0");

    const Eigen::Index cols = n + mle + meq;
    Matrix rows = Matrix::Zero(mle + meq, cols);
    Vector rhs(mle + meq);
    std::vector<int> basis;
    for (Eigen::Index r = 0; r < mle; ++r) {
        rows.row(r).head(n) = A_le.row(r);
        rows(r, n + r) = 1.0;
        rhs(r) = b_le(r);
        basis.push_back(static_cast<int>(n + r));
    }
    for (Eigen::Index r = 0; r < meq; ++r) {
        const double sign = b_eq(r) < 0 ? -1.0 : 1.0;
        rows.row(mle + r).head(n) = sign * A_eq.row(r);
        rows(mle + r, n + mle + r) = 1.0;
        rhs(mle + r) = sign * b_eq(r);
        basis.push_back(static_cast<int>(n + mle + r));
    }
    Tableau tab(rows, rhs, basis);
    std::vector<bool> all(static_cast<std::size_t>(cols), true), no_art(static_cast<std::size_t>(cols), true);
    for (Eigen::Index k = n + mle; k < cols; ++k) no_art[static_cast<std::size_t>(k)] = false;

    if (meq > 0) {
        Vector phase1 = Vector::Zero(cols);
        phase1.tail(meq).setConstant(-1.0);
        tab.maximize(phase1, all);
        if (tab.value() < -1e-9) return std::nullopt;
        // Drive zero-level artificials out of the basis where possible.
        for (Eigen::Index r = 0; r < tab.table().rows(); ++r) {
            if (tab.basis()[static_cast<std::size_t>(r)] < n + mle) continue;
            for (Eigen::Index j = 0; j < n + mle; ++j)
                if (std::abs(tab.table()(r, j)) > 1e-9) {
                    tab.pivot(r, j);
                    break;
                }
        }
    }
    Vector full_c = Vector::Zero(cols);
    full_c.head(n) = c;
    if (!tab.maximize(full_c, no_art)) throw std::domain_error("solve_lp: unbounded");

    LpSolution sol;
    sol.x = Vector::Zero(n);
    for (Eigen::Index r = 0; r < tab.table().rows(); ++r) {
        const int b = tab.basis()[static_cast<std::size_t>(r)];
        if (b < n) sol.x(b) = std::max(0.0, tab.table()(r, cols));
    }
    sol.objective = c.dot(sol.x);
    return sol;
}

} // namespace nrm
