#include "nrm/demand.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

namespace nrm {

const PriceVector& PostedPrice::value() const {
    if (shutoff_) throw std::logic_error("shutoff marker has no price value");
    return value_;
}

NoiseMode parse_noise_mode(const std::string& s) {
    if (s == "multinomial") return NoiseMode::Multinomial;
    if (s == "none") return NoiseMode::None;
    throw std::invalid_argument("unknown noise mode: " + s);
}

std::string to_string(NoiseMode mode) {
    return mode == NoiseMode::Multinomial ? "multinomial" : "none";
}

bool PriceBox::contains(const PriceVector& p, double tol) const {
    return (p.array() >= lo - tol).all() && (p.array() <= hi + tol).all();
}

PriceVector PriceBox::clip(const PriceVector& p) const { return p.cwiseMax(lo).cwiseMin(hi); }

PriceVector PriceBox::center(Eigen::Index n) const {
    return PriceVector::Constant(n, 0.5 * (lo + hi));
}

PriceBox PriceBox::shrink(double margin) const {
    if (2 * margin >= width()) throw std::invalid_argument("margin leaves an empty price box");
    return {lo + margin, hi - margin};
}

void DemandModel::check_dim(const Vector& v) const {
    if (v.size() != dim())
        throw std::invalid_argument("dimension mismatch: expected " + std::to_string(dim()) +
                                    ", got " + std::to_string(v.size()));
}

Vector DemandModel::grad_phi(const DemandVector& d) const {
    PriceVector p = inverse(d);
    Matrix J = jacobian(p);
    return p + J.transpose().partialPivLu().solve(d);
}

Matrix DemandModel::hessian_phi(const DemandVector& d) const {
    const Eigen::Index n = dim();
    Matrix H(n, n);
    for (Eigen::Index j = 0; j < n; ++j) {
        const double h = 1e-6 * std::max(1.0, std::abs(d(j)));
        DemandVector dp = d, dm = d;
        dp(j) += h;
        dm(j) -= h;
        H.col(j) = (grad_phi(dp) - grad_phi(dm)) / (2 * h);
    }
    return 0.5 * (H + H.transpose());
}

// ---------------------------------------------------------------- logit

LogitDemand::LogitDemand(Vector a, Vector b) : a_(std::move(a)), b_(std::move(b)) {
    if (a_.size() == 0 || a_.size() != b_.size())
        throw std::invalid_argument("logit: a and b must be non-empty and of equal length");
    if ((b_.array() <= 0).any()) throw std::invalid_argument("logit: slopes b must be positive");
}

DemandVector LogitDemand::mean(const PriceVector& p) const {
    check_dim(p);
    Vector e = (a_.array() - b_.array() * p.array()).exp();
    return e / (1.0 + e.sum());
}

Matrix LogitDemand::jacobian(const PriceVector& p) const {
    DemandVector d = mean(p);
    const Eigen::Index n = dim();
    Matrix J(n, n);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < n; ++j)
            J(i, j) = (i == j) ? -b_(i) * d(i) * (1 - d(i)) : b_(j) * d(i) * d(j);
    return J;
}

bool LogitDemand::in_domain_of_inverse(const DemandVector& d) const {
    return d.size() == dim() && (d.array() > 0).all() && d.sum() < 1.0;
}

PriceVector LogitDemand::inverse(const DemandVector& d) const {
    check_dim(d);
    if (!in_domain_of_inverse(d))
        throw std::domain_error("logit inverse: demand outside the open simplex");
    const double d0 = 1.0 - d.sum();
    return (a_.array() - (d.array() / d0).log()) / b_.array();
}

Vector LogitDemand::grad_phi(const DemandVector& d) const {
    PriceVector p = inverse(d);
    const double d0 = 1.0 - d.sum();
    const double s = (d.array() / b_.array()).sum();
    return p.array() - 1.0 / b_.array() - s / d0;
}

Matrix LogitDemand::hessian_phi(const DemandVector& d) const {
    if (!in_domain_of_inverse(d))
        throw std::domain_error("logit hessian: demand outside the open simplex");
    const Eigen::Index n = dim();
    const double d0 = 1.0 - d.sum();
    const double s = (d.array() / b_.array()).sum();
    Matrix H(n, n);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < n; ++j)
            H(i, j) = -1.0 / (b_(i) * d0) - 1.0 / (b_(j) * d0) - s / (d0 * d0) -
                      (i == j ? 1.0 / (b_(i) * d(i)) : 0.0);
    return H;
}

// ---------------------------------------------------------------- linear

LinearDemand::LinearDemand(Vector c, Matrix B) : c_(std::move(c)), B_(std::move(B)) {
    if (c_.size() == 0 || B_.rows() != c_.size() || B_.cols() != c_.size())
        throw std::invalid_argument("linear demand: B must be square and match c");
    Matrix sym = 0.5 * (B_ + B_.transpose());
    Eigen::SelfAdjointEigenSolver<Matrix> es(sym);
    if (es.eigenvalues().minCoeff() <= 0)
        throw std::invalid_argument("linear demand: B must be positive definite");
    ldlt_.compute(B_);
}

DemandVector LinearDemand::mean(const PriceVector& p) const {
    check_dim(p);
    return c_ - B_ * p;
}

Matrix LinearDemand::jacobian(const PriceVector& p) const {
    check_dim(p);
    return -B_;
}

bool LinearDemand::in_domain_of_inverse(const DemandVector& d) const {
    return d.size() == dim() && d.allFinite();
}

PriceVector LinearDemand::inverse(const DemandVector& d) const {
    check_dim(d);
    return B_.partialPivLu().solve(c_ - d);
}

Vector LinearDemand::grad_phi(const DemandVector& d) const {
    Matrix Binv = B_.inverse();
    return Binv * c_ - (Binv + Binv.transpose()) * d;
}

Matrix LinearDemand::hessian_phi(const DemandVector&) const {
    Matrix Binv = B_.inverse();
    return -(Binv + Binv.transpose());
}

// ---------------------------------------------------------------- revenue

double revenue_f(const DemandModel& model, const PriceVector& p) {
    return p.dot(model.mean(p));
}

Vector grad_f(const DemandModel& model, const PriceVector& p) {
    return model.mean(p) + model.jacobian(p).transpose() * p;
}

double revenue_phi(const DemandModel& model, const DemandVector& d) {
    return d.dot(model.inverse(d));
}

DemandVector sample_demand(const DemandModel& model, const PostedPrice& price, Rng& rng,
                           NoiseMode mode) {
    const Eigen::Index n = model.dim();
    if (price.is_shutoff()) return DemandVector::Zero(n);
    DemandVector mu = model.mean(price.value());
    if (mode == NoiseMode::None) return mu;
    if ((mu.array() < 0).any() || mu.sum() > 1.0 + 1e-12)
        throw std::domain_error("multinomial sampling needs purchase probabilities in the simplex");
    const double u = uniform01(rng);
    DemandVector y = DemandVector::Zero(n);
    double cum = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
        cum += mu(i);
        if (u < cum) {
            y(i) = 1.0;
            break;
        }
    }
    return y;
}

// ---------------------------------------------------------------- regularity

std::pair<double, double> singular_range(const Matrix& A) {
    Eigen::JacobiSVD<Matrix> svd(A);
    const auto& s = svd.singularValues();
    return {s.maxCoeff(), s.minCoeff()};
}

namespace {

double op_norm(const Matrix& m) { return singular_range(m).first; }

// Enumerate a tensor grid of k points per axis over the box.
template <class F>
void for_each_grid_point(Eigen::Index n, int k, const PriceBox& box, F&& fn) {
    std::vector<int> idx(static_cast<std::size_t>(n), 0);
    const double step = box.width() / (k - 1);
    PriceVector p(n);
    while (true) {
        for (Eigen::Index i = 0; i < n; ++i) p(i) = box.lo + step * idx[static_cast<std::size_t>(i)];
        fn(p, idx);
        Eigen::Index pos = 0;
        while (pos < n && ++idx[static_cast<std::size_t>(pos)] == k) idx[static_cast<std::size_t>(pos++)] = 0;
        if (pos == n) break;
    }
}

} // namespace

RegularityConstants estimate_regularity(const DemandModel& model, const PriceBox& box,
                                        const Matrix& A, const Vector& gamma, NoiseMode noise,
                                        int grid_points) {
    const Eigen::Index n = model.dim();
    if (grid_points < 2) throw std::invalid_argument("estimate_regularity: need >= 2 grid points");
    if (!(box.width() > 0)) throw std::invalid_argument("estimate_regularity: degenerate box");
    if (std::pow(static_cast<double>(grid_points), static_cast<double>(n)) > 4e6)
        throw std::invalid_argument("estimate_regularity: grid too large");
    if (A.cols() != n || gamma.size() != A.rows())
        throw std::invalid_argument("estimate_regularity: A/gamma dimension mismatch");

    RegularityConstants rc;
    rc.sigma_D = std::numeric_limits<double>::infinity();
    rc.sigma_phi = std::numeric_limits<double>::infinity();
    double d_lo = std::numeric_limits<double>::infinity(), d_hi = 0.0, f_hi = 0.0;
    const double step = box.width() / (grid_points - 1);

    for_each_grid_point(n, grid_points, box, [&](const PriceVector& p, const std::vector<int>& idx) {
        Matrix J = model.jacobian(p);
        Eigen::JacobiSVD<Matrix> svd(J);
        rc.B_D = std::max(rc.B_D, svd.singularValues().maxCoeff());
        rc.sigma_D = std::min(rc.sigma_D, svd.singularValues().minCoeff());
        for (Eigen::Index i = 0; i < n; ++i) {
            if (idx[static_cast<std::size_t>(i)] + 1 >= grid_points) continue;
            PriceVector q = p;
            q(i) += step;
            rc.L_D = std::max(rc.L_D, op_norm(model.jacobian(q) - J) / step);
        }

        // grad/hessian of f via central differences of grad_f
        Vector gf = grad_f(model, p);
        Matrix Hf(n, n);
        for (Eigen::Index j = 0; j < n; ++j) {
            PriceVector pp = p, pm = p;
            pp(j) += 1e-6;
            pm(j) -= 1e-6;
            Hf.col(j) = (grad_f(model, pp) - grad_f(model, pm)) / 2e-6;
        }
        rc.B_f = std::max({rc.B_f, gf.norm(), op_norm(0.5 * (Hf + Hf.transpose()))});

        DemandVector d = model.mean(p);
        Matrix Hphi = model.hessian_phi(d);
        Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (Hphi + Hphi.transpose()));
        rc.sigma_phi = std::min(rc.sigma_phi, -es.eigenvalues().maxCoeff());
        rc.B_phi = std::max({rc.B_phi, model.grad_phi(d).norm(),
                             es.eigenvalues().cwiseAbs().maxCoeff()});

        d_lo = std::min(d_lo, d.minCoeff());
        d_hi = std::max(d_hi, d.maxCoeff());
        f_hi = std::max(f_hi, p.dot(d));
    });

    std::tie(rc.B_A, rc.sigma_A) = singular_range(A);
    rc.gamma_min = gamma.minCoeff();
    rc.gamma_max = gamma.maxCoeff();
    rc.B_J = rc.B_D;
    if (noise == NoiseMode::Multinomial) {
        rc.d_lo = 0.0;
        rc.d_hi = 1.0;
        rc.B_r = box.hi;
    } else {
        rc.d_lo = std::max(0.0, d_lo);
        rc.d_hi = d_hi;
        rc.B_r = f_hi;
    }
    return rc;
}

} // namespace nrm
