#pragma once

#include <Eigen/Dense>
#include <memory>
#include <string>

#include "nrm/rng.hpp"

namespace nrm {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using PriceVector = Eigen::VectorXd;
using DemandVector = Eigen::VectorXd;

/// A price posted by a policy: either a vector in the price box or the
/// shutoff marker (no demand is realized).
class PostedPrice {
public:
    explicit PostedPrice(PriceVector p) : value_(std::move(p)) {}

    static PostedPrice shutoff() { return PostedPrice(); }

    bool is_shutoff() const { return shutoff_; }
    /// Throws std::logic_error on the shutoff marker.
    const PriceVector& value() const;

private:
    PostedPrice() : shutoff_(true) {}
    PriceVector value_;
    bool shutoff_ = false;
};

enum class NoiseMode { Multinomial, None };

NoiseMode parse_noise_mode(const std::string& s);
std::string to_string(NoiseMode mode);

/// Common per-coordinate price interval [lo, hi].
struct PriceBox {
    double lo = 0.0;
    double hi = 1.0;

    double width() const { return hi - lo; }
    bool contains(const PriceVector& p, double tol = 0.0) const;
    PriceVector clip(const PriceVector& p) const;
    PriceVector center(Eigen::Index n) const;
    /// Same box shrunk by `margin` on each side.
    PriceBox shrink(double margin) const;
};

class DemandModel {
public:
    virtual ~DemandModel() = default;

    virtual Eigen::Index dim() const = 0;
    virtual DemandVector mean(const PriceVector& p) const = 0;
    virtual Matrix jacobian(const PriceVector& p) const = 0;
    virtual PriceVector inverse(const DemandVector& d) const = 0;
    /// Whether `inverse` is defined at d.
    virtual bool in_domain_of_inverse(const DemandVector& d) const = 0;

    /// Gradient of phi(d) = <d, inverse(d)>. Default: p + J^{-T} d.
    virtual Vector grad_phi(const DemandVector& d) const;
    /// Default: central differences of grad_phi.
    virtual Matrix hessian_phi(const DemandVector& d) const;

    virtual std::string name() const = 0;

protected:
    void check_dim(const Vector& v) const;
};

/// D_i(p) = exp(a_i - b_i p_i) / (1 + sum_j exp(a_j - b_j p_j)).
class LogitDemand final : public DemandModel {
public:
    LogitDemand(Vector a, Vector b);

    Eigen::Index dim() const override { return a_.size(); }
    DemandVector mean(const PriceVector& p) const override;
    Matrix jacobian(const PriceVector& p) const override;
    PriceVector inverse(const DemandVector& d) const override;
    bool in_domain_of_inverse(const DemandVector& d) const override;
    Vector grad_phi(const DemandVector& d) const override;
    Matrix hessian_phi(const DemandVector& d) const override;
    std::string name() const override { return "logit"; }

    const Vector& a() const { return a_; }
    const Vector& b() const { return b_; }

private:
    Vector a_;
    Vector b_;
};

/// D(p) = c - B p with B positive definite.
class LinearDemand final : public DemandModel {
public:
    LinearDemand(Vector c, Matrix B);

    Eigen::Index dim() const override { return c_.size(); }
    DemandVector mean(const PriceVector& p) const override;
    Matrix jacobian(const PriceVector& p) const override;
    PriceVector inverse(const DemandVector& d) const override;
    bool in_domain_of_inverse(const DemandVector& d) const override;
    Vector grad_phi(const DemandVector& d) const override;
    Matrix hessian_phi(const DemandVector& d) const override;
    std::string name() const override { return "linear"; }

    const Vector& c() const { return c_; }
    const Matrix& B() const { return B_; }

private:
    Vector c_;
    Matrix B_;
    Eigen::LDLT<Matrix> ldlt_;
};

double revenue_f(const DemandModel& model, const PriceVector& p);
Vector grad_f(const DemandModel& model, const PriceVector& p);
double revenue_phi(const DemandModel& model, const DemandVector& d);

/// One period of realized demand. Multinomial: one-hot draw over the N
/// products plus a no-purchase outcome. None: the mean itself.
DemandVector sample_demand(const DemandModel& model, const PostedPrice& price, Rng& rng,
                           NoiseMode mode);

struct RegularityConstants {
    double B_D = 0, sigma_D = 0, L_D = 0;
    double B_f = 0;
    double B_phi = 0, sigma_phi = 0;
    double B_A = 0, sigma_A = 0;
    double B_r = 0;
    double gamma_min = 0, gamma_max = 0;
    double B_J = 0;      // defaults to B_D
    double d_lo = 0;     // lower demand bound
    double d_hi = 0;     // upper demand bound (d-bar)
};

/// Grid scan of the price box with `grid_points` per axis. Fails on fewer
/// than 2 points or a grid larger than ~4e6 nodes.
RegularityConstants estimate_regularity(const DemandModel& model, const PriceBox& box,
                                        const Matrix& A, const Vector& gamma, NoiseMode noise,
                                        int grid_points);

/// Largest and smallest singular value of A.
std::pair<double, double> singular_range(const Matrix& A);

} // namespace nrm
