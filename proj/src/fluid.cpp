#include "nrm/fluid.hpp"

#include <Eigen/Cholesky>
#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace nrm {

bool DualSet::contains(const Vector& lambda, double tol) const {
    return lambda.size() == lambda_max.size() && (lambda.array() >= -tol).all() &&
           (lambda.array() <= lambda_max.array() + tol).all();
}

Vector DualSet::clip(const Vector& lambda) const {
    return lambda.cwiseMax(0.0).cwiseMin(lambda_max);
}

DualSet default_dual_set(const Instance& inst, int grid_points) {
    const Eigen::Index n = inst.N();
    const double sigma_A = singular_range(inst.A).second;
    double crude = 0.0;
    std::vector<int> idx(static_cast<std::size_t>(n), 0);
    const double step = inst.box.width() / (grid_points - 1);
    PriceVector p(n);
    while (true) {
        for (Eigen::Index i = 0; i < n; ++i) p(i) = inst.box.lo + step * idx[static_cast<std::size_t>(i)];
        crude = std::max(crude, inst.model->grad_phi(inst.model->mean(p)).norm() / sigma_A);
        Eigen::Index pos = 0;
        while (pos < n && ++idx[static_cast<std::size_t>(pos)] == grid_points) idx[static_cast<std::size_t>(pos++)] = 0;
        if (pos == n) break;
    }
    return DualSet{Vector::Constant(inst.M(), 10.0 * crude)};
}

double lagrangian_L(const Instance& inst, const Vector& lambda, const PriceVector& p) {
    DemandVector d = inst.model->mean(p);
    return p.dot(d) - lambda.dot(inst.A * d - inst.gamma);
}

double lagrangian_H(const Instance& inst, const Vector& lambda, const DemandVector& d) {
    return revenue_phi(*inst.model, d) - lambda.dot(inst.A * d - inst.gamma);
}

Vector grad_p_lagrangian(const Instance& inst, const Vector& lambda, const PriceVector& p) {
    Matrix J = inst.model->jacobian(p);
    return grad_f(*inst.model, p) - J.transpose() * (inst.A.transpose() * lambda);
}

namespace {

// Pull d back into the demand image by clipping its price preimage.
DemandVector retract(const Instance& inst, const DemandVector& d) {
    PriceVector p = inst.model->inverse(d);
    if (inst.box.contains(p)) return d;
    return inst.model->mean(inst.box.clip(p));
}

// Projected (retracted) gradient ascent on a concave function of d with
// backtracking. `project` maps an unconstrained point to the feasible set.
template <class Obj, class Grad, class Proj>
int ascend(const Instance& inst, DemandVector& d, Obj&& obj, Grad&& grad, Proj&& project,
           double tol, int max_iter, double& residual) {
    double s = 1e-2;
    double val = obj(d);
    for (int it = 1; it <= max_iter; ++it) {
        Vector g = grad(d);
        DemandVector cand;
        double cand_val = 0.0;
        while (true) {
            DemandVector raw = d + s * g;
            if (!inst.model->in_domain_of_inverse(raw)) {
                s *= 0.5;
                continue;
            }
            std::optional<DemandVector> projected = project(raw);
            if (!projected) {
                s *= 0.5;
                if (s < 1e-18) throw std::runtime_error("ascent: no admissible step");
                continue;
            }
            cand = *projected;
            cand_val = obj(cand);
            const double gain = g.dot(cand - d);
            // sufficient increase, or a step too small to be measured in value
            if (cand_val >= val + 1e-4 * gain ||
                (std::abs(cand_val - val) <= 1e-15 * std::max(1.0, std::abs(val)) &&
                 grad(cand).dot(cand - d) >= 0))
                break;
            s *= 0.5;
            if (s < 1e-18) break;
        }
        residual = (cand - d).norm() / s;
        d = cand;
        val = cand_val;
        if (residual <= tol) return it;
        s = std::min(s * 2.0, 1e3);
    }
    return max_iter + 1;
}

// Projected Newton ascent on L(lambda, .) over the price box, free coordinates
// only, with a finite-difference Hessian. Stops when the gradient map in demand
// units is below tol, or when no step improves L.
int polish_prices(const Instance& inst, const Vector& lambda, PriceVector& p, double tol, int max_iter,
                  double& residual) {
    const Eigen::Index n = p.size();
    const double lo = inst.box.lo, hi = inst.box.hi;
    double val = lagrangian_L(inst, lambda, p);
    for (int it = 1; it <= max_iter; ++it) {
        const Vector g = grad_p_lagrangian(inst, lambda, p);
        const Matrix J = inst.model->jacobian(p);
        residual = J.transpose().fullPivLu().solve(inst.box.clip(p + g) - p).norm();
        if (residual <= tol) return it;

        std::vector<Eigen::Index> free;
        for (Eigen::Index i = 0; i < n; ++i)
            if (!((p(i) <= lo && g(i) < 0) || (p(i) >= hi && g(i) > 0))) free.push_back(i);
        Vector dir = g;
        if (!free.empty()) {
            const auto k = static_cast<Eigen::Index>(free.size());
            Matrix H(k, k);
            for (Eigen::Index c = 0; c < k; ++c) {
                const double h = 1e-6 * std::max(1.0, std::abs(p(free[c])));
                PriceVector up = p, dn = p;
                up(free[c]) += h;
                dn(free[c]) -= h;
                const Vector dg = (grad_p_lagrangian(inst, lambda, up) - grad_p_lagrangian(inst, lambda, dn)) / (2 * h);
                for (Eigen::Index r = 0; r < k; ++r) H(r, c) = dg(free[r]);
            }
            H = 0.5 * (H + H.transpose());
            Vector gf(k);
            for (Eigen::Index r = 0; r < k; ++r) gf(r) = g(free[r]);
            Eigen::LLT<Matrix> llt(-H);
            if (llt.info() == Eigen::Success) {
                const Vector step = llt.solve(gf);
                dir.setZero();
                for (Eigen::Index r = 0; r < k; ++r) dir(free[r]) = step(r);
            }
        }
        bool moved = false;
        for (double s = 1.0; s >= 1e-20; s *= 0.5) {
            const PriceVector cand = inst.box.clip(p + s * dir);
            const double cand_val = lagrangian_L(inst, lambda, cand);
            if (cand_val > val || (cand_val == val && (cand - p).norm() > 0 && s == 1.0)) {
                moved = (cand - p).norm() > 0;
                p = cand;
                val = cand_val;
                break;
            }
        }
        if (!moved) return it;
    }
    return max_iter + 1;
}

} // namespace

InnerMax solve_inner_max(const Instance& inst, const Vector& lambda, double tol,
                         const std::optional<DemandVector>& start) {
    const Vector shadow = inst.A.transpose() * lambda;
    DemandVector d = start ? retract(inst, *start) : inst.model->mean(inst.box.center(inst.N()));
    auto obj = [&](const DemandVector& x) { return lagrangian_H(inst, lambda, x); };
    auto grad = [&](const DemandVector& x) -> Vector { return inst.model->grad_phi(x) - shadow; };
    auto proj = [&](const DemandVector& x) -> std::optional<DemandVector> { return retract(inst, x); };
    InnerMax out;
    const int cap = 1000;
    out.iterations = ascend(inst, d, obj, grad, proj, tol, cap, out.residual);
    out.d = d;
    out.p = inst.model->inverse(d);
    if (out.iterations > cap) {
        // Stuck along a face of the box: finish in price space, where the projection is exact.
        out.p = inst.box.clip(out.p);
        out.iterations = cap + polish_prices(inst, lambda, out.p, tol, 100000, out.residual);
        if (out.iterations > cap + 100000)
            throw std::runtime_error("solve_inner_max: no convergence, residual " + std::to_string(out.residual));
        out.d = inst.model->mean(out.p);
    }
    out.value = obj(out.d);
    return out;
}

double dual_Q(const Instance& inst, const Vector& lambda, double tol) {
    return solve_inner_max(inst, lambda, tol).value;
}

Vector grad_Q(const Instance& inst, const Vector& lambda, double tol) {
    return inst.gamma - inst.A * solve_inner_max(inst, lambda, tol).d;
}

bool project_polyhedron(const Matrix& G, const Vector& h, Vector& x, double tol, int max_sweeps) {
    const Eigen::Index k = G.rows();
    Matrix corr = Matrix::Zero(x.size(), k);
    for (int sweep = 0; sweep < max_sweeps; ++sweep) {
        double change = 0.0;
        for (Eigen::Index j = 0; j < k; ++j) {
            Vector y = x + corr.col(j);
            const double viol = G.row(j).dot(y) - h(j);
            Vector nx = y;
            if (viol > 0) nx -= (viol / G.row(j).squaredNorm()) * G.row(j).transpose();
            corr.col(j) = y - nx;
            change = std::max(change, (nx - x).cwiseAbs().maxCoeff());
            x = nx;
        }
        const double worst = (G * x - h).maxCoeff();
        if (change <= tol && worst <= tol) return true;
    }
    return false;
}

namespace {

// Nonnegative least squares min |A^T l - g| by active-set enumeration (M small).
Vector kkt_multipliers(const Matrix& A, const Vector& g, const std::vector<bool>& candidate) {
    const Eigen::Index m = A.rows();
    Vector best = Vector::Zero(m);
    double best_res = g.norm();
    for (unsigned mask = 1; mask < (1u << m); ++mask) {
        std::vector<Eigen::Index> rows;
        bool usable = true;
        for (Eigen::Index j = 0; j < m; ++j)
            if (mask & (1u << j)) {
                usable = usable && candidate[static_cast<std::size_t>(j)];
                rows.push_back(j);
            }
        if (!usable) continue;
        Matrix As(static_cast<Eigen::Index>(rows.size()), A.cols());
        for (std::size_t r = 0; r < rows.size(); ++r) As.row(static_cast<Eigen::Index>(r)) = A.row(rows[r]);
        Vector ls = As.transpose().colPivHouseholderQr().solve(g);
        if ((ls.array() < 0).any()) continue;
        const double res = (As.transpose() * ls - g).norm();
        if (res < best_res) {
            best_res = res;
            best.setZero();
            for (std::size_t r = 0; r < rows.size(); ++r) best(rows[r]) = ls(static_cast<Eigen::Index>(r));
        }
    }
    return best;
}

} // namespace

FluidSolution solve_fluid(const Instance& inst, double tol, const std::optional<DualSet>& dual_set) {
    inst.validate();
    if (inst.M() > 16) throw std::invalid_argument("solve_fluid: at most 16 resources supported");
    const auto& model = *inst.model;
    FluidSolution sol;

    // Feasibility: the all-max-price demand is the smallest the box can induce.
    DemandVector d = model.mean(PriceVector::Constant(inst.N(), inst.box.hi));
    if ((inst.A * d - inst.gamma).maxCoeff() > 1e-12)
        throw std::invalid_argument("solve_fluid: infeasible instance, even maximal prices exceed capacity");

    auto obj = [&](const DemandVector& x) { return revenue_phi(model, x); };
    auto grad = [&](const DemandVector& x) -> Vector { return model.grad_phi(x); };
    // Ad <= gamma together with d >= 0, projected exactly, then retracted into the image.
    Matrix G(inst.M() + inst.N(), inst.N());
    G << inst.A, -Matrix::Identity(inst.N(), inst.N());
    Vector h(inst.M() + inst.N());
    h << inst.gamma, Vector::Constant(inst.N(), -1e-12);
    auto proj = [&](const DemandVector& x) -> std::optional<DemandVector> {
        DemandVector y = x;
        for (int round = 0; round < 50; ++round) {
            if (!project_polyhedron(G, h, y, 1e-15, 1000))
                throw std::runtime_error("solve_fluid: feasibility projection did not converge");
            if (!model.in_domain_of_inverse(y)) return std::nullopt;
            DemandVector r = retract(inst, y);
            if ((r - y).norm() <= 1e-15 || (inst.A * r - inst.gamma).maxCoeff() <= 1e-14) return r;
            y = r;
        }
        return std::nullopt;
    };
    double residual = 0.0;
    const int cap = 200000;
    sol.primal_iterations = ascend(inst, d, obj, grad, proj, tol, cap, residual);
    if (sol.primal_iterations > cap)
        throw std::runtime_error("solve_fluid: primal ascent did not converge, residual " +
                                 std::to_string(residual));

    sol.d_star = d;
    sol.p_star = model.inverse(d);
    sol.value = obj(d);
    Vector slack = inst.gamma - inst.A * d;
    sol.binding.resize(static_cast<std::size_t>(inst.M()));
    for (Eigen::Index j = 0; j < inst.M(); ++j) sol.binding[static_cast<std::size_t>(j)] = slack(j) <= 1e-7;

    // Dual: start from KKT multipliers on the active set, then projected
    // gradient descent on Q with backtracking.
    Vector lambda = kkt_multipliers(inst.A, model.grad_phi(d), sol.binding);
    auto clip = [&](const Vector& l) -> Vector {
        return dual_set ? dual_set->clip(l) : Vector(l.cwiseMax(0.0));
    };
    lambda = clip(lambda);
    InnerMax inner = solve_inner_max(inst, lambda, 1e-11, d);
    double q = inner.value;
    double step = 1.0;
    for (int it = 0; it < 500; ++it) {
        Vector g = inst.gamma - inst.A * inner.d;
        Vector next;
        InnerMax cand;
        while (true) {
            next = clip(lambda - step * g);
            cand = solve_inner_max(inst, next, 1e-11, inner.d);
            if (cand.value <= q - 1e-4 * g.dot(lambda - next) + 1e-15 || step < 1e-12) break;
            step *= 0.5;
        }
        const double move = (next - lambda).norm() / step;
        sol.dual_iterations = it + 1;
        lambda = next;
        inner = cand;
        q = cand.value;
        if (move <= 1e-9) break;
        step = std::min(step * 2.0, 1e3);
    }
    sol.lambda_star = lambda;
    sol.duality_gap = q - sol.value;
    sol.feasibility_residual = std::max(0.0, (inst.A * d - inst.gamma).maxCoeff());
    sol.slackness_residual = (lambda.array() * slack.array()).abs().maxCoeff();
    sol.stationarity_residual = (model.grad_phi(d) - inst.A.transpose() * lambda).norm();
    return sol;
}

double fluid_upper_bound(const Instance& inst, const FluidSolution& sol) {
    return static_cast<double>(inst.T) * sol.value;
}

nlohmann::json fluid_to_json(const FluidSolution& sol) {
    auto vec = [](const Vector& v) { return std::vector<double>(v.data(), v.data() + v.size()); };
    return {{"d_star", vec(sol.d_star)},
            {"p_star", vec(sol.p_star)},
            {"lambda_star", vec(sol.lambda_star)},
            {"value", sol.value},
            {"binding", sol.binding},
            {"duality_gap", sol.duality_gap},
            {"feasibility_residual", sol.feasibility_residual},
            {"slackness_residual", sol.slackness_residual},
            {"stationarity_residual", sol.stationarity_residual}};
}

} // namespace nrm
