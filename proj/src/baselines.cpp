#include "nrm/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "nrm/lp.hpp"

namespace nrm {

std::unique_ptr<Policy> clairvoyant_policy(const Instance& inst, const FluidSolution& fluid) {
    if (fluid.p_star.size() != inst.N()) throw std::invalid_argument("clairvoyant: fluid solution mismatch");
    return std::make_unique<ClairvoyantPolicy>(inst.box.clip(fluid.p_star));
}

void EtcConfig::validate() const {
    if (grid_points_per_axis < 2) throw std::invalid_argument("etc: need at least 2 grid points per axis");
    if (exploration_fraction && !(*exploration_fraction > 0 && *exploration_fraction <= 1))
        throw std::invalid_argument("etc: exploration_fraction must lie in (0, 1]");
}

EtcConfig etc_config_from_json(const nlohmann::json& j) {
    EtcConfig c;
    if (j.is_null()) return c;
    try {
        for (auto it = j.begin(); it != j.end(); ++it)
            if (it.key() != "grid_points_per_axis" && it.key() != "exploration_fraction")
                throw std::invalid_argument("etc config: unknown key '" + it.key() + "'");
        c.grid_points_per_axis = j.value("grid_points_per_axis", 8);
        if (j.contains("exploration_fraction")) c.exploration_fraction = j["exploration_fraction"].get<double>();
    } catch (const nlohmann::json::exception& e) {
        throw std::invalid_argument(std::string("etc config: ") + e.what());
    }
    c.validate();
    return c;
}

MixturePlan solve_grid_mixture(const std::vector<PriceVector>& grid, const std::vector<DemandVector>& demand,
                               const Matrix& A, const Vector& rate, long periods) {
    const auto K = static_cast<Eigen::Index>(grid.size());
    Vector c(K);
    Matrix use(A.rows(), K);
    for (Eigen::Index k = 0; k < K; ++k) {
        c(k) = grid[static_cast<std::size_t>(k)].dot(demand[static_cast<std::size_t>(k)]);
        use.col(k) = A * demand[static_cast<std::size_t>(k)];
    }
    MixturePlan plan;
    auto lp = solve_lp(c, use, rate.cwiseMax(0.0), Matrix::Ones(1, K), Vector::Ones(1));
    Vector w = Vector::Zero(K);
    if (lp) {
        w = lp->x;
        plan.value = lp->objective;
    } else {
        // the highest price sits last in the grid ordering
        w(K - 1) = 1.0;
        plan.value = c(K - 1);
        plan.fallback = true;
    }
    // Integer period counts: floor, then largest remainders.
    std::vector<long> n(static_cast<std::size_t>(K));
    std::vector<std::pair<double, Eigen::Index>> frac;
    long assigned = 0;
    for (Eigen::Index k = 0; k < K; ++k) {
        const double exact = w(k) * static_cast<double>(periods);
        n[static_cast<std::size_t>(k)] = static_cast<long>(std::floor(exact));
        assigned += n[static_cast<std::size_t>(k)];
        frac.emplace_back(-(exact - std::floor(exact)), k);
    }
    std::stable_sort(frac.begin(), frac.end());
    for (std::size_t i = 0; assigned < periods; ++i, ++assigned) ++n[static_cast<std::size_t>(frac[i % frac.size()].second)];
    for (Eigen::Index k = 0; k < K; ++k)
        if (n[static_cast<std::size_t>(k)] > 0) {
            plan.prices.push_back(grid[static_cast<std::size_t>(k)]);
            plan.periods.push_back(n[static_cast<std::size_t>(k)]);
        }
    return plan;
}

ExploreThenCommitPolicy::ExploreThenCommitPolicy(const Instance& inst, const EtcConfig& config)
    : A_(inst.A), capacity_(inst.capacity()), T_(inst.T), used_(Vector::Zero(inst.M())) {
    config.validate();
    const Eigen::Index N = inst.N();
    const int k = config.grid_points_per_axis;
    const double size = std::pow(static_cast<double>(k), static_cast<double>(N));
    if (size > 1e6) throw std::invalid_argument("etc: price grid too large");
    // Grid in lexicographic order; the last point is the all-max price.
    std::vector<int> idx(static_cast<std::size_t>(N), 0);
    while (true) {
        PriceVector p(N);
        for (Eigen::Index i = 0; i < N; ++i)
            p(i) = inst.box.lo + inst.box.width() * idx[static_cast<std::size_t>(i)] / (k - 1);
        grid_.push_back(p);
        Eigen::Index pos = N - 1;
        while (pos >= 0 && ++idx[static_cast<std::size_t>(pos)] == k) idx[static_cast<std::size_t>(pos--)] = 0;
        if (pos < 0) break;
    }
    sums_.assign(grid_.size(), DemandVector::Zero(N));
    counts_.assign(grid_.size(), 0);
    const double frac = config.exploration_fraction.value_or(
        std::clamp(std::pow(static_cast<double>(T_), -1.0 / 3.0), 0.05, 0.5));
    explore_ = static_cast<long>(std::floor(frac * static_cast<double>(T_)));
    explore_ = std::min(T_, std::max(explore_, static_cast<long>(grid_.size())));
}

PostedPrice ExploreThenCommitPolicy::next_price(long period) {
    if (period <= explore_) return PostedPrice(grid_[static_cast<std::size_t>(period - 1) % grid_.size()]);
    if (!committed_) commit(period);
    while (block_left_ == 0) {
        ++block_;
        block_left_ = plan_.periods.at(block_);
    }
    return PostedPrice(plan_.prices[block_]);
}

void ExploreThenCommitPolicy::commit(long period) {
    std::vector<DemandVector> means(grid_.size());
    for (std::size_t k = 0; k < grid_.size(); ++k)
        means[k] = counts_[k] ? DemandVector(sums_[k] / static_cast<double>(counts_[k])) : sums_[k];
    const long rest = T_ - period + 1;
    Vector rate = (capacity_ - used_).cwiseMax(0.0) / static_cast<double>(rest);
    plan_ = solve_grid_mixture(grid_, means, A_, rate, rest);
    committed_ = true;
    block_ = 0;
    block_left_ = plan_.periods.front();

    AlgorithmEvent ev;
    ev.kind = AlgorithmEvent::Kind::Note;
    ev.period = period;
    ev.note = plan_.fallback ? "commit: empirical program infeasible, highest grid price"
                             : "commit: " + std::to_string(plan_.prices.size()) + " grid prices";
    events_.push_back(ev);
}

void ExploreThenCommitPolicy::observe(long period, const PostedPrice& price, const DemandVector& realized) {
    if (!price.is_shutoff()) used_ += A_ * realized;
    if (period <= explore_) {
        const std::size_t k = static_cast<std::size_t>(period - 1) % grid_.size();
        sums_[k] += realized;
        ++counts_[k];
    } else {
        --block_left_;
    }
}

std::unique_ptr<Policy> explore_then_commit_policy(const Instance& inst, const EtcConfig& config) {
    return std::make_unique<ExploreThenCommitPolicy>(inst, config);
}

} // namespace nrm
