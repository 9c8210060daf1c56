#pragma once

#include <memory>

#include "nrm/sim.hpp"

namespace nrm {

/// Posts the fluid-optimal price every period.
class ClairvoyantPolicy final : public Policy {
public:
    explicit ClairvoyantPolicy(PriceVector p_star) : price_(std::move(p_star)) {}
    PostedPrice next_price(long) override { return PostedPrice(price_); }
    void observe(long, const PostedPrice&, const DemandVector&) override {}
    std::string name() const override { return "clairvoyant"; }

private:
    PriceVector price_;
};

std::unique_ptr<Policy> clairvoyant_policy(const Instance& inst, const FluidSolution& fluid);

struct EtcConfig {
    int grid_points_per_axis = 8;
    /// Unset: T^(-1/3) clamped to [0.05, 0.5].
    std::optional<double> exploration_fraction;

    void validate() const;
};

EtcConfig etc_config_from_json(const nlohmann::json& j);

struct MixturePlan {
    std::vector<PriceVector> prices;
    std::vector<long> periods;
    double value = 0;  // LP objective per period
    bool fallback = false;
};

/// Best mixture of grid prices whose expected consumption rate fits `rate`.
/// Falls back to the highest grid price when no mixture fits.
MixturePlan solve_grid_mixture(const std::vector<PriceVector>& grid, const std::vector<DemandVector>& demand,
                               const Matrix& A, const Vector& rate, long periods);

/// Uniform grid exploration, then an empirical fluid LP over grid mixtures.
class ExploreThenCommitPolicy final : public Policy {
public:
    ExploreThenCommitPolicy(const Instance& inst, const EtcConfig& config);

    PostedPrice next_price(long period) override;
    void observe(long period, const PostedPrice& price, const DemandVector& realized) override;
    const std::vector<AlgorithmEvent>& events() const override { return events_; }
    std::string name() const override { return "etc"; }

    long exploration_periods() const { return explore_; }
    const std::vector<PriceVector>& grid() const { return grid_; }
    const MixturePlan& plan() const { return plan_; }

private:
    void commit(long period);

    Matrix A_;
    Vector capacity_;
    long T_;
    long explore_;
    std::vector<PriceVector> grid_;
    std::vector<DemandVector> sums_;
    std::vector<long> counts_;
    Vector used_;
    MixturePlan plan_;
    bool committed_ = false;
    std::size_t block_ = 0;
    long block_left_ = 0;
    std::vector<AlgorithmEvent> events_;
};

std::unique_ptr<Policy> explore_then_commit_policy(const Instance& inst, const EtcConfig& config);

} // namespace nrm
