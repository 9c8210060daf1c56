#pragma once

#include "nrm/demand.hpp"

namespace nrm {

/// Hold `price` for `periods` consecutive periods.
struct CommitRequest {
    PriceVector price;
    long periods = 0;
};

/// Average realized demand over the committed periods.
struct CommitResult {
    DemandVector mean_demand;
    long periods = 0;
};

/// Source of demand feedback for the learning routines when they are driven
/// outside the period-by-period simulator.
class PricingEnvironment {
public:
    virtual ~PricingEnvironment() = default;
    virtual CommitResult commit(const PriceVector& price, long periods) = 0;
};

/// Returns D(p) exactly; cost does not depend on `periods`.
class ExpectedDemandEnvironment final : public PricingEnvironment {
public:
    explicit ExpectedDemandEnvironment(const DemandModel& model) : model_(model) {}
    CommitResult commit(const PriceVector& price, long periods) override;

private:
    const DemandModel& model_;
};

/// Draws one purchase per period, no inventory.
class SampledDemandEnvironment final : public PricingEnvironment {
public:
    SampledDemandEnvironment(const DemandModel& model, Rng& rng, NoiseMode noise)
        : model_(model), rng_(rng), noise_(noise) {}
    CommitResult commit(const PriceVector& price, long periods) override;

private:
    const DemandModel& model_;
    Rng& rng_;
    NoiseMode noise_;
};

} // namespace nrm
