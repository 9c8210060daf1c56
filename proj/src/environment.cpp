#include "nrm/environment.hpp"

#include <stdexcept>

namespace nrm {

CommitResult ExpectedDemandEnvironment::commit(const PriceVector& price, long periods) {
    if (periods <= 0) throw std::invalid_argument("commit: periods must be positive");
    return {model_.mean(price), periods};
}

CommitResult SampledDemandEnvironment::commit(const PriceVector& price, long periods) {
    if (periods <= 0) throw std::invalid_argument("commit: periods must be positive");
    DemandVector sum = DemandVector::Zero(model_.dim());
    PostedPrice posted(price);
    for (long t = 0; t < periods; ++t) sum += sample_demand(model_, posted, rng_, noise_);
    return {sum / static_cast<double>(periods), periods};
}

} // namespace nrm
