#pragma once

#include <memory>
#include <json.hpp>

#include "nrm/demand.hpp"

namespace nrm {

struct Instance {
    Matrix A;      // M x N, nonnegative, full row rank
    Vector gamma;  // per-period capacity C / T
    long T = 1;
    PriceBox box;
    std::shared_ptr<const DemandModel> model;
    NoiseMode noise = NoiseMode::Multinomial;

    Eigen::Index N() const { return A.cols(); }
    Eigen::Index M() const { return A.rows(); }
    Vector capacity() const { return gamma * static_cast<double>(T); }

    /// Throws std::invalid_argument describing the first violated invariant.
    void validate() const;
    Instance with_horizon(long horizon) const;
};

/// The two-product, two-resource logit instance used throughout the tests.
Instance reference_instance(long T = 1000, NoiseMode noise = NoiseMode::Multinomial);

Instance instance_from_json(const nlohmann::json& j);
nlohmann::json instance_to_json(const Instance& inst);
Instance load_instance(const std::string& path);

} // namespace nrm
