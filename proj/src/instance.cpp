#include "nrm/instance.hpp"

#include <fstream>
#include <json.hpp>
#include <stdexcept>

namespace nrm {

using nlohmann::json;

void Instance::validate() const {
    if (!model) throw std::invalid_argument("instance: missing demand model");
    if (A.rows() == 0 || A.cols() == 0) throw std::invalid_argument("instance: empty A");
    if (model->dim() != N()) throw std::invalid_argument("instance: demand model dimension != N");
    if (M() > N()) throw std::invalid_argument("instance: more resources than products");
    if ((A.array() < 0).any()) throw std::invalid_argument("instance: A must be nonnegative");
    if (singular_range(A).second <= 1e-12 * std::max(1.0, singular_range(A).first))
        throw std::invalid_argument("instance: A must have full row rank");
    if (gamma.size() != M()) throw std::invalid_argument("instance: gamma length != M");
    if ((gamma.array() <= 0).any()) throw std::invalid_argument("instance: gamma must be positive");
    if (T < 1) throw std::invalid_argument("instance: T must be >= 1");
    if (!(box.lo >= 0) || !(box.hi > box.lo))
        throw std::invalid_argument("instance: need 0 <= price_min < price_max");
}

Instance Instance::with_horizon(long horizon) const {
    Instance copy = *this;
    copy.T = horizon;
    return copy;
}

Instance reference_instance(long T, NoiseMode noise) {
    Instance inst;
    inst.A.resize(2, 2);
    inst.A << 1, 1, 0, 2;
    inst.gamma = Vector::Constant(2, 0.1);
    inst.T = T;
    inst.box = {0.8, 5.0};
    inst.model = std::make_shared<LogitDemand>(Vector{{0.4, 0.8}}, Vector{{1.5, 2.0}});
    inst.noise = noise;
    return inst;
}

namespace {

Vector to_vector(const json& j, const char* what) {
    if (!j.is_array()) throw std::invalid_argument(std::string(what) + " must be an array");
    Vector v(static_cast<Eigen::Index>(j.size()));
    for (std::size_t i = 0; i < j.size(); ++i) v(static_cast<Eigen::Index>(i)) = j[i].get<double>();
    return v;
}

json from_vector(const Vector& v) { return json(std::vector<double>(v.data(), v.data() + v.size())); }

} // namespace

Instance instance_from_json(const json& j) {
    try {
        Instance inst;
        const auto N = j.at("N").get<Eigen::Index>();
        const auto M = j.at("M").get<Eigen::Index>();
        Vector flat = to_vector(j.at("A"), "A");
        if (flat.size() != N * M) throw std::invalid_argument("A must have M*N entries (row-major)");
        inst.A.resize(M, N);
        for (Eigen::Index r = 0; r < M; ++r)
            for (Eigen::Index c = 0; c < N; ++c) inst.A(r, c) = flat(r * N + c);
        inst.gamma = to_vector(j.at("gamma"), "gamma");
        inst.T = j.at("T").get<long>();
        inst.box = {j.at("price_min").get<double>(), j.at("price_max").get<double>()};
        const json& dm = j.at("demand");
        const auto type = dm.at("type").get<std::string>();
        if (type == "logit") {
            inst.model = std::make_shared<LogitDemand>(to_vector(dm.at("a"), "a"), to_vector(dm.at("b"), "b"));
        } else if (type == "linear") {
            Vector c = to_vector(dm.at("c"), "c");
            Vector bflat = to_vector(dm.at("B"), "B");
            if (bflat.size() != c.size() * c.size()) throw std::invalid_argument("B must be N*N");
            Matrix B(c.size(), c.size());
            for (Eigen::Index r = 0; r < c.size(); ++r)
                for (Eigen::Index k = 0; k < c.size(); ++k) B(r, k) = bflat(r * c.size() + k);
            inst.model = std::make_shared<LinearDemand>(c, B);
        } else {
            throw std::invalid_argument("unknown demand type: " + type);
        }
        inst.noise = parse_noise_mode(j.value("noise", std::string("multinomial")));
        inst.validate();
        return inst;
    } catch (const json::exception& e) {
        throw std::invalid_argument(std::string("instance json: ") + e.what());
    }
}

json instance_to_json(const Instance& inst) {
    json j;
    j["N"] = inst.N();
    j["M"] = inst.M();
    std::vector<double> flat;
    for (Eigen::Index r = 0; r < inst.M(); ++r)
        for (Eigen::Index c = 0; c < inst.N(); ++c) flat.push_back(inst.A(r, c));
    j["A"] = flat;
    j["gamma"] = from_vector(inst.gamma);
    j["T"] = inst.T;
    j["price_min"] = inst.box.lo;
    j["price_max"] = inst.box.hi;
    if (auto* lg = dynamic_cast<const LogitDemand*>(inst.model.get())) {
        j["demand"] = {{"type", "logit"}, {"a", from_vector(lg->a())}, {"b", from_vector(lg->b())}};
    } else if (auto* ln = dynamic_cast<const LinearDemand*>(inst.model.get())) {
        std::vector<double> b;
        for (Eigen::Index r = 0; r < ln->B().rows(); ++r)
            for (Eigen::Index c = 0; c < ln->B().cols(); ++c) b.push_back(ln->B()(r, c));
        j["demand"] = {{"type", "linear"}, {"c", from_vector(ln->c())}, {"B", b}};
    }
    j["noise"] = to_string(inst.noise);
    return j;
}

Instance load_instance(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::invalid_argument("cannot open instance file: " + path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw std::invalid_argument("instance file " + path + ": " + e.what());
    }
    return instance_from_json(j);
}

} // namespace nrm
