#include "nrm/sim.hpp"

#include <charconv>
#include <cstring>
#include <ostream>
#include <stdexcept>

namespace nrm {

namespace {

std::vector<double> as_std(const Vector& v) { return {v.data(), v.data() + v.size()}; }

class Fnv1a {
public:
    void add(const void* data, std::size_t len) {
        const auto* bytes = static_cast<const unsigned char*>(data);
        for (std::size_t i = 0; i < len; ++i) {
            h_ ^= bytes[i];
            h_ *= 0x100000001b3ULL;
        }
    }
    void add(double x) { add(&x, sizeof x); }
    void add(long x) { add(&x, sizeof x); }
    void add(const Vector& v) {
        for (Eigen::Index i = 0; i < v.size(); ++i) add(v(i));
    }
    std::uint64_t value() const { return h_; }

private:
    std::uint64_t h_ = 0xcbf29ce484222325ULL;
};

// Watches the period stream and re-derives the accounting on its own.
class Auditor {
public:
    explicit Auditor(const Vector& initial) : last_(initial) {}

    void see(const PeriodRecord& rec, bool shut_off_before) {
        if ((rec.inventory.array() < 0).any()) ++audit_.negative_inventory;
        if ((rec.inventory.array() > last_.array()).any()) ++audit_.inventory_increase;
        if ((shut_off_before || seen_shutoff_) && (rec.demand.array() != 0).any()) ++audit_.sales_after_shutoff;
        last_ = rec.inventory;
        double r = 0.0;
        if (!rec.price.is_shutoff()) r = rec.price.value().dot(rec.demand);
        audit_.recomputed_revenue += r;
        hash_.add(rec.period);
        if (rec.price.is_shutoff())
            hash_.add(-1.0);
        else
            hash_.add(rec.price.value());
        hash_.add(rec.demand);
        hash_.add(rec.revenue);
        hash_.add(rec.inventory);
    }
    void mark_shutoff() { seen_shutoff_ = true; }

    EpisodeAudit finish(double total_revenue) {
        audit_.revenue_identity = audit_.recomputed_revenue == total_revenue;
        audit_.digest = hash_.value();
        return audit_;
    }

private:
    Vector last_;
    bool seen_shutoff_ = false;
    EpisodeAudit audit_;
    Fnv1a hash_;
};

} // namespace

nlohmann::json event_to_json(const AlgorithmEvent& e) {
    nlohmann::json j;
    switch (e.kind) {
    case AlgorithmEvent::Kind::GradEst: j["kind"] = "grad_est"; break;
    case AlgorithmEvent::Kind::DualUpdate: j["kind"] = "dual_update"; break;
    case AlgorithmEvent::Kind::Note: j["kind"] = "note"; break;
    }
    j["period"] = e.period;
    j["epoch"] = e.epoch;
    j["loop"] = e.loop;
    if (e.lambda.size()) j["lambda"] = as_std(e.lambda);
    if (e.price.size()) j["p"] = as_std(e.price);
    if (e.balanced_price.size()) j["p_tilde"] = as_std(e.balanced_price);
    if (!e.balancing.empty()) j["balancing"] = e.balancing;
    if (e.kind == AlgorithmEvent::Kind::GradEst) {
        j["n"] = e.n;
        j["periods"] = e.periods;
        j["u"] = e.u;
        j["clipped"] = e.clipped;
    }
    if (e.d_hat.size()) j["d_hat"] = as_std(e.d_hat);
    if (e.g_hat.size()) j["g_hat"] = as_std(e.g_hat);
    if (e.lambda_next.size()) j["lambda_next"] = as_std(e.lambda_next);
    if (e.eps_bar > 0) j["eps_bar"] = e.eps_bar;
    if (!e.note.empty()) j["note"] = e.note;
    return j;
}

const std::vector<AlgorithmEvent>& Policy::events() const {
    static const std::vector<AlgorithmEvent> none;
    return none;
}

EpisodeTrace run_episode(const Instance& inst, Policy& policy, std::uint64_t seed,
                         const EpisodeOptions& options) {
    inst.validate();
    Rng rng(seed);
    const Eigen::Index N = inst.N();
    InventoryState state{inst.capacity(), false, std::nullopt};
    EpisodeTrace trace;
    trace.horizon = inst.T;
    Auditor auditor(state.remaining);
    if (options.record_periods) trace.periods.reserve(static_cast<std::size_t>(inst.T));
    if (options.trace_csv) write_trace_header(*options.trace_csv, N, inst.M());

    PeriodRecord rec;
    for (long t = 1; t <= inst.T; ++t) {
        const bool was_shut = state.shut_off;
        if (!state.shut_off && (state.remaining.array() <= 0).any()) {
            state.shut_off = true;
            state.shutoff_period = t;
        }
        PostedPrice price = policy.next_price(t);
        if (!price.is_shutoff()) {
            if (price.value().size() != N)
                throw std::invalid_argument("policy " + policy.name() + " posted a price of wrong length");
            if (!inst.box.contains(price.value(), 1e-12))
                throw std::invalid_argument("policy " + policy.name() + " posted a price outside the box at period " +
                                            std::to_string(t));
        }
        DemandVector y = DemandVector::Zero(N);
        if (!state.shut_off) {
            y = sample_demand(*inst.model, price, rng, inst.noise);
            Vector use = inst.A * y;
            if ((use.array() > state.remaining.array()).any()) {
                y.setZero();
                state.shut_off = true;
                state.shutoff_period = t;
            } else {
                state.remaining -= use;
            }
        }
        double revenue = 0.0;
        if (!price.is_shutoff()) revenue = price.value().dot(y);
        trace.total_revenue += revenue;

        rec.period = t;
        rec.price = price;
        rec.demand = y;
        rec.revenue = revenue;
        rec.inventory = state.remaining;
        auditor.see(rec, was_shut);
        if (state.shut_off) auditor.mark_shutoff();
        if (options.trace_csv) write_trace_row(*options.trace_csv, rec);
        if (options.record_periods) trace.periods.push_back(rec);

        policy.observe(t, price, y);
    }
    trace.shutoff_period = state.shutoff_period;
    trace.final_inventory = state.remaining;
    trace.events = policy.events();
    trace.audit = auditor.finish(trace.total_revenue);
    return trace;
}

double percentage_loss(double upper_bound, double revenue) {
    if (!(upper_bound > 0)) throw std::invalid_argument("percentage_loss: bound must be positive");
    return (upper_bound - revenue) / upper_bound;
}

double percentage_loss(const Instance& inst, const FluidSolution& fluid, const EpisodeTrace& trace) {
    return percentage_loss(fluid_upper_bound(inst, fluid), trace.total_revenue);
}

std::string format_double(double x) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof buf, x);
    return std::string(buf, res.ptr);
}

void write_trace_header(std::ostream& out, Eigen::Index N, Eigen::Index M) {
    out << "period";
    for (Eigen::Index i = 1; i <= N; ++i) out << ",p_" << i;
    for (Eigen::Index i = 1; i <= N; ++i) out << ",y_" << i;
    out << ",revenue";
    for (Eigen::Index j = 1; j <= M; ++j) out << ",inv_" << j;
    out << '\n';
}

void write_trace_row(std::ostream& out, const PeriodRecord& rec) {
    out << rec.period;
    for (Eigen::Index i = 0; i < rec.demand.size(); ++i)
        out << ',' << (rec.price.is_shutoff() ? std::string("shutoff") : format_double(rec.price.value()(i)));
    for (Eigen::Index i = 0; i < rec.demand.size(); ++i) out << ',' << format_double(rec.demand(i));
    out << ',' << format_double(rec.revenue);
    for (Eigen::Index j = 0; j < rec.inventory.size(); ++j) out << ',' << format_double(rec.inventory(j));
    out << '\n';
}

void write_trace_csv(std::ostream& out, const EpisodeTrace& trace, Eigen::Index N, Eigen::Index M) {
    write_trace_header(out, N, M);
    for (const auto& rec : trace.periods) write_trace_row(out, rec);
}

void write_events_jsonl(std::ostream& out, const std::vector<AlgorithmEvent>& events) {
    for (const auto& e : events) out << event_to_json(e).dump() << '\n';
}

} // namespace nrm
