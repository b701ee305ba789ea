#include "coalesce/samplers.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include <boost/math/special_functions/gamma.hpp>
#include <boost/math/special_functions/zeta.hpp>

#include "coalesce/errors.hpp"
#include "coalesce/kernels.hpp"

namespace coalesce {

namespace {

constexpr double kPi = std::numbers::pi;

std::uint64_t pack_address(const VertexAddress& v) {
    return (static_cast<std::uint64_t>(v.a) << 32) | static_cast<std::uint32_t>(v.b);
}

} // namespace

// ---------------------------------------------------------------- stable law

void StableParams::validate() const {
    if (!(alpha > 1.0 && alpha <= 2.0)) throw ParameterError("stable alpha must lie in (1, 2], got " + std::to_string(alpha));
    if (!(c > 0.0)) throw ParameterError("stable scale c must be positive");
    if (!(upsilon >= -1.0 && upsilon <= 1.0)) throw ParameterError("stable skewness must lie in [-1, 1]");
}

double StableParams::c_plus() const {
    validate();
    if (alpha == 2.0) return 0.0;
    // c = -Gamma(-alpha) cos(pi alpha / 2) (c+ + c-), upsilon = (c+ - c-) / (c+ + c-)
    const double total = c / (-std::tgamma(-alpha) * std::cos(kPi * alpha / 2.0));
    return total * (1.0 + upsilon) / 2.0;
}

double StableParams::c_minus() const {
    validate();
    if (alpha == 2.0) return 0.0;
    const double total = c / (-std::tgamma(-alpha) * std::cos(kPi * alpha / 2.0));
    return total * (1.0 - upsilon) / 2.0;
}

double stable_increment(const StableParams& params, double dt, RngStream& rng) {
    params.validate();
    if (!(dt > 0.0)) throw ParameterError("stable_increment: dt must be positive");
    const double alpha = params.alpha;
    const double v = kPi * (rng.uniform_open01() - 0.5);
    const double w = rng.exponential();
    const double scale = std::pow(params.c * dt, 1.0 / alpha);
    if (alpha == 2.0) return scale * 2.0 * std::sin(v) * std::sqrt(w);
    const double skew = params.upsilon * std::tan(kPi * alpha / 2.0);
    const double shift = std::atan(skew) / alpha;
    const double s = std::pow(1.0 + skew * skew, 1.0 / (2.0 * alpha));
    const double x = s * std::sin(alpha * (v + shift)) / std::pow(std::cos(v), 1.0 / alpha) *
                     std::pow(std::cos(v - alpha * (v + shift)) / w, (1.0 - alpha) / alpha);
    return scale * x;
}

std::vector<double> simulate_stable_path(const StableParams& params, double horizon, std::size_t steps, RngStream& rng) {
    if (steps == 0) throw ContractError("simulate_stable_path: steps must be positive");
    std::vector<double> values(steps + 1, 0.0);
    const double dt = horizon / static_cast<double>(steps);
    for (std::size_t k = 1; k <= steps; ++k) values[k] = values[k - 1] + stable_increment(params, dt, rng);
    return values;
}

double max_abs(std::span<const double> values) {
    double m = 0.0;
    for (double v : values) m = std::max(m, std::abs(v));
    return m;
}

// ---------------------------------------------------------------- lattice law

LatticeStepLaw LatticeStepLaw::make(double alpha, double hold_prob, std::int32_t max_jump) {
    if (!(alpha > 1.0 && alpha < 2.0)) throw ParameterError("lattice tail index must lie in (1, 2)");
    if (!(hold_prob > 0.0 && hold_prob < 1.0)) throw ParameterError("hold probability must lie in (0, 1)");
    if (max_jump < 1) throw ParameterError("lattice truncation must be >= 1");

    LatticeStepLaw law;
    law.alpha_ = alpha;
    law.hold_prob_ = hold_prob;
    law.max_jump_ = max_jump;
    const std::size_t size = 2 * static_cast<std::size_t>(max_jump) + 1;
    law.probs_.assign(size, 0.0);

    const double zeta = boost::math::zeta(alpha + 1.0);
    double partial = 0.0;
    for (std::int32_t j = 1; j <= max_jump; ++j) partial += std::pow(static_cast<double>(j), -alpha - 1.0);
    const double per_side = (1.0 - hold_prob) / 2.0;
    for (std::int32_t j = 1; j <= max_jump; ++j) {
        const double p = per_side * std::pow(static_cast<double>(j), -alpha - 1.0) / zeta;
        law.probs_[static_cast<std::size_t>(max_jump + j)] = p;
        law.probs_[static_cast<std::size_t>(max_jump - j)] = p;
    }
    const double tail = per_side * std::max(0.0, zeta - partial) / zeta;
    law.probs_[size - 1] += tail;
    law.probs_[0] += tail;
    law.probs_[static_cast<std::size_t>(max_jump)] = hold_prob;

    // Vose alias construction.
    std::vector<double> scaled(size);
    std::vector<std::uint32_t> small, large;
    for (std::size_t i = 0; i < size; ++i) {
        scaled[i] = law.probs_[i] * static_cast<double>(size);
        (scaled[i] < 1.0 ? small : large).push_back(static_cast<std::uint32_t>(i));
    }
    std::vector<double> keep(size, 1.0);
    law.alias_.resize(size);
    for (std::size_t i = 0; i < size; ++i) law.alias_[i] = static_cast<std::uint32_t>(i);
    while (!small.empty() && !large.empty()) {
        const std::uint32_t s = small.back();
        small.pop_back();
        const std::uint32_t l = large.back();
        keep[s] = scaled[s];
        law.alias_[s] = l;
        scaled[l] = (scaled[l] + scaled[s]) - 1.0;
        if (scaled[l] < 1.0) {
            large.pop_back();
            small.push_back(l);
        }
    }
    law.threshold_.resize(size);
    for (std::size_t i = 0; i < size; ++i) {
        const double t = std::ldexp(keep[i], 32);
        law.threshold_[i] = t >= 4294967295.0 ? 0xFFFFFFFFu : static_cast<std::uint32_t>(std::llround(t));
    }
    return law;
}

double LatticeStepLaw::probability(std::int32_t j) const {
    if (j < -max_jump_ || j > max_jump_) return 0.0;
    return probs_[static_cast<std::size_t>(j + max_jump_)];
}

std::int32_t LatticeStepLaw::step_from(std::uint64_t word) const {
    const auto hi = static_cast<std::uint32_t>(word >> 32);
    const auto lo = static_cast<std::uint32_t>(word);
    const auto idx = static_cast<std::uint32_t>((std::uint64_t{hi} * size()) >> 32);
    const std::uint32_t pick = lo < threshold_[idx] ? idx : alias_[idx];
    return static_cast<std::int32_t>(pick) - max_jump_;
}

double LatticeStepLaw::stable_scale() const {
    const double levy = (1.0 - hold_prob_) / (2.0 * boost::math::zeta(alpha_ + 1.0));
    return -std::tgamma(-alpha_) * std::cos(kPi * alpha_ / 2.0) * 2.0 * levy;
}

double LatticeStepLaw::tick_duration(double sites_per_unit) const {
    return stable_scale() / std::pow(sites_per_unit, alpha_);
}

nlohmann::json LatticeStepLaw::to_json() const {
    nlohmann::json probs = nlohmann::json::array();
    for (double p : probs_) probs.push_back(p);
    return {{"alpha", alpha_}, {"hold_prob", hold_prob_}, {"max_jump", max_jump_}, {"stable_scale", stable_scale()},
            {"probabilities", probs}};
}

// ---------------------------------------------------------------- models

GasketWalkModel GasketWalkModel::make(std::shared_ptr<const GasketGraph> graph, std::uint32_t safety_margin) {
    GasketWalkModel m;
    m.graph = std::move(graph);
    m.safety_margin = safety_margin;
    if (m.graph->window_exponent() > 0) {
        const auto corners = m.graph->far_corners();
        m.boundary_distance = bfs_distances(*m.graph, corners);
    }
    return m;
}

double GasketWalkModel::tick_duration() const { return std::pow(5.0, -graph->level()); }

LatticeWalkModel LatticeWalkModel::circle(std::shared_ptr<const LatticeStepLaw> law, std::int64_t circumference) {
    if (circumference < 2) throw ParameterError("circle circumference must be >= 2");
    if (law->max_jump() > circumference) throw ParameterError("lattice truncation exceeds the circumference");
    return {std::move(law), circumference, static_cast<double>(circumference)};
}

LatticeWalkModel LatticeWalkModel::line(std::shared_ptr<const LatticeStepLaw> law, double sites_per_unit) {
    if (!(sites_per_unit > 0.0)) throw ParameterError("sites_per_unit must be positive");
    return {std::move(law), 0, sites_per_unit};
}

ModelTag model_tag(const WalkModel& model) {
    if (const auto* g = std::get_if<GasketWalkModel>(&model)) {
        return g->graph->window_exponent() == 0 ? ModelTag::GasketFinite : ModelTag::GasketWindow;
    }
    return std::get<LatticeWalkModel>(model).is_circle() ? ModelTag::LatticeCircle : ModelTag::LatticeLine;
}

std::string to_string(ModelTag tag) {
    switch (tag) {
    case ModelTag::GasketFinite: return "gasket-finite";
    case ModelTag::GasketWindow: return "gasket-window";
    case ModelTag::LatticeLine: return "lattice-line";
    case ModelTag::LatticeCircle: return "lattice-circle";
    case ModelTag::Continuum: return "continuum-stable";
    }
    return "unknown";
}

double tick_duration(const WalkModel& model) {
    return std::visit([](const auto& m) { return m.tick_duration(); }, model);
}

double state_distance(const WalkModel& model, std::int64_t x, std::int64_t y) {
    if (const auto* g = std::get_if<GasketWalkModel>(&model)) {
        return euclidean_distance(g->graph->address(static_cast<std::uint32_t>(x)),
                                  g->graph->address(static_cast<std::uint32_t>(y)));
    }
    const auto& l = std::get<LatticeWalkModel>(model);
    if (l.is_circle()) return static_cast<double>(circle_distance(x, y, l.circumference));
    return static_cast<double>(x > y ? x - y : y - x);
}

std::uint64_t location_code(const WalkModel& model, std::int64_t state) {
    if (const auto* g = std::get_if<GasketWalkModel>(&model)) {
        return pack_address(g->graph->address(static_cast<std::uint32_t>(state)));
    }
    return static_cast<std::uint64_t>(state);
}

std::string describe_state(const WalkModel& model, std::int64_t state) {
    if (const auto* g = std::get_if<GasketWalkModel>(&model)) {
        const auto& v = g->graph->address(static_cast<std::uint32_t>(state));
        return "(" + std::to_string(v.a) + " " + std::to_string(v.b) + ")";
    }
    return std::to_string(state);
}

// ---------------------------------------------------------------- single walks

std::uint32_t WalkStream::choice2_at(std::uint64_t tick) const {
    const PhiloxBlock b = stream_block(key_, domain_, tick / 64);
    const unsigned phase = static_cast<unsigned>(tick % 64);
    return (b[phase / 16] >> (2 * (phase % 16))) & 3u;
}

std::uint64_t WalkStream::word_at(std::uint64_t tick) const {
    const PhiloxBlock b = stream_block(key_, domain_, tick / 2);
    const unsigned half = static_cast<unsigned>(tick % 2);
    return std::uint64_t{b[2 * half]} | (std::uint64_t{b[2 * half + 1]} << 32);
}

std::uint32_t gasket_walk_step(const GasketGraph& graph, std::uint32_t state, WalkStream& rng) {
    return graph.neighbor_slots()[4 * std::size_t{state} + rng.next_choice2()];
}

std::int32_t lattice_step(const LatticeStepLaw& law, WalkStream& rng) { return law.step_from(rng.next_word()); }

std::int64_t circle_reduce(std::int64_t position, std::int64_t circumference) {
    if (circumference < 2) throw ParameterError("circle circumference must be >= 2");
    const std::int64_t r = position % circumference;
    return r < 0 ? r + circumference : r;
}

std::int64_t circle_distance(std::int64_t x, std::int64_t y, std::int64_t circumference) {
    const std::int64_t d = circle_reduce(x - y, circumference);
    return std::min(d, circumference - d);
}

PathSample simulate_walk(const WalkModel& model, std::int64_t start, std::uint64_t ticks, PhiloxKey key) {
    PathSample path;
    path.model = model_tag(model);
    path.tick_duration = tick_duration(model);
    path.states.reserve(ticks + 1);
    if (const auto* g = std::get_if<GasketWalkModel>(&model)) {
        if (start < 0 || static_cast<std::size_t>(start) >= g->graph->vertex_count()) {
            throw ContractError("simulate_walk: start vertex out of range");
        }
        WalkStream rng(key, RngDomain::GasketWalk);
        auto v = static_cast<std::uint32_t>(start);
        path.start = start;
        path.states.push_back(v);
        path.truncated = !g->in_safety_zone(v);
        for (std::uint64_t t = 0; t < ticks; ++t) {
            v = gasket_walk_step(*g->graph, v, rng);
            path.states.push_back(v);
            if (!g->in_safety_zone(v)) path.truncated = true;
        }
        return path;
    }
    const auto& l = std::get<LatticeWalkModel>(model);
    WalkStream rng(key, RngDomain::LatticeWalk);
    std::int64_t x = l.is_circle() ? circle_reduce(start, l.circumference) : start;
    path.start = x;
    path.states.push_back(x);
    for (std::uint64_t t = 0; t < ticks; ++t) {
        x += lattice_step(*l.law, rng);
        if (l.is_circle()) x = circle_reduce(x, l.circumference);
        path.states.push_back(x);
    }
    return path;
}

double max_displacement(const WalkModel& model, const PathSample& path) {
    if (path.states.empty()) throw ContractError("max_displacement: empty path");
    double best = 0.0;
    if (path.model == ModelTag::LatticeLine) {
        // Unwrapped integer walk: plain absolute displacement.
        for (std::int64_t s : path.states) best = std::max(best, static_cast<double>(s > path.start ? s - path.start : path.start - s));
        return best;
    }
    for (std::int64_t s : path.states) best = std::max(best, state_distance(model, path.start, s));
    return best;
}

// ---------------------------------------------------------------- batches

WalkerBatch::WalkerBatch(const WalkModel& model) : model_(&model), gasket_(std::holds_alternative<GasketWalkModel>(model)) {}

void WalkerBatch::add(PhiloxKey key, std::int64_t state) {
    key_lo_.push_back(key.lo);
    key_hi_.push_back(key.hi);
    if (gasket_) {
        vertex_.push_back(static_cast<std::uint32_t>(state));
    } else {
        const auto& l = std::get<LatticeWalkModel>(*model_);
        position_.push_back(l.is_circle() ? circle_reduce(state, l.circumference) : state);
    }
    block_index_ = ~std::uint64_t{0};
}

std::int64_t WalkerBatch::state(std::size_t i) const { return gasket_ ? std::int64_t{vertex_[i]} : position_[i]; }

void WalkerBatch::step(std::uint64_t tick) {
    const std::size_t n = size();
    if (n == 0) return;
    const auto& k = kernels::active();
    if (gasket_) {
        const auto& g = std::get<GasketWalkModel>(*model_);
        const std::uint64_t block = tick / 64;
        if (block != block_index_) {
            block_.resize(4 * n);
            k.philox_blocks(key_lo_.data(), key_hi_.data(), block, static_cast<std::uint32_t>(RngDomain::GasketWalk), n,
                            block_.data());
            block_index_ = block;
        }
        const unsigned phase = static_cast<unsigned>(tick % 64);
        k.gasket_step(g.graph->neighbor_slots().data(), block_.data() + (phase / 16) * n, 2 * (phase % 16), n,
                      vertex_.data());
        return;
    }
    const auto& l = std::get<LatticeWalkModel>(*model_);
    const std::uint64_t block = tick / 2;
    if (block != block_index_) {
        block_.resize(4 * n);
        k.philox_blocks(key_lo_.data(), key_hi_.data(), block, static_cast<std::uint32_t>(RngDomain::LatticeWalk), n,
                        block_.data());
        block_index_ = block;
    }
    const unsigned half = static_cast<unsigned>(tick % 2);
    const std::uint32_t* lo = block_.data() + (2 * half) * n;
    const std::uint32_t* hi = block_.data() + (2 * half + 1) * n;
    k.alias_step(l.law->alias_threshold().data(), l.law->alias_index().data(), l.law->size(), l.law->max_jump(), hi, lo,
                 n, l.circumference, position_.data());
}

void WalkerBatch::keep(std::span<const bool> keep_flags) {
    std::size_t out = 0;
    for (std::size_t i = 0; i < size(); ++i) {
        if (!keep_flags[i]) continue;
        key_lo_[out] = key_lo_[i];
        key_hi_[out] = key_hi_[i];
        if (gasket_) vertex_[out] = vertex_[i];
        else position_[out] = position_[i];
        ++out;
    }
    key_lo_.resize(out);
    key_hi_.resize(out);
    if (gasket_) vertex_.resize(out);
    else position_.resize(out);
    block_index_ = ~std::uint64_t{0};
}

void WalkerBatch::clear() {
    key_lo_.clear();
    key_hi_.clear();
    vertex_.clear();
    position_.clear();
    block_index_ = ~std::uint64_t{0};
}

void append_path_csv(std::string& out, std::uint64_t replicate, std::uint64_t particle, const WalkModel& model,
                     const PathSample& path) {
    for (std::size_t t = 0; t < path.states.size(); ++t) {
        out += std::to_string(replicate) + "," + std::to_string(particle) + "," + std::to_string(t) + "," +
               describe_state(model, path.states[t]) + "\n";
    }
}

} // namespace coalesce
