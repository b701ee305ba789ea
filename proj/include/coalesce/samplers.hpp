#pragma once

// Path samplers: natural random walks on gasket graphs, heavy-tailed lattice
// walks on the line and the discrete circle, and a continuum stable sampler.
//
// Discrete walks draw a fixed amount of randomness per tick from their
// stream, so the state at tick t depends only on (stream key, t). A gasket
// tick uses two bits (64 ticks per Philox block); a lattice tick uses one
// 64-bit word (2 ticks per block).

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "coalesce/gasket.hpp"
#include "coalesce/rng.hpp"
#include "json.hpp"

namespace coalesce {

struct StableParams {
    double alpha = 1.5;
    double c = 1.0;
    double upsilon = 0.0;

    void validate() const; // ParameterError

    // Levy-density constants c+ and c- implied by (alpha, c, upsilon); zero when alpha == 2.
    double c_plus() const;
    double c_minus() const;
};

// Symmetric integer step law: P{0} = hold_prob, P{j} proportional to |j|^(-alpha-1)
// for 1 <= |j| <= M, with the mass beyond M folded onto +-M.
class LatticeStepLaw {
public:
    static LatticeStepLaw make(double alpha, double hold_prob, std::int32_t max_jump);

    double alpha() const noexcept { return alpha_; }
    double hold_prob() const noexcept { return hold_prob_; }
    std::int32_t max_jump() const noexcept { return max_jump_; }
    // P{step = j}; zero outside [-M, M].
    double probability(std::int32_t j) const;
    std::span<const double> table() const noexcept { return probs_; } // index j + M

    // Alias representation consumed by the stepping kernels.
    std::span<const std::uint32_t> alias_threshold() const noexcept { return threshold_; }
    std::span<const std::uint32_t> alias_index() const noexcept { return alias_; }
    std::uint32_t size() const noexcept { return static_cast<std::uint32_t>(probs_.size()); }

    // Step encoded by one 64-bit random word (hi word selects the bucket, lo word the coin).
    std::int32_t step_from(std::uint64_t word) const;

    // Scale constant of the stable law this walk's sums are attracted to.
    double stable_scale() const;
    // Limit-process time represented by one tick when `sites_per_unit` lattice
    // sites make up one unit of length.
    double tick_duration(double sites_per_unit) const;

    nlohmann::json to_json() const;

private:
    double alpha_ = 1.5;
    double hold_prob_ = 0.5;
    std::int32_t max_jump_ = 1;
    std::vector<double> probs_;
    std::vector<std::uint32_t> threshold_;
    std::vector<std::uint32_t> alias_;
};

struct GasketWalkModel {
    std::shared_ptr<const GasketGraph> graph;
    // Hop distance from each vertex to the nearest far window corner (empty for the finite gasket).
    std::vector<std::uint32_t> boundary_distance;
    // A walker that visits a vertex closer than this to a far window corner is truncated.
    std::uint32_t safety_margin = 1;

    static GasketWalkModel make(std::shared_ptr<const GasketGraph> graph, std::uint32_t safety_margin = 1);
    double tick_duration() const;
    bool in_safety_zone(std::uint32_t v) const {
        return boundary_distance.empty() || boundary_distance[v] >= safety_margin;
    }
};

struct LatticeWalkModel {
    std::shared_ptr<const LatticeStepLaw> law;
    std::int64_t circumference = 0; // 0 for the line
    double sites_per_unit = 1.0;

    static LatticeWalkModel circle(std::shared_ptr<const LatticeStepLaw> law, std::int64_t circumference);
    static LatticeWalkModel line(std::shared_ptr<const LatticeStepLaw> law, double sites_per_unit);
    double tick_duration() const { return law->tick_duration(sites_per_unit); }
    bool is_circle() const noexcept { return circumference > 0; }
};

using WalkModel = std::variant<GasketWalkModel, LatticeWalkModel>;

enum class ModelTag { GasketFinite, GasketWindow, LatticeLine, LatticeCircle, Continuum };
ModelTag model_tag(const WalkModel& model);
std::string to_string(ModelTag tag);
double tick_duration(const WalkModel& model);
// Metric distance between two states (plane units for the gasket, sites for lattices).
double state_distance(const WalkModel& model, std::int64_t x, std::int64_t y);
// Key identifying a location, used to key particle streams by starting position.
std::uint64_t location_code(const WalkModel& model, std::int64_t state);
std::string describe_state(const WalkModel& model, std::int64_t state);

// Per-tick randomness of one walker; tick t reads the same bits regardless of
// how the stream is consumed.
class WalkStream {
public:
    WalkStream(PhiloxKey key, RngDomain domain) : key_(key), domain_(domain) {}

    std::uint32_t choice2_at(std::uint64_t tick) const; // gasket domain
    std::uint64_t word_at(std::uint64_t tick) const;    // lattice domain

    std::uint32_t next_choice2() { return choice2_at(tick_++); }
    std::uint64_t next_word() { return word_at(tick_++); }
    std::uint64_t tick() const noexcept { return tick_; }

private:
    PhiloxKey key_;
    RngDomain domain_;
    std::uint64_t tick_ = 0;
};

std::uint32_t gasket_walk_step(const GasketGraph& graph, std::uint32_t state, WalkStream& rng);
std::int32_t lattice_step(const LatticeStepLaw& law, WalkStream& rng);

std::int64_t circle_reduce(std::int64_t position, std::int64_t circumference);
std::int64_t circle_distance(std::int64_t x, std::int64_t y, std::int64_t circumference);

struct PathSample {
    ModelTag model = ModelTag::GasketFinite;
    std::int64_t start = 0;
    std::vector<std::int64_t> states; // states[t] at time t * tick_duration; states[0] == start
    double tick_duration = 1.0;
    bool truncated = false;

    double time_at(std::size_t tick) const { return static_cast<double>(tick) * tick_duration; }
};

// Free path of one walker whose randomness comes from `key`.
PathSample simulate_walk(const WalkModel& model, std::int64_t start, std::uint64_t ticks, PhiloxKey key);

double max_displacement(const WalkModel& model, const PathSample& path);

// Structure-of-arrays population of independent walkers advanced one tick at
// a time through the active SIMD kernels.
class WalkerBatch {
public:
    explicit WalkerBatch(const WalkModel& model);

    void add(PhiloxKey key, std::int64_t state);
    std::size_t size() const noexcept { return key_lo_.size(); }
    std::int64_t state(std::size_t i) const;
    PhiloxKey key(std::size_t i) const { return {key_lo_[i], key_hi_[i]}; }
    // Advance every walker from tick t to t + 1.
    void step(std::uint64_t tick);
    // Keep walkers whose flag is true, preserving order.
    void keep(std::span<const bool> keep_flags);
    void clear();

private:
    const WalkModel* model_;
    bool gasket_;
    std::vector<std::uint32_t> key_lo_;
    std::vector<std::uint32_t> key_hi_;
    std::vector<std::uint32_t> vertex_;  // gasket
    std::vector<std::int64_t> position_; // lattice
    std::vector<std::uint32_t> block_;   // 4 * size words
    std::uint64_t block_index_ = ~std::uint64_t{0};
};

// One increment of the stable law over a time step dt (Chambers-Mallows-Stuck).
double stable_increment(const StableParams& params, double dt, RngStream& rng);
// Values at times k * horizon / steps, k = 0..steps, starting from 0.
std::vector<double> simulate_stable_path(const StableParams& params, double horizon, std::size_t steps, RngStream& rng);
double max_abs(std::span<const double> values);

// CSV rows (replicate, particle, tick, state) for optional path dumps.
void append_path_csv(std::string& out, std::uint64_t replicate, std::uint64_t particle, const WalkModel& model,
                     const PathSample& path);

} // namespace coalesce
