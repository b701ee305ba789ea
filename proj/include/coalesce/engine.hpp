#pragma once

// Coalescing particle systems over synchronized ticks.
//
// A ranking lists particles from highest to lowest priority. When live
// classes share a location at a tick, every class merges into the co-located
// class whose representative has the smallest rank; the representative of a
// class keeps following its own free path.

#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "coalesce/rng.hpp"
#include "coalesce/samplers.hpp"
#include "json.hpp"

namespace coalesce {

class Ranking {
public:
    static Ranking identity(std::size_t n);
    // order[r] is the particle holding rank r; ContractError unless a bijection.
    static Ranking from_order(std::vector<std::uint32_t> order);
    static Ranking random(std::size_t n, RngStream& rng);

    std::size_t size() const noexcept { return order_.size(); }
    std::uint32_t particle_at(std::size_t rank) const { return order_[rank]; }
    std::uint32_t rank_of(std::uint32_t particle) const { return rank_[particle]; }
    std::span<const std::uint32_t> order() const noexcept { return order_; }

    bool operator==(const Ranking&) const = default;

private:
    std::vector<std::uint32_t> order_;
    std::vector<std::uint32_t> rank_;
};

// Union-find whose class representative is the member of minimal rank.
class CoalescentPartition {
public:
    explicit CoalescentPartition(const Ranking& ranking);

    std::uint32_t find(std::uint32_t particle);
    std::uint32_t find(std::uint32_t particle) const;
    // Merge the class of `absorbed` into the class of `survivor`; the merged
    // representative is whichever of the two representatives ranks lower.
    std::uint32_t merge(std::uint32_t absorbed, std::uint32_t survivor);
    std::size_t class_count() const noexcept { return classes_; }
    std::size_t size() const noexcept { return parent_.size(); }
    bool is_representative(std::uint32_t particle) const { return parent_[particle] == particle; }

private:
    std::vector<std::uint32_t> parent_;
    std::vector<std::uint32_t> rank_;
    std::size_t classes_ = 0;
};

struct CoalescenceEvent {
    std::uint64_t tick = 0;
    std::uint32_t absorbed = 0; // representative that stops existing
    std::uint32_t survivor = 0; // representative it joins
    std::int64_t location = 0;

    bool operator==(const CoalescenceEvent&) const = default;
};

struct EventLog {
    std::size_t particle_count = 0;
    double tick_duration = 1.0;
    std::uint64_t horizon = 0; // last tick simulated
    std::vector<CoalescenceEvent> events;

    bool operator==(const EventLog&) const = default;
    std::size_t final_count() const noexcept { return particle_count - events.size(); }
    // Number of classes after all merges at tick t.
    std::size_t count_at(std::uint64_t tick) const;
};

struct SetState {
    std::uint64_t tick = 0;
    double time = 0.0;
    std::vector<std::int64_t> locations; // sorted, one per class

    bool operator==(const SetState&) const = default;
    std::size_t count() const noexcept { return locations.size(); }
};

// Smallest rank index each entry merges into. `locations` lists live
// representatives in increasing rank; target[i] == i when entry i survives.
void resolve_collisions(std::span<const std::int64_t> locations, std::vector<std::uint32_t>& target);

struct CollisionResult {
    std::vector<PathSample> paths; // coalesced paths, indexed like the input
    EventLog log;
};

// Offline collision rule applied to complete free paths.
CollisionResult apply_collision_rule(std::span<const PathSample> paths, const Ranking& ranking);

// {0, 1, 2, 4, ...} up to and including `horizon`.
std::vector<std::uint64_t> geometric_tick_grid(std::uint64_t horizon);

struct EvolveOptions {
    std::uint64_t horizon = 0;
    std::vector<std::uint64_t> sample_ticks; // empty: geometric grid up to horizon
    std::size_t stop_at_count = 0;           // stop once at most this many classes remain (0: never)
    bool record_states = true;
};

struct Evolution {
    EventLog log;
    std::vector<SetState> states;
    bool escaped = false; // a live walker entered the window's unsafe zone
    std::optional<std::uint64_t> escape_tick;
    std::uint64_t ticks_run = 0;
};

// Free-path keys for particles started at `starts`, derived from their locations.
std::vector<PhiloxKey> location_keys(const WalkModel& model, std::span<const std::int64_t> starts, std::uint64_t seed,
                                     std::uint64_t replicate);

Evolution evolve_coalescing(const WalkModel& model, std::span<const std::int64_t> starts, const Ranking& ranking,
                            std::span<const PhiloxKey> keys, const EvolveOptions& options);

// Regenerates sampled set states from a log by re-running the representatives' free paths.
std::vector<SetState> replay(const EventLog& log, const WalkModel& model, std::span<const std::int64_t> starts,
                             std::span<const PhiloxKey> keys, std::span<const std::uint64_t> sample_ticks);

inline constexpr std::uint64_t kNeverTick = std::numeric_limits<std::uint64_t>::max();

// First tick with at most m classes, or kNeverTick.
std::uint64_t tau_to_count_tick(const EventLog& log, std::size_t m);
// Same in time units; +infinity when not reached within the horizon.
double tau_to_count(const EventLog& log, std::size_t m);

// Union of locations over sampled states whose tick lies in [first_tick, last_tick].
std::vector<std::int64_t> range_set(std::span<const SetState> states, std::uint64_t first_tick, std::uint64_t last_tick);

// Disjoint pairs of particles sharing a box (greedy within each box).
std::vector<std::pair<std::uint32_t, std::uint32_t>> pigeonhole_pairs(std::span<const std::uint32_t> box_of);

struct PairOutcome {
    bool collided = false;
    std::uint64_t tick = kNeverTick;
};

// Each pair may only coalesce with itself; endpoints follow the free paths given by their keys.
std::vector<PairOutcome> paired_partial_system(const WalkModel& model,
                                               std::span<const std::pair<std::int64_t, std::int64_t>> pairs,
                                               std::span<const std::pair<PhiloxKey, PhiloxKey>> keys,
                                               std::uint64_t horizon);

// Coupled systems started from nested sets Q_1 within Q_2 within ... . All
// systems share location-keyed streams and the concatenated ranking
// (Q_1, then Q_2 \ Q_1, ...), so the m-th system is a prefix of the next.
std::vector<Evolution> nested_coupling(const WalkModel& model, std::span<const std::vector<std::int64_t>> sets,
                                       std::uint64_t seed, std::uint64_t replicate, const EvolveOptions& options);

// Export helpers.
void append_events_csv(std::string& out, std::uint64_t replicate, const EventLog& log, const WalkModel& model);
nlohmann::json state_location_json(const WalkModel& model, std::int64_t state);
std::string set_state_jsonl(const SetState& state, const WalkModel& model);

} // namespace coalesce
