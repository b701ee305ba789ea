#include "coalesce/engine.hpp"

#include <algorithm>
#include <memory>
#include <numeric>
#include <unordered_map>
#include <unordered_set>

#include "coalesce/errors.hpp"
#include "coalesce/format.hpp"

namespace coalesce {

// ---------------------------------------------------------------- rankings

Ranking Ranking::identity(std::size_t n) {
    std::vector<std::uint32_t> order(n);
    std::iota(order.begin(), order.end(), 0u);
    return from_order(std::move(order));
}

Ranking Ranking::from_order(std::vector<std::uint32_t> order) {
    Ranking r;
    r.rank_.assign(order.size(), std::numeric_limits<std::uint32_t>::max());
    for (std::size_t i = 0; i < order.size(); ++i) {
        const std::uint32_t p = order[i];
        if (p >= order.size() || r.rank_[p] != std::numeric_limits<std::uint32_t>::max()) {
            throw ContractError("ranking is not a bijection");
        }
        r.rank_[p] = static_cast<std::uint32_t>(i);
    }
    r.order_ = std::move(order);
    return r;
}

Ranking Ranking::random(std::size_t n, RngStream& rng) {
    std::vector<std::uint32_t> order(n);
    std::iota(order.begin(), order.end(), 0u);
    for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.uniform_below(i)]);
    return from_order(std::move(order));
}

// ---------------------------------------------------------------- partition

CoalescentPartition::CoalescentPartition(const Ranking& ranking)
    : parent_(ranking.size()), rank_(ranking.size()), classes_(ranking.size()) {
    std::iota(parent_.begin(), parent_.end(), 0u);
    for (std::uint32_t p = 0; p < ranking.size(); ++p) rank_[p] = ranking.rank_of(p);
}

std::uint32_t CoalescentPartition::find(std::uint32_t particle) {
    std::uint32_t root = particle;
    while (parent_[root] != root) root = parent_[root];
    while (parent_[particle] != root) {
        const std::uint32_t next = parent_[particle];
        parent_[particle] = root;
        particle = next;
    }
    return root;
}

std::uint32_t CoalescentPartition::find(std::uint32_t particle) const {
    while (parent_[particle] != particle) particle = parent_[particle];
    return particle;
}

std::uint32_t CoalescentPartition::merge(std::uint32_t absorbed, std::uint32_t survivor) {
    std::uint32_t a = find(absorbed);
    std::uint32_t s = find(survivor);
    if (a == s) return s;
    if (rank_[a] < rank_[s]) std::swap(a, s);
    parent_[a] = s;
    --classes_;
    return s;
}

std::size_t EventLog::count_at(std::uint64_t tick) const {
    const auto it = std::upper_bound(events.begin(), events.end(), tick,
                                     [](std::uint64_t t, const CoalescenceEvent& e) { return t < e.tick; });
    return particle_count - static_cast<std::size_t>(it - events.begin());
}

void resolve_collisions(std::span<const std::int64_t> locations, std::vector<std::uint32_t>& target) {
    target.resize(locations.size());
    for (std::size_t i = 0; i < locations.size(); ++i) {
        target[i] = static_cast<std::uint32_t>(i);
        for (std::size_t j = 0; j < i; ++j) {
            if (target[j] == j && locations[j] == locations[i]) {
                target[i] = static_cast<std::uint32_t>(j);
                break;
            }
        }
    }
}

// ---------------------------------------------------------------- offline rule

CollisionResult apply_collision_rule(std::span<const PathSample> paths, const Ranking& ranking) {
    if (paths.size() != ranking.size()) throw ContractError("apply_collision_rule: ranking size differs from path count");
    CollisionResult result;
    result.log.particle_count = paths.size();
    if (paths.empty()) return result;
    const std::size_t len = paths.front().states.size();
    if (len == 0) throw ContractError("apply_collision_rule: empty path");
    for (const auto& p : paths) {
        if (p.states.size() != len || p.tick_duration != paths.front().tick_duration || p.model != paths.front().model) {
            throw ContractError("apply_collision_rule: paths do not share a tick grid and model");
        }
    }
    result.log.tick_duration = paths.front().tick_duration;
    result.log.horizon = len - 1;
    result.paths.assign(paths.begin(), paths.end());

    for (std::size_t i = 0; i < paths.size(); ++i) {
        const std::uint32_t p = ranking.particle_at(i);
        const auto& free = paths[p].states;
        std::optional<std::size_t> tau;
        std::size_t leader = 0;
        for (std::size_t t = 0; t < len && !tau; ++t) {
            for (std::size_t j = 0; j < i; ++j) {
                if (result.paths[ranking.particle_at(j)].states[t] == free[t]) {
                    tau = t;
                    leader = j;
                    break;
                }
            }
        }
        if (!tau) continue;
        const std::uint32_t q = ranking.particle_at(leader);
        auto& out = result.paths[p].states;
        for (std::size_t t = *tau; t < len; ++t) out[t] = result.paths[q].states[t];
        result.log.events.push_back({*tau, p, q, free[*tau]});
    }
    std::stable_sort(result.log.events.begin(), result.log.events.end(),
                     [&](const CoalescenceEvent& a, const CoalescenceEvent& b) {
                         if (a.tick != b.tick) return a.tick < b.tick;
                         return ranking.rank_of(a.absorbed) < ranking.rank_of(b.absorbed);
                     });
    return result;
}

// ---------------------------------------------------------------- online engine

std::vector<std::uint64_t> geometric_tick_grid(std::uint64_t horizon) {
    std::vector<std::uint64_t> grid{0};
    for (std::uint64_t t = 1; t <= horizon; t *= 2) {
        grid.push_back(t);
        if (t > horizon / 2) break;
    }
    if (grid.back() != horizon) grid.push_back(horizon);
    return grid;
}

std::vector<PhiloxKey> location_keys(const WalkModel& model, std::span<const std::int64_t> starts, std::uint64_t seed,
                                     std::uint64_t replicate) {
    std::vector<PhiloxKey> keys;
    keys.reserve(starts.size());
    for (std::int64_t s : starts) {
        std::int64_t canonical = s;
        if (const auto* l = std::get_if<LatticeWalkModel>(&model); l && l->is_circle()) {
            canonical = circle_reduce(s, l->circumference);
        }
        keys.push_back(StreamId{seed, replicate, location_code(model, canonical)}.key());
    }
    return keys;
}

namespace {

// Detects co-located live representatives tick by tick.
class Occupancy {
public:
    explicit Occupancy(const WalkModel& model) {
        if (const auto* g = std::get_if<GasketWalkModel>(&model)) {
            space_ = g->graph->vertex_count();
        } else if (const auto& l = std::get<LatticeWalkModel>(model); l.is_circle()) {
            space_ = static_cast<std::size_t>(l.circumference);
        }
        if (space_ > 0) {
            stamp_.assign(space_, 0);
            owner_.assign(space_, 0);
        }
    }

    void begin() {
        ++epoch_;
        if (space_ == 0) map_.clear();
    }

    // Returns the earlier claimant of `loc` in this epoch, or `slot` after claiming it.
    std::uint32_t claim(std::int64_t loc, std::uint32_t slot) {
        if (space_ > 0) {
            const auto i = static_cast<std::size_t>(loc);
            if (stamp_[i] == epoch_) return owner_[i];
            stamp_[i] = epoch_;
            owner_[i] = slot;
            return slot;
        }
        return map_.try_emplace(loc, slot).first->second;
    }

private:
    std::size_t space_ = 0;
    std::uint64_t epoch_ = 0;
    std::vector<std::uint64_t> stamp_;
    std::vector<std::uint32_t> owner_;
    std::unordered_map<std::int64_t, std::uint32_t> map_;
};

std::vector<std::uint64_t> normalized_grid(std::span<const std::uint64_t> ticks, std::uint64_t horizon) {
    std::vector<std::uint64_t> grid(ticks.begin(), ticks.end());
    if (grid.empty()) return geometric_tick_grid(horizon);
    std::sort(grid.begin(), grid.end());
    grid.erase(std::unique(grid.begin(), grid.end()), grid.end());
    return grid;
}

} // namespace

Evolution evolve_coalescing(const WalkModel& model, std::span<const std::int64_t> starts, const Ranking& ranking,
                            std::span<const PhiloxKey> keys, const EvolveOptions& options) {
    const std::size_t n = starts.size();
    if (n == 0) throw ContractError("evolve_coalescing: no particles");
    if (ranking.size() != n || keys.size() != n) throw ContractError("evolve_coalescing: size mismatch");
    const auto* gasket = std::get_if<GasketWalkModel>(&model);
    if (gasket) {
        for (std::int64_t s : starts) {
            if (s < 0 || static_cast<std::size_t>(s) >= gasket->graph->vertex_count()) {
                throw ContractError("evolve_coalescing: start vertex out of range");
            }
        }
    }

    Evolution evo;
    evo.log.particle_count = n;
    evo.log.tick_duration = tick_duration(model);
    const auto grid = normalized_grid(options.sample_ticks, options.horizon);
    std::size_t next_sample = 0;

    WalkerBatch batch(model);
    std::vector<std::uint32_t> rep; // particle id of each live walker, increasing rank
    rep.reserve(n);
    for (std::size_t r = 0; r < n; ++r) {
        const std::uint32_t p = ranking.particle_at(r);
        batch.add(keys[p], starts[p]);
        rep.push_back(p);
    }

    Occupancy occ(model);
    std::unique_ptr<bool[]> alive(new bool[n]);
    const bool check_escape = gasket && !gasket->boundary_distance.empty();

    auto collide = [&](std::uint64_t tick) {
        occ.begin();
        bool any = false;
        for (std::size_t i = 0; i < batch.size(); ++i) {
            const std::int64_t loc = batch.state(i);
            const std::uint32_t first = occ.claim(loc, static_cast<std::uint32_t>(i));
            alive[i] = first == i;
            if (!alive[i]) {
                evo.log.events.push_back({tick, rep[i], rep[first], loc});
                any = true;
            }
            if (check_escape && !evo.escaped && !gasket->in_safety_zone(static_cast<std::uint32_t>(loc))) {
                evo.escaped = true;
                evo.escape_tick = tick;
            }
        }
        if (!any) return;
        std::size_t out = 0;
        for (std::size_t i = 0; i < rep.size(); ++i) {
            if (alive[i]) rep[out++] = rep[i];
        }
        batch.keep({alive.get(), rep.size()});
        rep.resize(out);
    };

    auto record = [&](std::uint64_t tick) {
        while (next_sample < grid.size() && grid[next_sample] < tick) ++next_sample;
        if (next_sample >= grid.size() || grid[next_sample] != tick) return;
        ++next_sample;
        if (!options.record_states) return;
        SetState s;
        s.tick = tick;
        s.time = static_cast<double>(tick) * evo.log.tick_duration;
        s.locations.reserve(batch.size());
        for (std::size_t i = 0; i < batch.size(); ++i) s.locations.push_back(batch.state(i));
        std::sort(s.locations.begin(), s.locations.end());
        evo.states.push_back(std::move(s));
    };

    collide(0);
    record(0);
    std::uint64_t tick = 0;
    while (tick < options.horizon) {
        if (options.stop_at_count > 0 && batch.size() <= options.stop_at_count) break;
        // A lone walker can neither merge nor escape-check; skip ahead unless states are still wanted.
        if (batch.size() == 1 && !check_escape && (!options.record_states || next_sample >= grid.size())) {
            tick = options.horizon;
            break;
        }
        batch.step(tick);
        ++tick;
        collide(tick);
        record(tick);
    }
    evo.ticks_run = tick;
    evo.log.horizon = tick;
    return evo;
}

std::vector<SetState> replay(const EventLog& log, const WalkModel& model, std::span<const std::int64_t> starts,
                             std::span<const PhiloxKey> keys, std::span<const std::uint64_t> sample_ticks) {
    if (starts.size() != log.particle_count || keys.size() != starts.size()) throw ContractError("replay: size mismatch");
    std::vector<std::uint64_t> absorbed_at(starts.size(), kNeverTick);
    for (const auto& e : log.events) {
        if (absorbed_at[e.absorbed] != kNeverTick) throw ContractError("replay: particle absorbed twice");
        absorbed_at[e.absorbed] = e.tick;
    }
    const auto grid = normalized_grid(sample_ticks, log.horizon);
    WalkerBatch batch(model);
    for (std::size_t p = 0; p < starts.size(); ++p) batch.add(keys[p], starts[p]);
    std::vector<SetState> states;
    std::uint64_t tick = 0;
    for (std::uint64_t target : grid) {
        if (target > log.horizon) break;
        while (tick < target) batch.step(tick++);
        SetState s;
        s.tick = target;
        s.time = static_cast<double>(target) * log.tick_duration;
        for (std::size_t p = 0; p < starts.size(); ++p) {
            if (absorbed_at[p] > target) s.locations.push_back(batch.state(p));
        }
        std::sort(s.locations.begin(), s.locations.end());
        states.push_back(std::move(s));
    }
    return states;
}

// ---------------------------------------------------------------- reductions

std::uint64_t tau_to_count_tick(const EventLog& log, std::size_t m) {
    if (m < 1) throw ContractError("tau_to_count: m must be >= 1");
    if (log.particle_count <= m) return 0;
    const std::size_t needed = log.particle_count - m;
    if (log.events.size() < needed) return kNeverTick;
    return log.events[needed - 1].tick;
}

double tau_to_count(const EventLog& log, std::size_t m) {
    const std::uint64_t t = tau_to_count_tick(log, m);
    if (t == kNeverTick) return std::numeric_limits<double>::infinity();
    return static_cast<double>(t) * log.tick_duration;
}

std::vector<std::int64_t> range_set(std::span<const SetState> states, std::uint64_t first_tick, std::uint64_t last_tick) {
    std::vector<std::int64_t> out;
    for (const auto& s : states) {
        if (s.tick >= first_tick && s.tick <= last_tick) out.insert(out.end(), s.locations.begin(), s.locations.end());
    }
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
}

std::vector<std::pair<std::uint32_t, std::uint32_t>> pigeonhole_pairs(std::span<const std::uint32_t> box_of) {
    std::unordered_map<std::uint32_t, std::uint32_t> waiting;
    std::vector<std::pair<std::uint32_t, std::uint32_t>> pairs;
    for (std::uint32_t i = 0; i < box_of.size(); ++i) {
        auto [it, fresh] = waiting.try_emplace(box_of[i], i);
        if (fresh) continue;
        pairs.emplace_back(it->second, i);
        waiting.erase(it);
    }
    return pairs;
}

std::vector<PairOutcome> paired_partial_system(const WalkModel& model,
                                               std::span<const std::pair<std::int64_t, std::int64_t>> pairs,
                                               std::span<const std::pair<PhiloxKey, PhiloxKey>> keys,
                                               std::uint64_t horizon) {
    if (pairs.size() != keys.size()) throw ContractError("paired_partial_system: size mismatch");
    std::vector<PairOutcome> out(pairs.size());
    WalkerBatch batch(model);
    std::vector<std::uint32_t> pair_of;
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        batch.add(keys[i].first, pairs[i].first);
        batch.add(keys[i].second, pairs[i].second);
        pair_of.push_back(static_cast<std::uint32_t>(i));
    }
    std::unique_ptr<bool[]> flags(new bool[batch.size() + 1]);
    auto check = [&](std::uint64_t tick) {
        bool any = false;
        for (std::size_t j = 0; j < pair_of.size(); ++j) {
            const bool met = batch.state(2 * j) == batch.state(2 * j + 1);
            flags[2 * j] = flags[2 * j + 1] = !met;
            if (met) {
                out[pair_of[j]] = {true, tick};
                any = true;
            }
        }
        if (!any) return;
        std::size_t w = 0;
        for (std::size_t j = 0; j < pair_of.size(); ++j) {
            if (flags[2 * j]) pair_of[w++] = pair_of[j];
        }
        pair_of.resize(w);
        batch.keep({flags.get(), batch.size()});
    };
    check(0);
    for (std::uint64_t t = 0; t < horizon && !pair_of.empty(); ++t) {
        batch.step(t);
        check(t + 1);
    }
    return out;
}

std::vector<Evolution> nested_coupling(const WalkModel& model, std::span<const std::vector<std::int64_t>> sets,
                                       std::uint64_t seed, std::uint64_t replicate, const EvolveOptions& options) {
    std::vector<std::int64_t> concat;
    std::unordered_set<std::int64_t> seen;
    std::vector<std::size_t> prefix;
    for (std::size_t m = 0; m < sets.size(); ++m) {
        std::unordered_set<std::int64_t> current(sets[m].begin(), sets[m].end());
        if (current.size() != sets[m].size()) throw ContractError("nested_coupling: repeated location in a start set");
        for (std::int64_t x : seen) {
            if (!current.count(x)) throw ContractError("nested_coupling: start sets are not nested");
        }
        for (std::int64_t x : sets[m]) {
            if (seen.insert(x).second) concat.push_back(x);
        }
        prefix.push_back(concat.size());
    }
    const auto keys = location_keys(model, concat, seed, replicate);
    std::vector<Evolution> out;
    out.reserve(sets.size());
    for (std::size_t len : prefix) {
        const std::span<const std::int64_t> starts(concat.data(), len);
        out.push_back(evolve_coalescing(model, starts, Ranking::identity(len), std::span(keys.data(), len), options));
    }
    return out;
}

// ---------------------------------------------------------------- export

void append_events_csv(std::string& out, std::uint64_t replicate, const EventLog& log, const WalkModel& model) {
    for (const auto& e : log.events) {
        out += std::to_string(replicate) + "," + std::to_string(e.tick) + "," +
               fmt17(static_cast<double>(e.tick) * log.tick_duration) + "," + std::to_string(e.absorbed) + "," +
               std::to_string(e.survivor) + "," + describe_state(model, e.location) + "\n";
    }
}

nlohmann::json state_location_json(const WalkModel& model, std::int64_t state) {
    if (const auto* g = std::get_if<GasketWalkModel>(&model)) {
        const auto& v = g->graph->address(static_cast<std::uint32_t>(state));
        return nlohmann::json::array({v.a, v.b});
    }
    return state;
}

std::string set_state_jsonl(const SetState& state, const WalkModel& model) {
    nlohmann::json locs = nlohmann::json::array();
    for (std::int64_t s : state.locations) locs.push_back(state_location_json(model, s));
    nlohmann::json j{{"t", state.time}, {"tick", state.tick}, {"count", state.count()}, {"locations", locs}};
    return j.dump() + "\n";
}

} // namespace coalesce
