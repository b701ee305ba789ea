#include <algorithm>
#include <memory>
#include <numeric>
#include <set>

#include "coalesce/engine.hpp"
#include "coalesce/errors.hpp"
#include "doctest.h"

using namespace coalesce;

namespace {

PathSample line_path(std::vector<std::int64_t> states) {
    PathSample p;
    p.model = ModelTag::LatticeLine;
    p.start = states.front();
    p.states = std::move(states);
    return p;
}

WalkModel small_gasket(int level = 2, int k = 0) {
    return GasketWalkModel::make(std::make_shared<const GasketGraph>(build_gasket_graph(level, k)));
}

WalkModel small_circle(std::int64_t L = 16, std::int32_t M = 8) {
    return LatticeWalkModel::circle(std::make_shared<const LatticeStepLaw>(LatticeStepLaw::make(1.5, 0.5, M)), L);
}

std::vector<PathSample> free_paths(const WalkModel& m, std::span<const std::int64_t> starts, std::uint64_t ticks, std::uint64_t seed) {
    std::vector<PathSample> out;
    for (std::size_t i = 0; i < starts.size(); ++i) out.push_back(simulate_walk(m, starts[i], ticks, StreamId{seed, i, 0}.key()));
    return out;
}

} // namespace

TEST_CASE("ranking") {
    const auto r = Ranking::from_order({2, 0, 1});
    CHECK(r.particle_at(0) == 2);
    CHECK(r.rank_of(2) == 0);
    CHECK(r.rank_of(1) == 2);
    CHECK_THROWS_AS(Ranking::from_order({0, 0, 1}), ContractError);
    RngStream rng(StreamId{1, 0, 0}, RngDomain::General);
    const auto rr = Ranking::random(10, rng);
    std::vector<std::uint32_t> o(rr.order().begin(), rr.order().end());
    std::sort(o.begin(), o.end());
    for (std::uint32_t i = 0; i < 10; ++i) CHECK(o[i] == i);
}

TEST_CASE("coalescent partition keeps the minimal-rank representative") {
    const auto r = Ranking::from_order({3, 1, 0, 2});
    CoalescentPartition p(r);
    CHECK(p.class_count() == 4);
    p.merge(2, 0);
    CHECK(p.find(2) == 0);
    p.merge(0, 1); // representative 1 has the smaller rank
    CHECK(p.find(0) == 1);
    CHECK(p.find(2) == 1);
    p.merge(1, 3);
    CHECK(p.class_count() == 1);
    for (std::uint32_t i = 0; i < 4; ++i) CHECK(p.find(i) == 3);
}

TEST_CASE("collision rule examples") {
    // Never co-located: unchanged.
    std::vector<PathSample> a{line_path({0, 1, 2}), line_path({5, 6, 7})};
    auto res = apply_collision_rule(a, Ranking::identity(2));
    CHECK(res.paths[0].states == a[0].states);
    CHECK(res.paths[1].states == a[1].states);
    CHECK(res.log.events.empty());

    // Crossing paths meet at tick 1; the second follows the first afterwards.
    std::vector<PathSample> b{line_path({0, 1, 2}), line_path({2, 1, 0})};
    res = apply_collision_rule(b, Ranking::identity(2));
    CHECK(res.paths[1].states == std::vector<std::int64_t>{2, 1, 2});
    REQUIRE(res.log.events.size() == 1);
    CHECK(res.log.events[0] == CoalescenceEvent{1, 1, 0, 1});

    // Third path meets both at once: it follows the first.
    std::vector<PathSample> c{line_path({0, 5, 6}), line_path({10, 5, 7}), line_path({20, 5, 8})};
    res = apply_collision_rule(c, Ranking::identity(3));
    CHECK(res.paths[1].states == std::vector<std::int64_t>{10, 5, 6});
    CHECK(res.paths[2].states == std::vector<std::int64_t>{20, 5, 6});

    // Later meeting with an already-coalesced path counts through its representative.
    std::vector<PathSample> d{line_path({0, 1, 2, 3}), line_path({2, 1, 9, 9}), line_path({7, 7, 2, 5})};
    res = apply_collision_rule(d, Ranking::identity(3));
    CHECK(res.paths[2].states == std::vector<std::int64_t>{7, 7, 2, 3});
    CHECK(res.log.final_count() == 1);

    CHECK_THROWS_AS(apply_collision_rule(std::vector<PathSample>{line_path({0, 1}), line_path({0})}, Ranking::identity(2)), ContractError);
}

TEST_CASE("evolve: degenerate systems") {
    const auto model = small_gasket();
    const std::vector<std::int64_t> dup{4, 4, 7, 4};
    const auto keys = location_keys(model, dup, 1, 0);
    EvolveOptions opt;
    opt.horizon = 10;
    const auto evo = evolve_coalescing(model, dup, Ranking::identity(4), keys, opt);
    CHECK(evo.log.count_at(0) == 2);
    CHECK(evo.states.front().count() == 2);

    const std::vector<std::int64_t> one{3};
    const auto solo = evolve_coalescing(model, one, Ranking::identity(1), location_keys(model, one, 1, 0), opt);
    CHECK(solo.log.events.empty());
    for (const auto& s : solo.states) CHECK(s.count() == 1);
}

TEST_CASE("online engine equals offline rule") {
    for (std::uint64_t seed = 0; seed < 60; ++seed) {
        const auto model = seed % 3 == 0 ? small_gasket() : seed % 3 == 1 ? small_circle() : small_gasket(1, 2);
        RngStream rng(StreamId{seed, 0, 0}, RngDomain::General);
        const std::size_t n = 2 + rng.uniform_below(5);
        std::vector<std::int64_t> starts(n);
        const std::uint64_t states = seed % 3 == 1 ? 16 : std::get<GasketWalkModel>(model).graph->vertex_count();
        for (auto& s : starts) s = static_cast<std::int64_t>(rng.uniform_below(states));
        const auto ranking = Ranking::random(n, rng);
        std::vector<PhiloxKey> keys;
        for (std::size_t i = 0; i < n; ++i) keys.push_back(StreamId{seed, 1, i}.key());
        std::vector<PathSample> paths;
        for (std::size_t i = 0; i < n; ++i) paths.push_back(simulate_walk(model, starts[i], 30, keys[i]));
        EvolveOptions opt;
        opt.horizon = 30;
        const auto online = evolve_coalescing(model, starts, ranking, keys, opt);
        const auto offline = apply_collision_rule(paths, ranking);
        CHECK(online.log == offline.log);
        CHECK(replay(online.log, model, starts, keys, geometric_tick_grid(30)) == online.states);
    }
}

TEST_CASE("prefix property") {
    // The first k ranked particles evolve the same with or without the others.
    const auto model = small_gasket(3);
    RngStream rng(StreamId{2, 0, 0}, RngDomain::General);
    for (int trial = 0; trial < 30; ++trial) {
        std::vector<std::int64_t> starts(6);
        for (auto& s : starts) s = static_cast<std::int64_t>(rng.uniform_below(42));
        const auto paths = free_paths(model, starts, 40, 100 + trial);
        const auto ranking = Ranking::random(6, rng);
        const auto full = apply_collision_rule(paths, ranking);
        for (std::size_t k = 1; k <= 6; ++k) {
            std::vector<PathSample> sub;
            std::vector<std::uint32_t> order;
            for (std::size_t r = 0; r < k; ++r) {
                sub.push_back(paths[ranking.particle_at(r)]);
                order.push_back(static_cast<std::uint32_t>(r));
            }
            const auto part = apply_collision_rule(sub, Ranking::from_order(order));
            for (std::size_t r = 0; r < k; ++r) CHECK(part.paths[r].states == full.paths[ranking.particle_at(r)].states);
        }
    }
}

TEST_CASE("relabelling particles does not change the coalesced paths") {
    // Permute the inputs by pi and compose the ranking so each physical path keeps its rank.
    const auto model = small_circle(20, 10);
    RngStream rng(StreamId{3, 0, 0}, RngDomain::General);
    for (int trial = 0; trial < 30; ++trial) {
        std::vector<std::int64_t> starts(5);
        for (auto& s : starts) s = static_cast<std::int64_t>(rng.uniform_below(20));
        const auto paths = free_paths(model, starts, 40, 200 + trial);
        const auto sigma = Ranking::random(5, rng);
        const auto pi = Ranking::random(5, rng); // new index i holds old particle pi(i)
        std::vector<PathSample> moved;
        for (std::size_t i = 0; i < 5; ++i) moved.push_back(paths[pi.particle_at(i)]);
        std::vector<std::uint32_t> rho(5);
        for (std::size_t r = 0; r < 5; ++r) rho[r] = pi.rank_of(sigma.particle_at(r));
        const auto a = apply_collision_rule(paths, sigma);
        const auto b = apply_collision_rule(moved, Ranking::from_order(rho));
        for (std::size_t i = 0; i < 5; ++i) CHECK(b.paths[i].states == a.paths[pi.particle_at(i)].states);
        CHECK(a.log.final_count() == b.log.final_count());
    }
}

TEST_CASE("class counts are non-increasing and representatives minimal") {
    const auto model = small_gasket(4);
    std::vector<std::int64_t> starts(30);
    std::iota(starts.begin(), starts.end(), 0);
    const auto keys = location_keys(model, starts, 9, 0);
    EvolveOptions opt;
    opt.horizon = 200;
    RngStream rng(StreamId{9, 0, 0}, RngDomain::General);
    const auto ranking = Ranking::random(30, rng);
    const auto evo = evolve_coalescing(model, starts, ranking, keys, opt);
    for (std::size_t i = 1; i < evo.states.size(); ++i) CHECK(evo.states[i].count() <= evo.states[i - 1].count());
    std::uint64_t last = 0;
    CoalescentPartition part(ranking);
    for (const auto& e : evo.log.events) {
        CHECK(e.tick >= last);
        last = e.tick;
        CHECK(ranking.rank_of(e.survivor) < ranking.rank_of(e.absorbed));
        CHECK(part.is_representative(e.absorbed));
        CHECK(part.is_representative(e.survivor));
        part.merge(e.absorbed, e.survivor);
    }
    CHECK(part.class_count() == evo.log.final_count());
}

TEST_CASE("first times to reach a count") {
    EventLog log;
    log.particle_count = 4;
    log.tick_duration = 0.5;
    log.horizon = 10;
    log.events = {{2, 1, 0, 0}, {2, 2, 0, 0}, {7, 3, 0, 0}};
    CHECK(tau_to_count_tick(log, 4) == 0);
    CHECK(tau_to_count_tick(log, 9) == 0);
    CHECK(tau_to_count_tick(log, 3) == 2);
    CHECK(tau_to_count_tick(log, 2) == 2);
    CHECK(tau_to_count_tick(log, 1) == 7);
    CHECK(tau_to_count(log, 1) == 3.5);
    CHECK_THROWS_AS(tau_to_count_tick(log, 0), ContractError);
    EventLog partial = log;
    partial.events.pop_back();
    CHECK(tau_to_count_tick(partial, 1) == kNeverTick);
    CHECK(std::isinf(tau_to_count(partial, 1)));
    CHECK(log.count_at(1) == 4);
    CHECK(log.count_at(2) == 2);
    // tau_m >= tau_{m+1} on engine logs.
    const auto model = small_circle(64, 32);
    std::vector<std::int64_t> starts{0, 8, 16, 24, 32, 40, 48, 56};
    EvolveOptions opt;
    opt.horizon = 5000;
    const auto evo = evolve_coalescing(model, starts, Ranking::identity(8), location_keys(model, starts, 4, 0), opt);
    for (std::size_t m = 1; m < 8; ++m) CHECK(tau_to_count_tick(evo.log, m) >= tau_to_count_tick(evo.log, m + 1));
}

TEST_CASE("range sets") {
    std::vector<SetState> s{{0, 0.0, {1, 2}}, {1, 1.0, {2, 5}}, {2, 2.0, {7}}};
    CHECK(range_set(s, 1, 1) == std::vector<std::int64_t>{2, 5});
    CHECK(range_set(s, 0, 1) == std::vector<std::int64_t>{1, 2, 5});
    CHECK(range_set(s, 0, 2) == std::vector<std::int64_t>{1, 2, 5, 7});
    std::vector<SetState> still{{0, 0.0, {3, 4}}, {4, 1.0, {3, 4}}};
    CHECK(range_set(still, 0, 4) == std::vector<std::int64_t>{3, 4});
}

TEST_CASE("pigeonhole pairs") {
    const std::vector<std::uint32_t> boxes{0, 0, 0, 1, 1, 2, 2};
    const auto pairs = pigeonhole_pairs(boxes);
    CHECK(pairs.size() == 3);
    const std::vector<std::uint32_t> single{0, 1, 2, 3};
    CHECK(pigeonhole_pairs(single).empty());
    RngStream rng(StreamId{5, 0, 0}, RngDomain::General);
    for (int trial = 0; trial < 300; ++trial) {
        const std::size_t M = 1 + rng.uniform_below(40), B = 1 + rng.uniform_below(15);
        std::vector<std::uint32_t> box(M);
        for (auto& b : box) b = static_cast<std::uint32_t>(rng.uniform_below(B));
        const auto p = pigeonhole_pairs(box);
        const std::size_t m = std::set<std::uint32_t>(box.begin(), box.end()).size();
        CHECK(p.size() >= (M - m + 1) / 2);
        std::set<std::uint32_t> used;
        for (auto [x, y] : p) {
            CHECK(box[x] == box[y]);
            CHECK(used.insert(x).second);
            CHECK(used.insert(y).second);
        }
    }
}

TEST_CASE("paired partial system") {
    const auto model = small_gasket(4);
    std::vector<std::pair<std::int64_t, std::int64_t>> same{{5, 5}};
    std::vector<std::pair<PhiloxKey, PhiloxKey>> k{{StreamId{1, 0, 0}.key(), StreamId{1, 0, 1}.key()}};
    const auto out = paired_partial_system(model, same, k, 10);
    CHECK(out[0].collided);
    CHECK(out[0].tick == 0);

    // Pathwise: the partial system never keeps fewer particles than the full one.
    std::vector<std::int64_t> starts(40);
    std::iota(starts.begin(), starts.end(), 10);
    std::vector<std::uint32_t> box(40);
    for (std::size_t i = 0; i < 40; ++i) box[i] = static_cast<std::uint32_t>(i / 3);
    const auto pairs = pigeonhole_pairs(box);
    for (std::uint64_t rep = 0; rep < 20; ++rep) {
        const auto keys = location_keys(model, starts, 8, rep);
        EvolveOptions opt;
        opt.horizon = 100;
        const auto full = evolve_coalescing(model, starts, Ranking::identity(40), keys, opt);
        std::vector<std::pair<std::int64_t, std::int64_t>> pp;
        std::vector<std::pair<PhiloxKey, PhiloxKey>> pk;
        for (auto [a, b] : pairs) {
            pp.emplace_back(starts[a], starts[b]);
            pk.emplace_back(keys[a], keys[b]);
        }
        const auto res = paired_partial_system(model, pp, pk, 100);
        const auto met = std::count_if(res.begin(), res.end(), [](const PairOutcome& o) { return o.collided; });
        CHECK(40 - static_cast<std::size_t>(met) >= full.log.final_count());
    }
}

TEST_CASE("nested coupling") {
    const auto model = small_gasket(4);
    std::vector<std::vector<std::int64_t>> sets{{3, 9}, {3, 9, 20, 30}, {3, 9, 20, 30, 31, 50, 60}};
    EvolveOptions opt;
    opt.horizon = 64;
    for (std::uint64_t rep = 0; rep < 10; ++rep) {
        const auto evos = nested_coupling(model, sets, 2, rep, opt);
        REQUIRE(evos.size() == 3);
        for (std::size_t m = 1; m < 3; ++m) {
            REQUIRE(evos[m].states.size() == evos[m - 1].states.size());
            for (std::size_t i = 0; i < evos[m].states.size(); ++i) {
                const auto& small = evos[m - 1].states[i].locations;
                const auto& big = evos[m].states[i].locations;
                CHECK(std::includes(big.begin(), big.end(), small.begin(), small.end()));
                CHECK(big.size() >= small.size());
            }
        }
    }
    // One set: same as a direct run with location keys.
    const std::vector<std::vector<std::int64_t>> one{{3, 9, 20}};
    const auto single = nested_coupling(model, one, 2, 0, opt);
    const auto direct = evolve_coalescing(model, one[0], Ranking::identity(3), location_keys(model, one[0], 2, 0), opt);
    CHECK(single[0].log == direct.log);
    CHECK(single[0].states == direct.states);
    const std::vector<std::vector<std::int64_t>> bad{{3, 9}, {3, 20}};
    CHECK_THROWS_AS(nested_coupling(model, bad, 2, 0, opt), ContractError);
}

TEST_CASE("window escape is flagged") {
    const auto model = GasketWalkModel::make(std::make_shared<const GasketGraph>(build_gasket_graph(1, 1)), 1);
    const std::vector<std::int64_t> starts{0};
    EvolveOptions opt;
    opt.horizon = 500;
    bool any = false;
    for (std::uint64_t rep = 0; rep < 10 && !any; ++rep) any = evolve_coalescing(model, starts, Ranking::identity(1), location_keys(model, starts, 1, rep), opt).escaped;
    CHECK(any);
}

TEST_CASE("exports") {
    const auto model = small_gasket(1);
    EventLog log;
    log.particle_count = 2;
    log.events = {{3, 1, 0, 2}};
    std::string csv;
    append_events_csv(csv, 7, log, model);
    CHECK(csv.find("7,3,") == 0);
    const SetState s{2, 0.5, {0, 2}};
    const auto line = nlohmann::json::parse(set_state_jsonl(s, model));
    CHECK(line["count"] == 2);
    CHECK(line["tick"] == 2);
}

TEST_CASE("class counts do not depend on the ranking (statistical)") {
    const auto model = small_gasket(4);
    const auto& g = *std::get<GasketWalkModel>(model).graph;
    std::vector<std::int64_t> starts;
    for (std::uint32_t v = 0; v < g.vertex_count(); ++v) {
        if (g.address(v).a % 4 == 0 && g.address(v).b % 4 == 0) starts.push_back(v);
    }
    REQUIRE(starts.size() == 15);
    std::vector<std::uint32_t> rev(starts.size());
    std::iota(rev.rbegin(), rev.rend(), 0u);
    const Ranking rankings[2] = {Ranking::identity(starts.size()), Ranking::from_order(rev)};
    const std::size_t reps = 3000;
    for (std::uint64_t t : {25, 125}) {
        std::vector<double> counts[2];
        for (int k = 0; k < 2; ++k) {
            for (std::size_t rep = 0; rep < reps; ++rep) {
                EvolveOptions opt;
                opt.horizon = t;
                opt.record_states = false;
                const auto keys = location_keys(model, starts, 40 + k, rep);
                counts[k].push_back(double(evolve_coalescing(model, starts, rankings[k], keys, opt).log.count_at(t)));
            }
        }
        // Two-sample KS; conservative for integer-valued data.
        std::sort(counts[0].begin(), counts[0].end());
        std::sort(counts[1].begin(), counts[1].end());
        double d = 0.0;
        for (double x = 1.0; x <= 15.0; x += 1.0) {
            const double f0 = double(std::upper_bound(counts[0].begin(), counts[0].end(), x) - counts[0].begin()) / reps;
            const double f1 = double(std::upper_bound(counts[1].begin(), counts[1].end(), x) - counts[1].begin()) / reps;
            d = std::max(d, std::abs(f0 - f1));
        }
        CHECK(d < 1.628 * std::sqrt(2.0 / reps));
    }
}
