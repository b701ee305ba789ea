#include "coalesce/oracle.hpp"

#include <algorithm>
#include <numeric>

#include "coalesce/errors.hpp"
#include "coalesce/hash.hpp"

namespace coalesce::oracle {

using boost::multiprecision::cpp_int;

std::string to_string(const Rational& r) {
    const cpp_int num = boost::multiprecision::numerator(r);
    const cpp_int den = boost::multiprecision::denominator(r);
    if (den == 1) return num.str();
    return num.str() + "/" + den.str();
}

double to_double(const Rational& r) { return r.convert_to<double>(); }

std::size_t FiniteChain::max_branching() const {
    std::size_t m = 0;
    for (const auto& row : rows) m = std::max(m, row.size());
    return m;
}

FiniteChain gasket_chain(const GasketGraph& graph) {
    FiniteChain chain;
    chain.name = "gasket(level=" + std::to_string(graph.level()) + ",window=" + std::to_string(graph.window_exponent()) + ")";
    chain.rows.resize(graph.vertex_count());
    chain.labels.resize(graph.vertex_count());
    for (std::uint32_t v = 0; v < graph.vertex_count(); ++v) {
        const auto nb = graph.neighbors(v);
        const Rational p(1, static_cast<long>(nb.size()));
        for (std::uint32_t w : nb) chain.rows[v].emplace_back(w, p);
        const auto& a = graph.address(v);
        chain.labels[v] = "(" + std::to_string(a.a) + " " + std::to_string(a.b) + ")";
    }
    return chain;
}

std::vector<Rational> exact_alias_law(const LatticeStepLaw& law) {
    const std::uint32_t k = law.size();
    const cpp_int two32 = cpp_int(1) << 32;
    auto ceil_div = [](const cpp_int& a, const cpp_int& b) { return (a + b - 1) / b; };
    std::vector<cpp_int> weight(k, 0); // in units of 2^-64
    const auto thr = law.alias_threshold();
    const auto alias = law.alias_index();
    for (std::uint32_t i = 0; i < k; ++i) {
        const cpp_int count = ceil_div(two32 * (i + 1), k) - ceil_div(two32 * i, k);
        weight[i] += count * thr[i];
        weight[alias[i]] += count * (two32 - thr[i]);
    }
    std::vector<Rational> out;
    out.reserve(k);
    const cpp_int two64 = cpp_int(1) << 64;
    for (const auto& w : weight) out.emplace_back(w, two64);
    return out;
}

FiniteChain circle_chain(const LatticeStepLaw& law, std::int64_t circumference) {
    if (circumference < 2 || circumference > 64) throw ContractError("circle_chain: circumference must be in [2, 64]");
    const auto step = exact_alias_law(law);
    FiniteChain chain;
    chain.name = "circle(L=" + std::to_string(circumference) + ",M=" + std::to_string(law.max_jump()) + ")";
    chain.rows.resize(static_cast<std::size_t>(circumference));
    for (std::int64_t x = 0; x < circumference; ++x) {
        std::map<std::uint32_t, Rational> row;
        for (std::int32_t j = -law.max_jump(); j <= law.max_jump(); ++j) {
            const Rational& p = step[static_cast<std::size_t>(j + law.max_jump())];
            if (p == 0) continue;
            row[static_cast<std::uint32_t>(circle_reduce(x + j, circumference))] += p;
        }
        chain.rows[static_cast<std::size_t>(x)].assign(row.begin(), row.end());
        chain.labels.push_back(std::to_string(x));
    }
    return chain;
}

// ---------------------------------------------------------------- tables

Rational DistributionTable::total() const {
    Rational t = 0;
    for (const auto& [k, p] : probs) t += p;
    return t;
}

void DistributionTable::add(std::vector<std::int64_t> outcome, const Rational& p) { probs[std::move(outcome)] += p; }

std::string DistributionTable::canonical() const {
    std::string s;
    for (const auto& [outcome, p] : probs) {
        for (std::size_t i = 0; i < outcome.size(); ++i) {
            if (i) s += ' ';
            s += std::to_string(outcome[i]);
        }
        s += ':' + to_string(p) + ';';
    }
    return s;
}

std::string DistributionTable::hash() const { return sha256_hex(canonical()); }

nlohmann::json DistributionTable::to_json() const {
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& [outcome, p] : probs) rows.push_back({{"outcome", outcome}, {"probability", to_string(p)}});
    return rows;
}

Rational total_variation(const DistributionTable& a, const DistributionTable& b) {
    Rational sum = 0;
    auto ia = a.probs.begin();
    auto ib = b.probs.begin();
    while (ia != a.probs.end() || ib != b.probs.end()) {
        if (ib == b.probs.end() || (ia != a.probs.end() && ia->first < ib->first)) {
            sum += abs(ia->second);
            ++ia;
        } else if (ia == a.probs.end() || ib->first < ia->first) {
            sum += abs(ib->second);
            ++ib;
        } else {
            sum += abs(ia->second - ib->second);
            ++ia;
            ++ib;
        }
    }
    return sum / 2;
}

// ---------------------------------------------------------------- coalescing systems

namespace {

// State: rep[p] for every particle, then pos[p] (-1 for non-representatives).
using SystemState = std::vector<std::int64_t>;

void merge_colocated(SystemState& s, std::size_t n, const Ranking& ranking, std::vector<std::uint32_t>& scratch) {
    std::vector<std::uint32_t> reps;
    std::vector<std::int64_t> locs;
    for (std::size_t r = 0; r < n; ++r) {
        const std::uint32_t p = ranking.particle_at(r);
        if (s[n + p] >= 0) {
            reps.push_back(p);
            locs.push_back(s[n + p]);
        }
    }
    resolve_collisions(locs, scratch);
    for (std::size_t i = 0; i < reps.size(); ++i) {
        if (scratch[i] == i) continue;
        const std::uint32_t absorbed = reps[i];
        const std::uint32_t survivor = reps[scratch[i]];
        for (std::size_t q = 0; q < n; ++q) {
            if (s[q] == absorbed) s[q] = survivor;
        }
        s[n + absorbed] = -1;
    }
}

void check_starts(const FiniteChain& chain, std::span<const std::int64_t> starts) {
    if (starts.empty()) throw ContractError("oracle: no particles");
    for (std::int64_t s : starts) {
        if (s < 0 || static_cast<std::size_t>(s) >= chain.size()) throw ContractError("oracle: start outside the state space");
    }
}

} // namespace

CoalescingLaw coalescing_law(const FiniteChain& chain, std::span<const std::int64_t> starts, const Ranking& ranking,
                             std::uint64_t ticks, std::uint64_t budget) {
    check_starts(chain, starts);
    const std::size_t n = starts.size();
    if (ranking.size() != n) throw ContractError("oracle: ranking size differs from particle count");

    std::vector<std::uint32_t> scratch;
    SystemState init(2 * n);
    for (std::size_t p = 0; p < n; ++p) {
        init[p] = static_cast<std::int64_t>(p);
        init[n + p] = starts[p];
    }
    merge_colocated(init, n, ranking, scratch);

    CoalescingLaw law;
    std::map<SystemState, Rational> current{{init, Rational(1)}};
    for (std::uint64_t t = 0; t < ticks; ++t) {
        std::map<SystemState, Rational> next;
        for (const auto& [state, weight] : current) {
            std::vector<std::uint32_t> reps;
            for (std::size_t p = 0; p < n; ++p) {
                if (state[n + p] >= 0) reps.push_back(static_cast<std::uint32_t>(p));
            }
            // Odometer over the product of the representatives' transition rows.
            std::vector<std::size_t> digit(reps.size(), 0);
            while (true) {
                if (++law.work > budget) throw ResourceError("oracle: enumeration budget exceeded");
                SystemState s = state;
                Rational w = weight;
                for (std::size_t i = 0; i < reps.size(); ++i) {
                    const auto& cell = chain.rows[static_cast<std::size_t>(state[n + reps[i]])][digit[i]];
                    s[n + reps[i]] = cell.first;
                    w *= cell.second;
                }
                merge_colocated(s, n, ranking, scratch);
                next[std::move(s)] += w;
                std::size_t i = 0;
                for (; i < reps.size(); ++i) {
                    if (++digit[i] < chain.rows[static_cast<std::size_t>(state[n + reps[i]])].size()) break;
                    digit[i] = 0;
                }
                if (i == reps.size()) break;
            }
        }
        current = std::move(next);
    }

    for (const auto& [state, weight] : current) {
        std::vector<std::int64_t> sorted;
        std::vector<std::int64_t> labelled(n);
        for (std::size_t p = 0; p < n; ++p) {
            if (state[n + p] >= 0) sorted.push_back(state[n + p]);
            labelled[p] = state[n + static_cast<std::size_t>(state[p])];
        }
        std::sort(sorted.begin(), sorted.end());
        law.sorted.add(std::move(sorted), weight);
        law.labelled.add(std::move(labelled), weight);
    }
    return law;
}

DistributionTable enumerate_coalescing_distribution(const GasketGraph& graph, std::span<const std::int64_t> starts,
                                                    const Ranking& ranking, std::uint64_t ticks, std::uint64_t budget) {
    return coalescing_law(gasket_chain(graph), starts, ranking, ticks, budget).sorted;
}

CoalescingLaw coalescing_law_by_paths(const GasketGraph& graph, std::span<const std::int64_t> starts,
                                      const Ranking& ranking, std::uint64_t ticks, std::uint64_t budget) {
    const std::size_t n = starts.size();
    if (n == 0) throw ContractError("oracle: no particles");
    if (ranking.size() != n) throw ContractError("oracle: ranking size differs from particle count");
    for (std::int64_t s : starts) {
        if (s < 0 || static_cast<std::size_t>(s) >= graph.vertex_count()) throw ContractError("oracle: start outside the graph");
    }
    const std::uint64_t choices = n * ticks;
    if (2 * choices >= 63 || (std::uint64_t{1} << (2 * choices)) > budget) {
        throw ResourceError("oracle: path enumeration budget exceeded");
    }
    const std::uint64_t total = std::uint64_t{1} << (2 * choices);
    const auto slots = graph.neighbor_slots();

    std::map<std::vector<std::int64_t>, std::uint64_t> sorted_counts, labelled_counts;
    std::vector<PathSample> paths(n);
    for (std::size_t p = 0; p < n; ++p) {
        paths[p].model = ModelTag::GasketFinite;
        paths[p].start = starts[p];
        paths[p].states.assign(ticks + 1, starts[p]);
    }
    for (std::uint64_t code = 0; code < total; ++code) {
        std::uint64_t bits = code;
        for (std::size_t p = 0; p < n; ++p) {
            auto& st = paths[p].states;
            for (std::uint64_t t = 0; t < ticks; ++t) {
                st[t + 1] = slots[4 * static_cast<std::size_t>(st[t]) + (bits & 3u)];
                bits >>= 2;
            }
        }
        const auto result = apply_collision_rule(paths, ranking);
        std::vector<std::int64_t> labelled(n);
        for (std::size_t p = 0; p < n; ++p) labelled[p] = result.paths[p].states.back();
        std::vector<std::int64_t> sorted = labelled;
        std::sort(sorted.begin(), sorted.end());
        sorted.erase(std::unique(sorted.begin(), sorted.end()), sorted.end());
        ++sorted_counts[sorted];
        ++labelled_counts[labelled];
    }
    CoalescingLaw law;
    law.work = total;
    for (const auto& [k, c] : sorted_counts) law.sorted.add(k, Rational(cpp_int(c), cpp_int(total)));
    for (const auto& [k, c] : labelled_counts) law.labelled.add(k, Rational(cpp_int(c), cpp_int(total)));
    return law;
}

// ---------------------------------------------------------------- exchangeability

nlohmann::json ExchangeabilityReport::to_json() const {
    return {{"instance", instance},
            {"rankings", rankings},
            {"tv_max", to_string(tv_max)},
            {"labelled_tv_max", to_string(labelled_tv_max)},
            {"probability_tables_hash", tables_hash}};
}

ExchangeabilityReport exchangeability_check(const FiniteChain& chain, std::span<const std::int64_t> starts,
                                            std::uint64_t ticks, std::uint64_t budget) {
    check_starts(chain, starts);
    if (starts.size() > 6) throw ContractError("exchangeability_check: at most 6 particles");
    ExchangeabilityReport report;
    report.instance = chain.name + " starts=[";
    for (std::size_t i = 0; i < starts.size(); ++i) report.instance += (i ? " " : "") + chain.labels[static_cast<std::size_t>(starts[i])];
    report.instance += "] ticks=" + std::to_string(ticks);

    std::vector<std::uint32_t> order(starts.size());
    std::iota(order.begin(), order.end(), 0u);
    std::vector<CoalescingLaw> laws;
    std::string all;
    std::uint64_t spent = 0;
    do {
        laws.push_back(coalescing_law(chain, starts, Ranking::from_order(order), ticks, budget - spent));
        spent += laws.back().work;
        all += laws.back().sorted.canonical() + "|" + laws.back().labelled.canonical() + "\n";
    } while (std::next_permutation(order.begin(), order.end()));

    report.rankings = laws.size();
    for (std::size_t i = 0; i < laws.size(); ++i) {
        for (std::size_t j = i + 1; j < laws.size(); ++j) {
            report.tv_max = std::max(report.tv_max, total_variation(laws[i].sorted, laws[j].sorted));
            report.labelled_tv_max = std::max(report.labelled_tv_max, total_variation(laws[i].labelled, laws[j].labelled));
        }
    }
    report.tables_hash = sha256_hex(all);
    return report;
}

ExchangeabilityReport exchangeability_check(const GasketGraph& graph, std::span<const std::int64_t> starts,
                                            std::uint64_t ticks, std::uint64_t budget) {
    return exchangeability_check(gasket_chain(graph), starts, ticks, budget);
}

// ---------------------------------------------------------------- folding

namespace {

std::map<std::uint32_t, Rational> propagate(const FiniteChain& chain, std::uint32_t start, std::uint64_t ticks,
                                            std::uint64_t budget, std::uint64_t& work) {
    std::map<std::uint32_t, Rational> law{{start, Rational(1)}};
    for (std::uint64_t t = 0; t < ticks; ++t) {
        std::map<std::uint32_t, Rational> next;
        for (const auto& [v, p] : law) {
            for (const auto& [w, q] : chain.rows[v]) {
                if (++work > budget) throw ResourceError("oracle: enumeration budget exceeded");
                next[w] += p * q;
            }
        }
        law = std::move(next);
    }
    return law;
}

} // namespace

nlohmann::json FoldingReport::to_json() const {
    return {{"instance", instance},
            {"tv", to_string(tv)},
            {"folded", folded.to_json()},
            {"finite", finite.to_json()},
            {"probability_tables_hash", sha256_hex(folded.canonical() + "|" + finite.canonical())}};
}

FoldingReport folding_check(const GasketGraph& window, std::uint32_t start, std::uint64_t ticks, std::uint64_t budget) {
    if (window.window_exponent() <= 0) throw ContractError("folding_check: needs a window graph (exponent > 0)");
    if (start >= window.vertex_count()) throw ContractError("folding_check: start outside the window");
    const auto corners = window.far_corners();
    const auto dist = bfs_distances(window, corners);
    if (dist[start] < ticks) {
        throw ContractError("folding_check: start is " + std::to_string(dist[start]) + " hops from the window boundary, fewer than " +
                            std::to_string(ticks) + " ticks");
    }
    const int level = window.level();
    const int k = window.window_exponent();
    const auto finite_graph = build_gasket_graph(level, 0);

    FoldingReport report;
    const auto& s = window.address(start);
    report.instance = "window(level=" + std::to_string(level) + ",exponent=" + std::to_string(k) + ") start=(" +
                      std::to_string(s.a) + " " + std::to_string(s.b) + ") ticks=" + std::to_string(ticks);

    std::uint64_t work = 0;
    const auto window_law = propagate(gasket_chain(window), start, ticks, budget, work);
    for (const auto& [v, p] : window_law) {
        const VertexAddress f = fold(window.address(v), k);
        report.folded.add({f.a, f.b}, p);
    }
    const std::uint32_t folded_start = finite_graph.index_of(fold(s, k));
    const auto finite_law = propagate(gasket_chain(finite_graph), folded_start, ticks, budget, work);
    for (const auto& [v, p] : finite_law) {
        const auto& a = finite_graph.address(v);
        report.finite.add({a.a, a.b}, p);
    }
    report.tv = total_variation(report.folded, report.finite);
    return report;
}

// ---------------------------------------------------------------- two-walker collision

Rational brute_collision_prob(const FiniteChain& chain, std::int64_t x, std::int64_t y, std::uint64_t ticks,
                              std::uint64_t budget) {
    const std::int64_t both[2] = {x, y};
    check_starts(chain, both);
    if (x == y) return 1;
    Rational met = 0;
    std::uint64_t work = 0;
    std::map<std::pair<std::uint32_t, std::uint32_t>, Rational> law{
        {{static_cast<std::uint32_t>(x), static_cast<std::uint32_t>(y)}, Rational(1)}};
    for (std::uint64_t t = 0; t < ticks && !law.empty(); ++t) {
        std::map<std::pair<std::uint32_t, std::uint32_t>, Rational> next;
        for (const auto& [uv, p] : law) {
            for (const auto& [u, pu] : chain.rows[uv.first]) {
                for (const auto& [v, pv] : chain.rows[uv.second]) {
                    if (++work > budget) throw ResourceError("oracle: enumeration budget exceeded");
                    const Rational w = p * pu * pv;
                    if (u == v) met += w;
                    else next[{u, v}] += w;
                }
            }
        }
        law = std::move(next);
    }
    return met;
}

Rational brute_collision_prob(const GasketGraph& graph, std::uint32_t x, std::uint32_t y, std::uint64_t ticks,
                              std::uint64_t budget) {
    return brute_collision_prob(gasket_chain(graph), x, y, ticks, budget);
}

} // namespace coalesce::oracle
