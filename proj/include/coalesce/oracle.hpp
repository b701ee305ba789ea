#pragma once

// Exact (rational) laws of tiny coalescing systems.

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <boost/multiprecision/cpp_int.hpp>

#include "coalesce/engine.hpp"
#include "coalesce/gasket.hpp"
#include "coalesce/samplers.hpp"
#include "json.hpp"

namespace coalesce::oracle {

using Rational = boost::multiprecision::cpp_rational;

inline constexpr std::uint64_t kDefaultBudget = 50'000'000;

// Finite Markov chain with exact transition probabilities.
struct FiniteChain {
    std::string name;
    std::vector<std::vector<std::pair<std::uint32_t, Rational>>> rows;
    std::vector<std::string> labels; // human-readable state names

    std::size_t size() const noexcept { return rows.size(); }
    std::size_t max_branching() const;
};

// Natural walk on a gasket graph: each neighbour with probability 1/degree.
FiniteChain gasket_chain(const GasketGraph& graph);
// The implemented lattice sampler on Z_L, with probabilities read off the
// alias tables exactly (including the 2^-32 quantization).
FiniteChain circle_chain(const LatticeStepLaw& law, std::int64_t circumference);
// Exact law of one alias-sampled step, indexed by j + M.
std::vector<Rational> exact_alias_law(const LatticeStepLaw& law);

struct DistributionTable {
    std::map<std::vector<std::int64_t>, Rational> probs;

    Rational total() const;
    void add(std::vector<std::int64_t> outcome, const Rational& p);
    std::string canonical() const; // "o1 o2 ...:p/q;" per outcome
    std::string hash() const;      // SHA-256 of canonical()
    nlohmann::json to_json() const;
};

Rational total_variation(const DistributionTable& a, const DistributionTable& b);

struct CoalescingLaw {
    DistributionTable sorted;   // sorted final class locations
    DistributionTable labelled; // final location of every particle, in particle order
    std::uint64_t work = 0;     // transitions explored
};

// Exact law after `ticks` ticks of the coalescing system with free motion
// given by `chain`; tick-0 duplicates merge by rank. ResourceError when the
// enumeration work exceeds `budget`.
CoalescingLaw coalescing_law(const FiniteChain& chain, std::span<const std::int64_t> starts, const Ranking& ranking,
                             std::uint64_t ticks, std::uint64_t budget = kDefaultBudget);

DistributionTable enumerate_coalescing_distribution(const GasketGraph& graph, std::span<const std::int64_t> starts,
                                                    const Ranking& ranking, std::uint64_t ticks,
                                                    std::uint64_t budget = kDefaultBudget);

// Independent cross-check: lists every tuple of neighbour-slot choices and
// runs the offline collision rule on the resulting free paths.
CoalescingLaw coalescing_law_by_paths(const GasketGraph& graph, std::span<const std::int64_t> starts,
                                      const Ranking& ranking, std::uint64_t ticks,
                                      std::uint64_t budget = kDefaultBudget);

struct ExchangeabilityReport {
    std::string instance;
    std::size_t rankings = 0;
    Rational tv_max = 0;          // over sorted final sets
    Rational labelled_tv_max = 0; // over labelled final positions
    std::string tables_hash;      // SHA-256 over all ranking tables
    nlohmann::json to_json() const;
};

ExchangeabilityReport exchangeability_check(const FiniteChain& chain, std::span<const std::int64_t> starts,
                                            std::uint64_t ticks, std::uint64_t budget = kDefaultBudget);
ExchangeabilityReport exchangeability_check(const GasketGraph& graph, std::span<const std::int64_t> starts,
                                            std::uint64_t ticks, std::uint64_t budget = kDefaultBudget);

struct FoldingReport {
    std::string instance;
    Rational tv = 0;
    DistributionTable folded;  // law of psi(walk on the window) after `ticks`
    DistributionTable finite;  // law of the finite-gasket walk from psi(start)
    nlohmann::json to_json() const;
};

// `window` must have window_exponent > 0; the start must be at least `ticks`
// hops from both far window corners (ContractError otherwise).
FoldingReport folding_check(const GasketGraph& window, std::uint32_t start, std::uint64_t ticks,
                            std::uint64_t budget = kDefaultBudget);

// P{two independent walks occupy the same state at some tick in [0, ticks]}.
Rational brute_collision_prob(const FiniteChain& chain, std::int64_t x, std::int64_t y, std::uint64_t ticks,
                              std::uint64_t budget = kDefaultBudget);
Rational brute_collision_prob(const GasketGraph& graph, std::uint32_t x, std::uint32_t y, std::uint64_t ticks,
                              std::uint64_t budget = kDefaultBudget);

std::string to_string(const Rational& r);
double to_double(const Rational& r);

} // namespace coalesce::oracle
