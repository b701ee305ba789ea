#pragma once

// Reductions of simulation output: Hausdorff distances, power-law fits,
// survival curves, exact binomial intervals and tail-shape regressions.

#include <cmath>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "coalesce/engine.hpp"
#include "coalesce/errors.hpp"
#include "json.hpp"

namespace coalesce {

// ---------------------------------------------------------------- Hausdorff

struct Point2 {
    double x = 0.0;
    double y = 0.0;
};

// Generic sup-inf distance in both directions under `metric`.
template <class P, class Metric>
double hausdorff_distance(std::span<const P> a, std::span<const P> b, Metric metric) {
    if (a.empty() || b.empty()) throw ContractError("hausdorff_distance: empty set");
    auto directed = [&](std::span<const P> from, std::span<const P> to) {
        double worst = 0.0;
        for (const auto& p : from) {
            double best = INFINITY;
            for (const auto& q : to) best = std::min(best, static_cast<double>(metric(p, q)));
            worst = std::max(worst, best);
        }
        return worst;
    };
    return std::max(directed(a, b), directed(b, a));
}

// Real line.
double hausdorff_distance(std::span<const double> a, std::span<const double> b);
// Euclidean plane, through the active SIMD kernel.
double hausdorff_distance(std::span<const Point2> a, std::span<const Point2> b);

// Plane coordinates of gasket states, and d_H between two sets of states of any model.
std::vector<Point2> gasket_points(const GasketGraph& graph, std::span<const std::int64_t> states);
double state_set_hausdorff(const WalkModel& model, std::span<const std::int64_t> a, std::span<const std::int64_t> b);

// ---------------------------------------------------------------- regression

struct LinearFit {
    double slope = 0.0;
    double intercept = 0.0;
    double slope_stderr = 0.0;
    double r2 = 0.0;
    std::size_t points = 0;
};

LinearFit fit_linear(std::span<const double> x, std::span<const double> y);

struct TailFit {
    double slope = 0.0;
    double intercept = 0.0;
    double stderr_slope = 0.0;
    double r2 = 0.0;
    double x_min = 0.0;
    double x_max = 0.0;
    std::size_t points = 0;

    nlohmann::json to_json() const;
};

// Least squares on (log x, log y); needs >= 4 points, all coordinates positive.
TailFit fit_power_law(std::span<const double> x, std::span<const double> y);

// ---------------------------------------------------------------- closed forms

// Integral over (0, inf) of t^-alpha exp(-A t^-beta) dt.
double closed_form_gamma_integral(double alpha, double beta, double A);
// The same integral by double-exponential quadrature.
double quadrature_gamma_integral(double alpha, double beta, double A);

// gamma = 1 / (1 - p / 5) for p in (0, 1]; the result lies in (1, 1.25].
double gamma_from_p(double p);

// Exponent of the mean class count decay on the gasket: -log 3 / log 5.
inline double gasket_decay_exponent() { return -std::log(3.0) / std::log(5.0); }
// Walk dimension log 5 / log 2.
inline double gasket_walk_dimension() { return std::log(5.0) / std::log(2.0); }

// h = 1 - (1 + eta) / alpha after checking eta in ((alpha-1)/2, alpha-1); ParameterError otherwise.
double stable_window_h(double alpha, double eta);

// ---------------------------------------------------------------- binomial

struct Interval {
    double lo = 0.0;
    double hi = 1.0;
};

// Exact two-sided interval at the given confidence.
Interval clopper_pearson(std::uint64_t successes, std::uint64_t trials, double confidence = 0.99);

struct BoundCheck {
    bool pass = false;
    double estimate = 0.0;
    Interval ci;
    double threshold = 0.0; // p_low * (1 - slack)
    nlohmann::json to_json() const;
};

// Passes when the data are consistent with a success probability of at least
// p_low * (1 - slack), i.e. the interval's upper end reaches it.
BoundCheck binomial_bound_check(std::uint64_t successes, std::uint64_t trials, double p_low, double slack = 0.0,
                                double confidence = 0.99);

// ---------------------------------------------------------------- survival curves

struct SurvivalCurve {
    std::vector<std::uint64_t> ticks;
    std::vector<double> times;
    std::vector<std::vector<std::uint32_t>> counts; // [time][replicate]
    std::vector<double> mean;
    std::vector<double> q10;
    std::vector<double> q90;
    std::vector<std::size_t> thresholds;             // m values
    std::vector<std::vector<std::uint64_t>> exceed;  // [time][m] replicates with count > m
    std::vector<std::vector<Interval>> exceed_ci;    // [time][m]
    std::size_t replicates = 0;

    double exceed_prob(std::size_t time_index, std::size_t m_index) const;
    // Columns t, mean_count, q10, q90, m, exceed_prob, ci_lo, ci_hi.
    std::string to_csv(const std::string& hash_comment = "") const;
};

SurvivalCurve survival_curve(std::span<const EventLog> logs, std::span<const std::uint64_t> ticks,
                             std::span<const std::size_t> thresholds, double confidence = 0.99);
// Same reduction from precomputed class counts, indexed [time][replicate].
SurvivalCurve survival_curve_from_counts(std::span<const std::uint64_t> ticks, double tick_duration,
                                         std::vector<std::vector<std::uint32_t>> counts,
                                         std::span<const std::size_t> thresholds, double confidence = 0.99);

// ---------------------------------------------------------------- tail shape

enum class TailForm {
    GasketStretched, // regress log P on (r^dw / t)^(1 / (dw - 1))
    StableLogLog,    // regress log P on log u
};

struct TailBin {
    double r = 0.0; // radius or level u
    double t = 1.0;
    std::uint64_t exceed = 0;
    std::uint64_t trials = 0;
};

struct TailShapeReport {
    TailForm form = TailForm::GasketStretched;
    LinearFit fit;
    std::size_t bins_used = 0;
    std::size_t bins_dropped = 0; // fewer than min_exceed exceedances
    bool sufficient = false;      // at least 4 usable bins
    nlohmann::json to_json() const;
};

// Bins with fewer than `min_exceed` exceedances are dropped (and counted).
TailShapeReport tail_shape_check(std::span<const TailBin> bins, TailForm form, double walk_dimension = 0.0,
                                 std::uint64_t min_exceed = 50);

// Aggregates raw (r, t, indicator) samples into bins by exact (r, t).
std::vector<TailBin> bin_tail_samples(std::span<const double> r, std::span<const double> t,
                                      std::span<const std::uint8_t> exceed);

} // namespace coalesce
