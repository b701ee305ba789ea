#include "coalesce/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

#include <boost/math/quadrature/exp_sinh.hpp>
#include <boost/math/special_functions/beta.hpp>
#include <boost/math/special_functions/gamma.hpp>

#include "coalesce/format.hpp"
#include "coalesce/kernels.hpp"

namespace coalesce {

// ---------------------------------------------------------------- Hausdorff

double hausdorff_distance(std::span<const double> a, std::span<const double> b) {
    return hausdorff_distance(a, b, [](double p, double q) { return std::abs(p - q); });
}

double hausdorff_distance(std::span<const Point2> a, std::span<const Point2> b) {
    if (a.empty() || b.empty()) throw ContractError("hausdorff_distance: empty set");
    std::vector<double> ax(a.size()), ay(a.size()), bx(b.size()), by(b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        ax[i] = a[i].x;
        ay[i] = a[i].y;
    }
    for (std::size_t i = 0; i < b.size(); ++i) {
        bx[i] = b[i].x;
        by[i] = b[i].y;
    }
    const auto& k = kernels::active();
    const double ab = k.directed_hausdorff_sq(ax.data(), ay.data(), a.size(), bx.data(), by.data(), b.size(), 1.0);
    const double ba = k.directed_hausdorff_sq(bx.data(), by.data(), b.size(), ax.data(), ay.data(), a.size(), 1.0);
    return std::sqrt(std::max(ab, ba));
}

std::vector<Point2> gasket_points(const GasketGraph& graph, std::span<const std::int64_t> states) {
    std::vector<Point2> out;
    out.reserve(states.size());
    for (std::int64_t s : states) {
        const auto& v = graph.address(static_cast<std::uint32_t>(s));
        out.push_back({v.x(), v.y()});
    }
    return out;
}

double state_set_hausdorff(const WalkModel& model, std::span<const std::int64_t> a, std::span<const std::int64_t> b) {
    if (const auto* g = std::get_if<GasketWalkModel>(&model)) {
        const auto pa = gasket_points(*g->graph, a);
        const auto pb = gasket_points(*g->graph, b);
        return hausdorff_distance(std::span<const Point2>(pa), std::span<const Point2>(pb));
    }
    const auto& l = std::get<LatticeWalkModel>(model);
    if (l.is_circle()) {
        return hausdorff_distance(a, b, [&](std::int64_t x, std::int64_t y) { return circle_distance(x, y, l.circumference); });
    }
    return hausdorff_distance(a, b, [](std::int64_t x, std::int64_t y) { return static_cast<double>(x > y ? x - y : y - x); });
}

// ---------------------------------------------------------------- regression

LinearFit fit_linear(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size()) throw ContractError("fit_linear: size mismatch");
    const std::size_t n = x.size();
    if (n < 2) throw ContractError("fit_linear: need at least 2 points");
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= static_cast<double>(n);
    my /= static_cast<double>(n);
    double sxx = 0.0, sxy = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        sxx += (x[i] - mx) * (x[i] - mx);
        sxy += (x[i] - mx) * (y[i] - my);
        syy += (y[i] - my) * (y[i] - my);
    }
    if (sxx == 0.0) throw ContractError("fit_linear: x values are all equal");
    LinearFit fit;
    fit.points = n;
    fit.slope = sxy / sxx;
    fit.intercept = my - fit.slope * mx;
    double ssr = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double r = y[i] - (fit.intercept + fit.slope * x[i]);
        ssr += r * r;
    }
    fit.r2 = syy > 0.0 ? 1.0 - ssr / syy : 1.0;
    fit.slope_stderr = n > 2 ? std::sqrt(ssr / static_cast<double>(n - 2) / sxx) : 0.0;
    return fit;
}

nlohmann::json TailFit::to_json() const {
    return {{"slope", slope}, {"intercept", intercept}, {"stderr", stderr_slope}, {"r2", r2},
            {"range", {x_min, x_max}}, {"points", points}};
}

TailFit fit_power_law(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size()) throw ContractError("fit_power_law: size mismatch");
    if (x.size() < 4) throw ContractError("fit_power_law: need at least 4 points");
    std::vector<double> lx, ly;
    for (std::size_t i = 0; i < x.size(); ++i) {
        if (!(x[i] > 0.0) || !(y[i] > 0.0) || !std::isfinite(x[i]) || !std::isfinite(y[i])) {
            throw ContractError("fit_power_law: data must be positive and finite");
        }
        lx.push_back(std::log(x[i]));
        ly.push_back(std::log(y[i]));
    }
    const LinearFit f = fit_linear(lx, ly);
    TailFit t;
    t.slope = f.slope;
    t.intercept = f.intercept;
    t.stderr_slope = f.slope_stderr;
    t.r2 = f.r2;
    t.points = f.points;
    t.x_min = *std::min_element(x.begin(), x.end());
    t.x_max = *std::max_element(x.begin(), x.end());
    return t;
}

// ---------------------------------------------------------------- closed forms

namespace {

void check_gamma_domain(double alpha, double beta, double A) {
    if (!(alpha > 1.0) || !(beta > 0.0) || !(A > 0.0) || !std::isfinite(alpha) || !std::isfinite(beta) || !std::isfinite(A)) {
        throw DomainError("gamma integral needs alpha > 1, beta > 0, A > 0");
    }
}

} // namespace

double closed_form_gamma_integral(double alpha, double beta, double A) {
    check_gamma_domain(alpha, beta, A);
    const double s = (alpha - 1.0) / beta;
    return boost::math::tgamma(s) / beta * std::pow(A, -s);
}

double quadrature_gamma_integral(double alpha, double beta, double A) {
    check_gamma_domain(alpha, beta, A);
    // t = e^s splits the line at t = 1; both halves decay at least exponentially.
    boost::math::quadrature::exp_sinh<double> integrator;
    const double inf = std::numeric_limits<double>::infinity();
    auto upper = [&](double s) { return std::exp((1.0 - alpha) * s - A * std::exp(-beta * s)); };
    auto lower = [&](double s) { return std::exp((alpha - 1.0) * s - A * std::exp(beta * s)); };
    const double tol = 1e-14;
    return integrator.integrate(upper, 0.0, inf, tol) + integrator.integrate(lower, 0.0, inf, tol);
}

double gamma_from_p(double p) {
    if (!(p > 0.0 && p <= 1.0)) throw DomainError("gamma_from_p: p must lie in (0, 1]");
    const double g = 1.0 / (1.0 - p / 5.0);
    if (!(g > 1.0 && g <= 1.25)) throw DomainError("gamma_from_p: result outside (1, 1.25]");
    return g;
}

double stable_window_h(double alpha, double eta) {
    if (!(alpha > 1.0 && alpha < 2.0)) throw ParameterError("alpha must lie in (1, 2)");
    if (!(eta > (alpha - 1.0) / 2.0 && eta < alpha - 1.0)) {
        throw ParameterError("eta must lie in ((alpha - 1) / 2, alpha - 1)");
    }
    const double h = 1.0 - (1.0 + eta) / alpha;
    if (!(h > 0.0)) throw ParameterError("h = 1 - (1 + eta) / alpha must be positive");
    return h;
}

// ---------------------------------------------------------------- binomial

Interval clopper_pearson(std::uint64_t successes, std::uint64_t trials, double confidence) {
    if (trials == 0) throw ContractError("clopper_pearson: no trials");
    if (successes > trials) throw ContractError("clopper_pearson: successes exceed trials");
    if (!(confidence > 0.0 && confidence < 1.0)) throw ContractError("clopper_pearson: confidence must lie in (0, 1)");
    const double tail = (1.0 - confidence) / 2.0;
    const auto k = static_cast<double>(successes);
    const auto n = static_cast<double>(trials);
    Interval ci;
    ci.lo = successes == 0 ? 0.0 : boost::math::ibeta_inv(k, n - k + 1.0, tail);
    ci.hi = successes == trials ? 1.0 : boost::math::ibeta_inv(k + 1.0, n - k, 1.0 - tail);
    return ci;
}

nlohmann::json BoundCheck::to_json() const {
    return {{"pass", pass}, {"estimate", estimate}, {"ci", {ci.lo, ci.hi}}, {"threshold", threshold}};
}

BoundCheck binomial_bound_check(std::uint64_t successes, std::uint64_t trials, double p_low, double slack,
                                double confidence) {
    BoundCheck b;
    b.ci = clopper_pearson(successes, trials, confidence);
    b.estimate = static_cast<double>(successes) / static_cast<double>(trials);
    b.threshold = p_low * (1.0 - slack);
    b.pass = b.ci.hi >= b.threshold;
    return b;
}

// ---------------------------------------------------------------- survival curves

namespace {

double quantile(std::vector<double> v, double q) {
    std::sort(v.begin(), v.end());
    const double pos = q * static_cast<double>(v.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, v.size() - 1);
    return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

} // namespace

double SurvivalCurve::exceed_prob(std::size_t time_index, std::size_t m_index) const {
    return static_cast<double>(exceed[time_index][m_index]) / static_cast<double>(replicates);
}

std::string SurvivalCurve::to_csv(const std::string& hash_comment) const {
    std::string out;
    if (!hash_comment.empty()) out += "# manifest_hash=" + hash_comment + "\n";
    out += "t,mean_count,q10,q90,m,exceed_prob,ci_lo,ci_hi\n";
    for (std::size_t i = 0; i < times.size(); ++i) {
        for (std::size_t j = 0; j < thresholds.size(); ++j) {
            out += fmt17(times[i]) + "," + fmt17(mean[i]) + "," + fmt17(q10[i]) + "," + fmt17(q90[i]) + "," +
                   std::to_string(thresholds[j]) + "," + fmt17(exceed_prob(i, j)) + "," + fmt17(exceed_ci[i][j].lo) + "," +
                   fmt17(exceed_ci[i][j].hi) + "\n";
        }
    }
    return out;
}

SurvivalCurve survival_curve_from_counts(std::span<const std::uint64_t> ticks, double tick_duration,
                                         std::vector<std::vector<std::uint32_t>> counts,
                                         std::span<const std::size_t> thresholds, double confidence) {
    if (counts.size() != ticks.size()) throw ContractError("survival_curve: one count row per time is required");
    if (counts.empty() || counts.front().empty()) throw ContractError("survival_curve: no replicates");
    SurvivalCurve c;
    c.replicates = counts.front().size();
    c.ticks.assign(ticks.begin(), ticks.end());
    c.thresholds.assign(thresholds.begin(), thresholds.end());
    for (std::size_t i = 0; i < ticks.size(); ++i) {
        const auto& row = counts[i];
        if (row.size() != c.replicates) throw ContractError("survival_curve: ragged count rows");
        c.times.push_back(static_cast<double>(ticks[i]) * tick_duration);
        std::vector<double> as_double(row.begin(), row.end());
        double sum = 0.0;
        for (double v : as_double) sum += v;
        c.mean.push_back(sum / static_cast<double>(row.size()));
        c.q10.push_back(quantile(as_double, 0.1));
        c.q90.push_back(quantile(as_double, 0.9));
        std::vector<std::uint64_t> ex;
        std::vector<Interval> ci;
        for (std::size_t m : thresholds) {
            const auto k = static_cast<std::uint64_t>(std::count_if(row.begin(), row.end(), [&](std::uint32_t v) { return v > m; }));
            ex.push_back(k);
            ci.push_back(clopper_pearson(k, row.size(), confidence));
        }
        c.exceed.push_back(std::move(ex));
        c.exceed_ci.push_back(std::move(ci));
    }
    c.counts = std::move(counts);
    return c;
}

SurvivalCurve survival_curve(std::span<const EventLog> logs, std::span<const std::uint64_t> ticks,
                             std::span<const std::size_t> thresholds, double confidence) {
    if (logs.empty()) throw ContractError("survival_curve: no replicates");
    std::vector<std::vector<std::uint32_t>> counts;
    for (std::uint64_t t : ticks) {
        std::vector<std::uint32_t> row;
        for (const auto& log : logs) {
            if (t > log.horizon) throw ContractError("survival_curve: time beyond a replicate's horizon");
            row.push_back(static_cast<std::uint32_t>(log.count_at(t)));
        }
        counts.push_back(std::move(row));
    }
    return survival_curve_from_counts(ticks, logs.front().tick_duration, std::move(counts), thresholds, confidence);
}

// ---------------------------------------------------------------- tail shape

nlohmann::json TailShapeReport::to_json() const {
    return {{"form", form == TailForm::GasketStretched ? "gasket-stretched" : "stable-loglog"},
            {"slope", fit.slope},
            {"intercept", fit.intercept},
            {"stderr", fit.slope_stderr},
            {"r2", fit.r2},
            {"bins_used", bins_used},
            {"bins_dropped", bins_dropped},
            {"sufficient", sufficient}};
}

TailShapeReport tail_shape_check(std::span<const TailBin> bins, TailForm form, double walk_dimension,
                                 std::uint64_t min_exceed) {
    if (form == TailForm::GasketStretched && !(walk_dimension > 1.0)) {
        throw ContractError("tail_shape_check: walk dimension must exceed 1");
    }
    TailShapeReport rep;
    rep.form = form;
    std::vector<double> x, y;
    for (const auto& b : bins) {
        if (b.trials == 0 || b.exceed < min_exceed) {
            ++rep.bins_dropped;
            continue;
        }
        const double p = static_cast<double>(b.exceed) / static_cast<double>(b.trials);
        if (form == TailForm::GasketStretched) {
            x.push_back(std::pow(std::pow(b.r, walk_dimension) / b.t, 1.0 / (walk_dimension - 1.0)));
        } else {
            x.push_back(std::log(b.r));
        }
        y.push_back(std::log(p));
    }
    rep.bins_used = x.size();
    rep.sufficient = x.size() >= 4;
    if (x.size() >= 2) {
        try {
            rep.fit = fit_linear(x, y);
        } catch (const ContractError&) {
            rep.sufficient = false;
        }
    }
    return rep;
}

std::vector<TailBin> bin_tail_samples(std::span<const double> r, std::span<const double> t,
                                      std::span<const std::uint8_t> exceed) {
    if (r.size() != t.size() || r.size() != exceed.size()) throw ContractError("bin_tail_samples: size mismatch");
    std::map<std::pair<double, double>, TailBin> bins;
    for (std::size_t i = 0; i < r.size(); ++i) {
        auto& b = bins[{r[i], t[i]}];
        b.r = r[i];
        b.t = t[i];
        ++b.trials;
        b.exceed += exceed[i] ? 1 : 0;
    }
    std::vector<TailBin> out;
    for (const auto& [k, b] : bins) out.push_back(b);
    return out;
}

} // namespace coalesce
