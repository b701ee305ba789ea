#include <algorithm>
#include <cmath>
#include <map>
#include <memory>
#include <numeric>

#include <boost/math/distributions/chi_squared.hpp>

#include "coalesce/analysis.hpp"
#include "coalesce/errors.hpp"
#include "coalesce/samplers.hpp"
#include "doctest.h"

using namespace coalesce;

namespace {

double chi2_critical(std::size_t dof, double level = 0.01) {
    return boost::math::quantile(boost::math::complement(boost::math::chi_squared(static_cast<double>(dof)), level));
}

double chi2(const std::vector<double>& observed, const std::vector<double>& expected) {
    double s = 0.0;
    for (std::size_t i = 0; i < observed.size(); ++i) s += (observed[i] - expected[i]) * (observed[i] - expected[i]) / expected[i];
    return s;
}

double ks_two_sample(std::vector<double> a, std::vector<double> b) {
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    std::size_t i = 0, j = 0;
    double d = 0.0;
    while (i < a.size() && j < b.size()) {
        const double x = std::min(a[i], b[j]);
        while (i < a.size() && a[i] == x) ++i;
        while (j < b.size() && b[j] == x) ++j;
        d = std::max(d, std::abs(double(i) / a.size() - double(j) / b.size()));
    }
    return d;
}

// 1% critical value of the two-sample statistic.
double ks_critical(std::size_t n, std::size_t m) { return 1.628 * std::sqrt(double(n + m) / (double(n) * m)); }

std::shared_ptr<const GasketGraph> graph(int level, int k = 0) {
    return std::make_shared<const GasketGraph>(build_gasket_graph(level, k));
}

} // namespace

TEST_CASE("gasket walk chooses neighbours uniformly") {
    const auto g = graph(3);
    const std::uint32_t v4 = g->index_of({3, 2, 2}), corner = g->index_of({3, 0, 0});
    for (std::uint32_t v : {v4, corner}) {
        WalkStream ws(StreamId{1, v, 0}.key(), RngDomain::GasketWalk);
        std::map<std::uint32_t, double> count;
        const int n = 100000;
        for (int i = 0; i < n; ++i) count[gasket_walk_step(*g, v, ws)] += 1;
        const auto nb = g->neighbors(v);
        REQUIRE(count.size() == nb.size());
        std::vector<double> obs, exp;
        for (auto w : nb) {
            obs.push_back(count[w]);
            exp.push_back(double(n) / nb.size());
        }
        CHECK(chi2(obs, exp) < chi2_critical(nb.size() - 1));
    }
}

TEST_CASE("walk paths") {
    const WalkModel model = GasketWalkModel::make(graph(2));
    const auto p0 = simulate_walk(model, 3, 0, StreamId{1, 0, 0}.key());
    CHECK(p0.states == std::vector<std::int64_t>{3});
    const auto p = simulate_walk(model, 3, 50, StreamId{1, 0, 0}.key());
    CHECK(p.states.size() == 51);
    const auto& g = *std::get<GasketWalkModel>(model).graph;
    for (std::size_t t = 1; t < p.states.size(); ++t) {
        const auto nb = g.neighbors(static_cast<std::uint32_t>(p.states[t - 1]));
        CHECK(std::find(nb.begin(), nb.end(), static_cast<std::uint32_t>(p.states[t])) != nb.end());
    }
    CHECK(p.tick_duration == doctest::Approx(1.0 / 25));
    CHECK(simulate_walk(model, 3, 50, StreamId{1, 0, 0}.key()).states == p.states);
}

TEST_CASE("walker batch reproduces individual paths") {
    const WalkModel gm = GasketWalkModel::make(graph(4, 1));
    const WalkModel lm = LatticeWalkModel::circle(std::make_shared<const LatticeStepLaw>(LatticeStepLaw::make(1.5, 0.5, 50)), 101);
    for (const WalkModel* m : {&gm, &lm}) {
        WalkerBatch batch(*m);
        std::vector<PathSample> paths;
        for (std::uint64_t i = 0; i < 20; ++i) {
            const auto key = StreamId{9, i, 0}.key();
            batch.add(key, static_cast<std::int64_t>(i * 3));
            paths.push_back(simulate_walk(*m, static_cast<std::int64_t>(i * 3), 200, key));
        }
        for (std::uint64_t t = 0; t < 200; ++t) {
            batch.step(t);
            for (std::size_t i = 0; i < batch.size(); ++i) REQUIRE(batch.state(i) == paths[i].states[t + 1]);
        }
    }
}

TEST_CASE("gasket walk decimation and time scaling") {
    // Traced on the coarse vertices, the level-4 walk is the level-3 walk, and
    // one coarse step takes 5 fine ticks on average.
    const WalkModel coarse = GasketWalkModel::make(graph(3, 3));
    const WalkModel fine = GasketWalkModel::make(graph(4, 2));
    const auto& gc = *std::get<GasketWalkModel>(coarse).graph;
    const auto& gf = *std::get<GasketWalkModel>(fine).graph;
    const std::int64_t sc = gc.index_of({3, 0, 0});
    const std::uint32_t sf = gf.index_of({4, 0, 0});
    const int n = 20000, steps = 25;
    std::vector<double> dc, df;
    double ticks = 0.0, ticks_sq = 0.0;
    for (int i = 0; i < n; ++i) {
        const auto a = simulate_walk(coarse, sc, steps, StreamId{2, std::uint64_t(i), 0}.key());
        dc.push_back(euclidean_distance(gc.address(std::uint32_t(a.states.back())), gc.address(std::uint32_t(sc))));
        WalkStream ws(StreamId{3, std::uint64_t(i), 0}.key(), RngDomain::GasketWalk);
        std::uint32_t v = sf, last = sf;
        int moves = 0;
        std::uint64_t t = 0;
        while (moves < steps) {
            v = gasket_walk_step(gf, v, ws);
            ++t;
            const auto& p = gf.address(v);
            if (p.a % 2 == 0 && p.b % 2 == 0 && v != last) {
                last = v;
                ++moves;
            }
        }
        df.push_back(euclidean_distance(gf.address(v), gf.address(sf)));
        ticks += double(t);
        ticks_sq += double(t) * double(t);
    }
    CHECK(ks_two_sample(dc, df) < ks_critical(n, n));
    const double mean = ticks / n, sd = std::sqrt(ticks_sq / n - mean * mean);
    CHECK(std::abs(mean - 5.0 * steps) < 3.0 * sd / std::sqrt(double(n)));
}

TEST_CASE("gasket walk sup-displacement tail is stretched-exponential shaped") {
    const WalkModel model = GasketWalkModel::make(graph(4, 2));
    const auto& g = *std::get<GasketWalkModel>(model).graph;
    const std::int64_t start = g.index_of({4, 0, 0});
    std::vector<double> sup;
    for (std::uint64_t i = 0; i < 20000; ++i) sup.push_back(max_displacement(model, simulate_walk(model, start, 125, StreamId{4, i, 0}.key())));
    std::vector<TailBin> bins;
    double prev = 1.0;
    for (double r : {0.375, 0.5, 0.625, 0.75, 0.875, 1.0}) {
        const auto k = static_cast<std::uint64_t>(std::count_if(sup.begin(), sup.end(), [&](double s) { return s > r; }));
        bins.push_back({r, 0.2, k, sup.size()});
        CHECK(double(k) / sup.size() <= prev);
        prev = double(k) / sup.size();
    }
    const auto rep = tail_shape_check(bins, TailForm::GasketStretched, gasket_walk_dimension(), 20);
    CHECK(rep.fit.slope < 0.0);
    CHECK(rep.fit.r2 >= 0.9);
}

TEST_CASE("lattice step law table") {
    const auto law = LatticeStepLaw::make(1.5, 0.5, 64);
    CHECK(law.probability(0) == 0.5);
    CHECK(law.probability(65) == 0.0);
    double total = 0.0;
    for (std::int32_t j = -64; j <= 64; ++j) {
        total += law.probability(j);
        CHECK(law.probability(j) == law.probability(-j));
    }
    CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
    // Power-law shape away from the folded end.
    CHECK(law.probability(2) / law.probability(4) == doctest::Approx(std::pow(2.0, 2.5)).epsilon(1e-12));
    CHECK(law.probability(64) > law.probability(63));
    CHECK_THROWS_AS(LatticeStepLaw::make(2.5, 0.5, 4), ParameterError);
    CHECK_THROWS_AS(LatticeStepLaw::make(1.5, 1.0, 4), ParameterError);
    CHECK_THROWS_AS(LatticeStepLaw::make(1.5, 0.5, 0), ParameterError);
}

TEST_CASE("lattice step frequencies match the table") {
    const auto law = LatticeStepLaw::make(1.5, 0.5, 8);
    WalkStream ws(StreamId{5, 0, 0}.key(), RngDomain::LatticeWalk);
    const int n = 200000;
    std::vector<double> obs(17, 0.0), exp(17);
    double mean = 0.0, sq = 0.0;
    for (int i = 0; i < n; ++i) {
        const auto s = lattice_step(law, ws);
        REQUIRE(std::abs(s) <= 8);
        obs[s + 8] += 1;
        mean += s;
        sq += double(s) * s;
    }
    for (int j = -8; j <= 8; ++j) exp[j + 8] = law.probability(j) * n;
    CHECK(chi2(obs, exp) < chi2_critical(16));
    mean /= n;
    const double sd = std::sqrt(sq / n - mean * mean);
    CHECK(std::abs(mean) < 3.0 * sd / std::sqrt(double(n)));
}

TEST_CASE("circle arithmetic") {
    CHECK(circle_reduce(16, 16) == 0);
    CHECK(circle_reduce(-1, 16) == 15);
    CHECK(circle_reduce(-33, 16) == 15);
    CHECK(circle_distance(0, 8, 16) == 8);
    CHECK(circle_distance(1, 15, 16) == 2);
}

TEST_CASE("max displacement") {
    const WalkModel line = LatticeWalkModel::line(std::make_shared<const LatticeStepLaw>(LatticeStepLaw::make(1.5, 0.5, 4)), 1.0);
    PathSample p;
    p.model = ModelTag::LatticeLine;
    p.start = 3;
    p.states = {3, 3, 3, 3};
    CHECK(max_displacement(line, p) == 0.0);
    p.states = {3, 4, 5, 6, 7};
    CHECK(max_displacement(line, p) == 4.0);
    const WalkModel circle = LatticeWalkModel::circle(std::make_shared<const LatticeStepLaw>(LatticeStepLaw::make(1.5, 0.5, 4)), 10);
    p.model = ModelTag::LatticeCircle;
    p.states = {3, 2, 1, 0, 9};
    CHECK(max_displacement(circle, p) == 4.0);
}

TEST_CASE("stable increments: Gaussian case") {
    const StableParams p{2.0, 0.5, 0.0};
    RngStream rng(StreamId{6, 0, 0}, RngDomain::Continuum);
    std::vector<double> x(50000);
    for (auto& v : x) v = stable_increment(p, 1.0, rng);
    std::sort(x.begin(), x.end());
    double d = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double f = 0.5 * std::erfc(-x[i] / std::sqrt(2.0));
        d = std::max({d, std::abs(f - double(i) / x.size()), std::abs(f - double(i + 1) / x.size())});
    }
    CHECK(d < 1.628 / std::sqrt(double(x.size())));
}

TEST_CASE("stable increments: convolution stability") {
    for (double upsilon : {0.0, 0.6}) {
        const StableParams p{1.5, 1.0, upsilon};
        RngStream r1(StreamId{7, 0, 0}, RngDomain::Continuum), r2(StreamId{7, 1, 0}, RngDomain::Continuum);
        std::vector<double> sums(40000), single(40000);
        for (auto& s : sums) {
            s = 0.0;
            for (int k = 0; k < 4; ++k) s += stable_increment(p, 0.25, r1);
        }
        for (auto& s : single) s = stable_increment(p, 1.0, r2);
        CHECK(ks_two_sample(sums, single) < ks_critical(sums.size(), single.size()));
    }
}

TEST_CASE("stable increments: tail exponent") {
    const StableParams p{1.5, 1.0, 0.0};
    RngStream rng(StreamId{8, 0, 0}, RngDomain::Continuum);
    std::vector<double> x(400000);
    for (auto& v : x) v = std::abs(stable_increment(p, 1.0, rng));
    std::vector<TailBin> bins;
    for (double u : {10.0, 15.0, 22.0, 33.0, 50.0, 75.0}) {
        bins.push_back({u, 1.0, static_cast<std::uint64_t>(std::count_if(x.begin(), x.end(), [&](double v) { return v > u; })), x.size()});
    }
    const auto rep = tail_shape_check(bins, TailForm::StableLogLog);
    CHECK(rep.sufficient);
    CHECK(rep.fit.slope == doctest::Approx(-1.5).epsilon(0.2 / 1.5));
}

TEST_CASE("stable parameters are validated") {
    CHECK_THROWS_AS((StableParams{0.0, 1.0, 0.0}.validate()), ParameterError);
    CHECK_THROWS_AS((StableParams{1.5, -1.0, 0.0}.validate()), ParameterError);
    CHECK_THROWS_AS((StableParams{1.5, 1.0, 1.5}.validate()), ParameterError);
    const StableParams p{1.5, 1.0, 0.0};
    CHECK(p.c_plus() == doctest::Approx(p.c_minus()));
    RngStream rng(StreamId{1, 0, 0}, RngDomain::Continuum);
    const auto path = simulate_stable_path(p, 1.0, 10, rng);
    CHECK(path.size() == 11);
    CHECK(path[0] == 0.0);
}

TEST_CASE("tick durations") {
    CHECK(std::get<GasketWalkModel>(WalkModel{GasketWalkModel::make(graph(3))}).tick_duration() == doctest::Approx(1.0 / 125));
    const auto law = LatticeStepLaw::make(1.5, 0.5, 10);
    CHECK(law.tick_duration(4.0) == doctest::Approx(law.stable_scale() / 8.0));
}

TEST_CASE("stable increments: self-similarity") {
    for (double upsilon : {0.0, -0.5}) {
        const StableParams p{1.5, 1.0, upsilon};
        RngStream r1(StreamId{9, 0, 0}, RngDomain::Continuum), r2(StreamId{9, 1, 0}, RngDomain::Continuum);
        std::vector<double> big(40000), scaled(40000);
        for (auto& v : big) v = stable_increment(p, 8.0, r1);
        const double k = std::pow(8.0, 1.0 / 1.5);
        for (auto& v : scaled) v = k * stable_increment(p, 1.0, r2);
        CHECK(ks_two_sample(big, scaled) < ks_critical(big.size(), scaled.size()));
    }
}

TEST_CASE("lattice walk marginals approach the stable law") {
    // One tick at unit site spacing lasts stable_scale time units.
    const auto law = std::make_shared<const LatticeStepLaw>(LatticeStepLaw::make(1.5, 0.5, 20000));
    const WalkModel model = LatticeWalkModel::line(law, 1.0);
    const StableParams p{1.5, 1.0, 0.0};
    const std::size_t n = 20000;
    std::vector<double> ks;
    for (std::uint64_t T : {1, 10, 100, 1000}) {
        std::vector<double> lat(n), cont(n);
        for (std::size_t i = 0; i < n; ++i) {
            lat[i] = double(simulate_walk(model, 0, T, StreamId{10, i, T}.key()).states.back());
        }
        RngStream rng(StreamId{11, T, 0}, RngDomain::Continuum);
        for (auto& v : cont) v = stable_increment(p, double(T) * law->stable_scale(), rng);
        ks.push_back(ks_two_sample(lat, cont));
    }
    MESSAGE("KS at 1, 10, 100, 1000 ticks: " << ks[0] << " " << ks[1] << " " << ks[2] << " " << ks[3]);
    CHECK(ks[0] > ks[1]);
    CHECK(ks[1] > ks[2]);
    CHECK(ks[2] > ks[3]);
    // The leading correction decays like T^(1 - 2/alpha) = T^(-1/3), so only a loose bound at 1000.
    CHECK(ks[3] < 0.025);
}
