// Named experiments. Each has a default manifest (the acceptance
// configuration), a simulation phase that reduces runs to sufficient
// statistics, and an analysis phase that turns those into fits and verdicts.

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <sstream>

#include "coalesce/analysis.hpp"
#include "coalesce/engine.hpp"
#include "coalesce/format.hpp"
#include "coalesce/harness.hpp"
#include "coalesce/oracle.hpp"

namespace coalesce {

using nlohmann::json;

namespace {

std::string fixed(double v, int digits = 4) {
    std::ostringstream ss;
    ss.setf(std::ios::fixed);
    ss.precision(digits);
    ss << v;
    return ss.str();
}

std::uint64_t budget_or(const RunContext& ctx, std::uint64_t fallback) { return ctx.budget ? ctx.budget : fallback; }

void check_eta(const json& root) {
    if (detail::manifest_lookup(root, "params.eta") == nullptr) return;
    try {
        stable_window_h(manifest_get<double>(root, "params.law.alpha", 1.5), manifest_get<double>(root, "params.eta"));
    } catch (const ParameterError& e) {
        throw ValidationError("params.eta", e.what());
    }
}

std::vector<std::uint64_t> grid_from(const json& raw, const char* key) { return raw.at(key).get<std::vector<std::uint64_t>>(); }

// ================================================================ 1: exchangeability

json exchangeability_manifest() {
    return {{"experiment", "exchangeability-oracle"},
            {"model", "gasket-finite"},
            {"resolution", {{"level", 1}}},
            {"initial_set", {{"kind", "explicit"}, {"points", {{0, 0}, {1, 0}, {1, 1}}}}},
            {"horizon", {{"ticks", 3}}},
            {"params", {{"circle", {{"circumference", 6}, {"max_jump", 3}, {"points", {0, 2, 3}}, {"ticks", 2}}}}}};
}

json exchangeability_simulate(const ExperimentManifest& m, const RunContext& ctx) {
    const json root = m.to_json();
    const WalkModel model = build_model(m);
    const auto& graph = *std::get<GasketWalkModel>(model).graph;
    const auto starts = initial_set(m.initial_set, model, m.seed);
    const auto ticks = manifest_get<std::uint64_t>(root, "horizon.ticks");
    const std::uint64_t budget = budget_or(ctx, oracle::kDefaultBudget);

    const auto report = oracle::exchangeability_check(graph, starts, ticks, budget);
    const auto chain = oracle::gasket_chain(graph);
    const auto identity = Ranking::identity(starts.size());
    const auto dp = oracle::coalescing_law(chain, starts, identity, ticks, budget);
    const auto paths = oracle::coalescing_law_by_paths(graph, starts, identity, ticks, budget);

    json raw{{"report", report.to_json()},
             {"dp_vs_paths_tv", oracle::to_string(oracle::total_variation(dp.sorted, paths.sorted))},
             {"dp_vs_paths_labelled_tv", oracle::to_string(oracle::total_variation(dp.labelled, paths.labelled))},
             {"table_total", oracle::to_string(dp.sorted.total())},
             {"identity_table", dp.sorted.to_json()}};

    if (root.at("params").contains("circle")) {
        const auto L = manifest_get<std::int64_t>(root, "params.circle.circumference");
        const auto M = manifest_get<std::int32_t>(root, "params.circle.max_jump");
        const auto pts = manifest_get<std::vector<std::int64_t>>(root, "params.circle.points");
        const auto cticks = manifest_get<std::uint64_t>(root, "params.circle.ticks");
        const auto law = LatticeStepLaw::make(1.5, 0.5, M);
        const auto circle = oracle::exchangeability_check(oracle::circle_chain(law, L), pts, cticks, budget);
        raw["circle"] = circle.to_json();
    }
    return raw;
}

ExperimentResult exchangeability_analyze(const ExperimentManifest&, const json& raw) {
    ExperimentResult r;
    const json& rep = raw.at("report");
    const bool circle_ok = !raw.contains("circle") || (raw["circle"]["tv_max"] == "0" && raw["circle"]["labelled_tv_max"] == "0");
    const bool pass = rep.at("tv_max") == "0" && rep.at("labelled_tv_max") == "0" && raw.at("dp_vs_paths_tv") == "0" &&
                      raw.at("dp_vs_paths_labelled_tv") == "0" && raw.at("table_total") == "1" && circle_ok;
    r.summary = {{"tv_max", rep.at("tv_max")},
                 {"labelled_tv_max", rep.at("labelled_tv_max")},
                 {"rankings", rep.at("rankings")},
                 {"dp_vs_paths_tv", raw.at("dp_vs_paths_tv")},
                 {"circle_ok", circle_ok}};
    r.criteria.push_back({1, "exchangeability (exact)", pass,
                          "rankings=" + rep.at("rankings").dump() + " tv_max=" + rep.at("tv_max").get<std::string>() +
                              " labelled_tv_max=" + rep.at("labelled_tv_max").get<std::string>() +
                              " dp_vs_paths_tv=" + raw.at("dp_vs_paths_tv").get<std::string>()});
    r.files.push_back({"oracle_report.json", raw.dump()});
    return r;
}

// ================================================================ 2: folding

json folding_manifest() {
    return {{"experiment", "folding-oracle"},
            {"model", "gasket-window"},
            {"resolution", {{"level", 2}, {"window_exponent", 1}}},
            {"horizon", {{"ticks", 4}}},
            {"params", {{"min_hops", 5}}}};
}

json folding_simulate(const ExperimentManifest& m, const RunContext& ctx) {
    const json root = m.to_json();
    const WalkModel model = build_model(m);
    const auto& graph = *std::get<GasketWalkModel>(model).graph;
    const auto ticks = manifest_get<std::uint64_t>(root, "horizon.ticks");
    const auto min_hops = manifest_get<std::uint32_t>(root, "params.min_hops");
    const auto corners = graph.far_corners();
    const auto dist = bfs_distances(graph, corners);
    json checks = json::array();
    oracle::Rational worst = 0;
    for (std::uint32_t v = 0; v < graph.vertex_count(); ++v) {
        if (dist[v] < std::max<std::uint64_t>(min_hops, ticks)) continue;
        for (std::uint64_t t = 0; t <= ticks; ++t) {
            const auto rep = oracle::folding_check(graph, v, t, budget_or(ctx, oracle::kDefaultBudget));
            worst = std::max(worst, rep.tv);
            const auto& a = graph.address(v);
            checks.push_back({{"start", {a.a, a.b}}, {"hops_inside", dist[v]}, {"ticks", t}, {"tv", oracle::to_string(rep.tv)}});
        }
    }
    return {{"checks", checks}, {"tv_max", oracle::to_string(worst)}};
}

ExperimentResult folding_analyze(const ExperimentManifest& m, const json& raw) {
    ExperimentResult r;
    const auto ticks = manifest_get<std::uint64_t>(m.to_json(), "horizon.ticks");
    std::size_t at_full = 0;
    for (const auto& c : raw.at("checks")) at_full += c.at("ticks").get<std::uint64_t>() == ticks ? 1 : 0;
    const bool pass = at_full > 0 && raw.at("tv_max") == "0";
    r.summary = {{"tv_max", raw.at("tv_max")}, {"starts_at_full_horizon", at_full}, {"checks", raw.at("checks").size()}};
    r.criteria.push_back({2, "folding (exact)", pass,
                          "starts=" + std::to_string(at_full) + " ticks=" + std::to_string(ticks) +
                              " tv_max=" + raw.at("tv_max").get<std::string>()});
    r.files.push_back({"folding_report.json", raw.dump()});
    return r;
}

// ================================================================ 3: scaling collapse

json collapse_manifest() {
    return {{"experiment", "gasket-scaling-collapse"},
            {"model", "gasket-window"},
            {"resolution", {{"total_exponent", 7}, {"refinement", 2}}},
            {"horizon", {{"beta", 1.0}}},
            {"replicates", 10000},
            {"seed", 20240301},
            {"params", {{"levels", {0, 1, 2}}, {"anchor", 1}}},
            {"analysis", {{"sigmas", 3.0}, {"p_floor", 0.05}, {"confidence", 0.99}}}};
}

json collapse_simulate(const ExperimentManifest& m, const RunContext&) {
    const json root = m.to_json();
    const auto levels = manifest_get<std::vector<int>>(root, "params.levels");
    const auto total = manifest_get<int>(root, "resolution.total_exponent");
    const auto refine = manifest_get<int>(root, "resolution.refinement");
    const auto anchor = manifest_get<std::int64_t>(root, "params.anchor");
    const double beta = manifest_get<double>(root, "horizon.beta");
    if (!(beta > 0.0)) throw ValidationError("horizon.beta", "must be positive");
    json rows = json::array();
    for (int n : levels) {
        const int level = n + refine;
        const int window = total - level;
        if (n < 0 || window < 1) throw ValidationError("params.levels", "level leaves no room for the window");
        auto graph = std::make_shared<const GasketGraph>(build_gasket_graph(level, window));
        const WalkModel model = GasketWalkModel::make(graph);
        // The n-triangle with lower-left corner anchor * 2^-n; its side is 2^refine hops.
        const std::int64_t side = std::int64_t{1} << refine;
        const VertexAddress left{level, anchor * side, 0};
        const VertexAddress right{level, anchor * side + side, 0};
        const std::int64_t x = graph->index_of(left);
        const std::int64_t y = graph->index_of(right);
        const auto ticks = static_cast<std::uint64_t>(std::llround(beta * std::pow(5.0, refine)));
        const auto& gm = std::get<GasketWalkModel>(model);
        if (gm.boundary_distance[static_cast<std::size_t>(x)] < ticks || gm.boundary_distance[static_cast<std::size_t>(y)] < ticks) {
            throw ValidationError("resolution.total_exponent", "window too small for the horizon");
        }
        std::vector<std::pair<std::int64_t, std::int64_t>> pairs(m.replicates, {x, y});
        std::vector<std::pair<PhiloxKey, PhiloxKey>> keys;
        keys.reserve(m.replicates);
        const std::int64_t both[2] = {x, y};
        for (std::uint64_t rep = 0; rep < m.replicates; ++rep) {
            const auto k = location_keys(model, both, m.seed, (static_cast<std::uint64_t>(n) << 32) | rep);
            keys.emplace_back(k[0], k[1]);
        }
        const auto outcomes = paired_partial_system(model, pairs, keys, ticks);
        std::uint64_t hits = 0;
        for (const auto& o : outcomes) hits += o.collided ? 1 : 0;
        rows.push_back({{"n", n},
                        {"level", level},
                        {"window_exponent", window},
                        {"ticks", ticks},
                        {"time_horizon", static_cast<double>(ticks) * gm.tick_duration()},
                        {"collisions", hits},
                        {"replicates", m.replicates}});
    }
    return {{"rows", rows}};
}

ExperimentResult collapse_analyze(const ExperimentManifest& m, const json& raw) {
    const json root = m.to_json();
    const double sigmas = manifest_get<double>(root, "analysis.sigmas");
    const double floor = manifest_get<double>(root, "analysis.p_floor");
    const double conf = manifest_get<double>(root, "analysis.confidence");
    ExperimentResult r;
    std::string csv = "n,level,ticks,time_horizon,collisions,replicates,p_hat,ci_lo,ci_hi\n";
    std::vector<double> p, var;
    std::uint64_t hits = 0, trials = 0;
    for (const auto& row : raw.at("rows")) {
        const auto k = row.at("collisions").get<std::uint64_t>();
        const auto n = row.at("replicates").get<std::uint64_t>();
        const double ph = static_cast<double>(k) / static_cast<double>(n);
        const auto ci = clopper_pearson(k, n, conf);
        p.push_back(ph);
        var.push_back(ph * (1.0 - ph) / static_cast<double>(n));
        hits += k;
        trials += n;
        csv += row.at("n").dump() + "," + row.at("level").dump() + "," + row.at("ticks").dump() + "," +
               fmt17(row.at("time_horizon").get<double>()) + "," + std::to_string(k) + "," + std::to_string(n) + "," +
               fmt17(ph) + "," + fmt17(ci.lo) + "," + fmt17(ci.hi) + "\n";
    }
    double worst_z = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        for (std::size_t j = i + 1; j < p.size(); ++j) {
            const double s = std::sqrt(var[i] + var[j]);
            worst_z = std::max(worst_z, s > 0.0 ? std::abs(p[i] - p[j]) / s : (p[i] == p[j] ? 0.0 : INFINITY));
        }
    }
    const auto pooled = clopper_pearson(hits, trials, conf);
    const double p_common = static_cast<double>(hits) / static_cast<double>(trials);
    const double gamma = hits > 0 ? gamma_from_p(p_common) : 0.0;
    const bool pass = p.size() >= 2 && worst_z <= sigmas && pooled.lo > floor;
    r.summary = {{"p_common", p_common}, {"ci", {pooled.lo, pooled.hi}}, {"max_pairwise_z", worst_z}, {"gamma", gamma}};
    std::string per;
    for (double v : p) per += (per.empty() ? "" : "/") + fixed(v, 4);
    r.criteria.push_back({3, "discrete scaling collapse", pass,
                          "p_hat(n)=" + per + " max|z|=" + fixed(worst_z, 2) + " pooled_ci_lo=" + fixed(pooled.lo, 4) +
                              " gamma=" + fixed(gamma, 4)});
    r.files.push_back({"collapse.csv", csv});
    r.files.push_back({"collapse.json", r.summary.dump()});
    return r;
}

// ================================================================ 4: circle tau scaling

std::string step_law_json(const ExperimentManifest& m) {
    const WalkModel model = build_model(m);
    return std::get<LatticeWalkModel>(model).law->to_json().dump();
}

json tau_manifest() {
    return {{"experiment", "circle-tau-scaling"},
            {"model", "lattice-circle"},
            {"resolution", {{"circumference", 65536}}},
            {"horizon", {{"max_ticks", 4000000000ULL}}},
            {"replicates", 5000},
            {"seed", 20240302},
            {"params", {{"law", {{"alpha", 1.5}, {"hold", 0.5}}}, {"eta", 0.4}, {"n_values", {8, 16, 32, 64}}}},
            {"analysis", {{"target_slope", -1.5}, {"tolerance", 0.25}}}};
}

json tau_simulate(const ExperimentManifest& m, const RunContext& ctx) {
    const json root = m.to_json();
    check_eta(root);
    const WalkModel model = build_model(m);
    const auto n_values = manifest_get<std::vector<std::size_t>>(root, "params.n_values");
    const auto max_ticks = manifest_get<std::uint64_t>(root, "horizon.max_ticks");
    json rows = json::array();
    for (std::size_t n : n_values) {
        if (n < 2) throw ValidationError("params.n_values", "need at least 2 particles");
        const auto starts = initial_set({{"kind", "equally-spaced"}, {"n", n}}, model, m.seed);
        const auto taus = parallel_map<std::uint64_t>(m.replicates, ctx.workers, [&](std::size_t rep) {
            const auto keys = location_keys(model, starts, m.seed, (static_cast<std::uint64_t>(n) << 32) | rep);
            EvolveOptions opt;
            opt.horizon = max_ticks;
            opt.stop_at_count = n - 1;
            opt.record_states = false;
            const auto evo = evolve_coalescing(model, starts, Ranking::identity(n), keys, opt);
            return tau_to_count_tick(evo.log, n - 1);
        });
        rows.push_back({{"n", n}, {"tau_ticks", taus}});
    }
    return {{"tick_duration", tick_duration(model)}, {"rows", rows}};
}

ExperimentResult tau_analyze(const ExperimentManifest& m, const json& raw) {
    const json root = m.to_json();
    const double target = manifest_get<double>(root, "analysis.target_slope");
    const double tol = manifest_get<double>(root, "analysis.tolerance");
    const double dt = raw.at("tick_duration").get<double>();
    ExperimentResult r;
    std::string csv = "n,mean_tau,stderr_tau,median_tau,censored,replicates\n";
    std::vector<double> ns, means;
    std::uint64_t censored_total = 0;
    for (const auto& row : raw.at("rows")) {
        const auto taus = row.at("tau_ticks").get<std::vector<std::uint64_t>>();
        std::vector<double> t;
        std::uint64_t censored = 0;
        for (auto v : taus) {
            if (v == kNeverTick) ++censored;
            else t.push_back(static_cast<double>(v) * dt);
        }
        censored_total += censored;
        const double mean = t.empty() ? 0.0 : std::accumulate(t.begin(), t.end(), 0.0) / static_cast<double>(t.size());
        double ss = 0.0;
        for (double v : t) ss += (v - mean) * (v - mean);
        const double se = t.size() > 1 ? std::sqrt(ss / static_cast<double>(t.size() - 1) / static_cast<double>(t.size())) : 0.0;
        std::sort(t.begin(), t.end());
        const double median = t.empty() ? 0.0 : t[t.size() / 2];
        ns.push_back(row.at("n").get<double>());
        means.push_back(mean);
        csv += row.at("n").dump() + "," + fmt17(mean) + "," + fmt17(se) + "," + fmt17(median) + "," +
               std::to_string(censored) + "," + std::to_string(taus.size()) + "\n";
    }
    TailFit fit;
    bool fitted = false;
    try {
        fit = fit_power_law(ns, means);
        fitted = true;
    } catch (const ContractError&) {
    }
    const bool pass = fitted && censored_total == 0 && std::abs(fit.slope - target) <= tol;
    r.summary = {{"fit", fit.to_json()}, {"censored", censored_total}, {"target_slope", target}, {"tolerance", tol}};
    r.criteria.push_back({4, "circle coalescence rate", pass,
                          "slope=" + fixed(fit.slope, 3) + " +- " + fixed(fit.stderr_slope, 3) + " (target " + fixed(target, 2) +
                              " +- " + fixed(tol, 2) + ") censored=" + std::to_string(censored_total)});
    r.files.push_back({"tau.csv", csv});
    r.files.push_back({"step_law.json", step_law_json(m)});
    r.files.push_back({"fit.json", json{{"experiment", m.experiment}, {"slope", fit.slope}, {"stderr", fit.stderr_slope},
                                        {"range", {fit.x_min, fit.x_max}}, {"pass", pass}}
                                       .dump()});
    return r;
}

// ================================================================ 5: circle exceedance

json exceed_manifest() {
    return {{"experiment", "circle-exceedance"},
            {"model", "lattice-circle"},
            {"resolution", {{"circumference", 16384}}},
            {"initial_set", {{"kind", "uniform"}, {"n", 1024}}},
            {"horizon", {{"ticks", 4096}}},
            {"replicates", 4000},
            {"seed", 20240303},
            {"params", {{"law", {{"alpha", 1.5}, {"hold", 0.5}}}, {"eta", 0.4}}},
            {"analysis", {{"m_values", {48, 52, 56, 60, 64, 68, 72}}, {"slope_margin", 0.25}, {"confidence", 0.99}}}};
}

json exceed_simulate(const ExperimentManifest& m, const RunContext& ctx) {
    const json root = m.to_json();
    check_eta(root);
    const WalkModel model = build_model(m);
    const auto horizon = manifest_get<std::uint64_t>(root, "horizon.ticks");
    const auto grid = geometric_tick_grid(horizon);
    const auto per_rep = parallel_map<std::vector<std::uint32_t>>(m.replicates, ctx.workers, [&](std::size_t rep) {
        const auto starts = initial_set(m.initial_set, model, splitmix64(m.seed ^ splitmix64(rep + 1)));
        const auto keys = location_keys(model, starts, m.seed, rep);
        EvolveOptions opt;
        opt.horizon = horizon;
        opt.record_states = false;
        const auto evo = evolve_coalescing(model, starts, Ranking::identity(starts.size()), keys, opt);
        std::vector<std::uint32_t> counts;
        for (auto t : grid) counts.push_back(static_cast<std::uint32_t>(evo.log.count_at(t)));
        return counts;
    });
    std::vector<std::vector<std::uint32_t>> counts(grid.size(), std::vector<std::uint32_t>(m.replicates));
    for (std::size_t rep = 0; rep < m.replicates; ++rep) {
        for (std::size_t i = 0; i < grid.size(); ++i) counts[i][rep] = per_rep[rep][i];
    }
    return {{"ticks", grid}, {"tick_duration", tick_duration(model)}, {"counts", counts}};
}

ExperimentResult exceed_analyze(const ExperimentManifest& m, const json& raw) {
    const json root = m.to_json();
    const auto ms = manifest_get<std::vector<std::size_t>>(root, "analysis.m_values");
    const double margin = manifest_get<double>(root, "analysis.slope_margin");
    const double conf = manifest_get<double>(root, "analysis.confidence");
    const double alpha = manifest_get<double>(root, "params.law.alpha", 1.5);
    const auto ticks = grid_from(raw, "ticks");
    auto curve = survival_curve_from_counts(ticks, raw.at("tick_duration").get<double>(),
                                            raw.at("counts").get<std::vector<std::vector<std::uint32_t>>>(), ms, conf);
    const std::size_t last = ticks.size() - 1;
    std::vector<double> x, y;
    std::string csv = "m,exceed,replicates,exceed_prob,ci_lo,ci_hi\n";
    bool positive = true;
    for (std::size_t j = 0; j < ms.size(); ++j) {
        const double p = curve.exceed_prob(last, j);
        positive = positive && p > 0.0;
        x.push_back(static_cast<double>(ms[j]));
        y.push_back(p);
        csv += std::to_string(ms[j]) + "," + std::to_string(curve.exceed[last][j]) + "," + std::to_string(curve.replicates) +
               "," + fmt17(p) + "," + fmt17(curve.exceed_ci[last][j].lo) + "," + fmt17(curve.exceed_ci[last][j].hi) + "\n";
    }
    TailFit fit;
    if (positive) fit = fit_power_law(x, y);
    const double bound = 1.0 - alpha + margin;
    const bool pass = positive && fit.slope <= bound;
    ExperimentResult r;
    r.summary = {{"t", curve.times[last]},       {"fit", fit.to_json()},           {"bound", bound},
                 {"median_count", curve.q10.empty() ? 0.0 : curve.mean[last]}, {"all_positive", positive}};
    r.criteria.push_back({5, "circle exceedance decay", pass,
                          "t_ticks=" + std::to_string(ticks[last]) + " slope=" + fixed(fit.slope, 3) + " +- " +
                              fixed(fit.stderr_slope, 3) + " (one-sided bound " + fixed(bound, 2) + ")" +
                              " mean_count=" + fixed(curve.mean[last], 1)});
    r.files.push_back({"exceedance.csv", csv});
    r.files.push_back({"step_law.json", step_law_json(m)});
    r.files.push_back({"survival.csv", curve.to_csv()});
    r.files.push_back({"fit.json", json{{"experiment", m.experiment}, {"slope", fit.slope}, {"stderr", fit.stderr_slope},
                                        {"range", {fit.x_min, fit.x_max}}, {"pass", pass}}
                                       .dump()});
    return r;
}

// ================================================================ 6-7: gasket coalescence

json gasket_manifest() {
    return {{"experiment", "gasket-coalescence"},
            {"model", "gasket-finite"},
            {"resolution", {{"level", 6}}},
            {"initial_set", {{"kind", "all-vertices"}, {"level", 4}}},
            {"horizon", {{"ticks", 16384}}},
            {"replicates", 1000},
            {"seed", 20240304},
            {"analysis",
             {{"fit_ticks", {32, 4096}},
              {"continuity_max_tick", 4096},
              {"tolerance", 0.2},
              {"small_fraction", 0.1},
              {"mesh_factor", 2.0},
              {"thresholds", {1, 2, 4, 8, 16, 32, 64}}}}};
}

json gasket_simulate(const ExperimentManifest& m, const RunContext& ctx) {
    const json root = m.to_json();
    const WalkModel model = build_model(m);
    const auto starts = initial_set(m.initial_set, model, m.seed);
    const auto horizon = manifest_get<std::uint64_t>(root, "horizon.ticks");
    const auto grid = geometric_tick_grid(horizon);
    struct Rep {
        std::vector<std::uint32_t> counts;
        std::vector<double> dh;
        bool escaped = false;
    };
    const auto reps = parallel_map<Rep>(m.replicates, ctx.workers, [&](std::size_t rep) {
        const auto keys = location_keys(model, starts, m.seed, rep);
        EvolveOptions opt;
        opt.horizon = horizon;
        opt.sample_ticks = grid;
        const auto evo = evolve_coalescing(model, starts, Ranking::identity(starts.size()), keys, opt);
        Rep out;
        out.escaped = evo.escaped;
        for (const auto& s : evo.states) {
            out.counts.push_back(static_cast<std::uint32_t>(s.count()));
            out.dh.push_back(state_set_hausdorff(model, s.locations, evo.states.front().locations));
        }
        return out;
    });
    std::vector<std::vector<std::uint32_t>> counts(grid.size(), std::vector<std::uint32_t>(m.replicates));
    std::vector<std::vector<double>> dh(grid.size(), std::vector<double>(m.replicates));
    for (std::size_t rep = 0; rep < m.replicates; ++rep) {
        if (reps[rep].counts.size() != grid.size()) throw ContractError("gasket-coalescence: missing samples");
        for (std::size_t i = 0; i < grid.size(); ++i) {
            counts[i][rep] = reps[rep].counts[i];
            dh[i][rep] = reps[rep].dh[i];
        }
    }
    // Initial mesh: largest nearest-neighbour distance within the start set.
    const auto& graph = *std::get<GasketWalkModel>(model).graph;
    const auto pts = gasket_points(graph, starts);
    double mesh = 0.0;
    for (std::size_t i = 0; i < pts.size(); ++i) {
        double best = INFINITY;
        for (std::size_t j = 0; j < pts.size(); ++j) {
            if (i != j) best = std::min(best, std::hypot(pts[i].x - pts[j].x, pts[i].y - pts[j].y));
        }
        mesh = std::max(mesh, best);
    }
    return {{"ticks", grid}, {"tick_duration", tick_duration(model)}, {"initial_count", starts.size()},
            {"mesh", mesh},  {"counts", counts},                      {"hausdorff", dh}};
}

double median(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

ExperimentResult gasket_analyze(const ExperimentManifest& m, const json& raw) {
    const json root = m.to_json();
    const auto fit_ticks = manifest_get<std::vector<std::uint64_t>>(root, "analysis.fit_ticks");
    const auto cont_max = manifest_get<std::uint64_t>(root, "analysis.continuity_max_tick");
    const double tol = manifest_get<double>(root, "analysis.tolerance");
    const double small = manifest_get<double>(root, "analysis.small_fraction");
    const double mesh_factor = manifest_get<double>(root, "analysis.mesh_factor");
    const auto thresholds = manifest_get<std::vector<std::size_t>>(root, "analysis.thresholds");
    if (fit_ticks.size() != 2 || fit_ticks[0] == 0 || fit_ticks[1] <= fit_ticks[0]) {
        throw ValidationError("analysis.fit_ticks", "must be [lo, hi] with 0 < lo < hi");
    }
    const auto ticks = grid_from(raw, "ticks");
    const double dt = raw.at("tick_duration").get<double>();
    const auto counts = raw.at("counts").get<std::vector<std::vector<std::uint32_t>>>();
    const auto dh = raw.at("hausdorff").get<std::vector<std::vector<double>>>();
    const auto initial = raw.at("initial_count").get<std::size_t>();
    const double mesh = raw.at("mesh").get<double>();
    const auto curve = survival_curve_from_counts(ticks, dt, counts, thresholds);

    // 6: decay exponent of the mean count, plus finiteness and smallness.
    std::vector<double> x, y;
    double mean_at_top = 0.0;
    for (std::size_t i = 0; i < ticks.size(); ++i) {
        if (ticks[i] >= fit_ticks[0] && ticks[i] <= fit_ticks[1]) {
            x.push_back(curve.times[i]);
            y.push_back(curve.mean[i]);
        }
        if (ticks[i] == fit_ticks[1]) mean_at_top = curve.mean[i];
    }
    bool bounded = true;
    for (std::size_t i = 1; i < ticks.size(); ++i) {
        for (auto c : counts[i]) bounded = bounded && c >= 1 && c <= initial;
    }
    for (std::size_t rep = 0; rep < counts.front().size(); ++rep) {
        for (std::size_t i = 1; i < ticks.size(); ++i) bounded = bounded && counts[i][rep] <= counts[i - 1][rep];
    }
    const TailFit fit = fit_power_law(x, y);
    const double target = gasket_decay_exponent();
    const bool is_small = mean_at_top <= small * static_cast<double>(initial);
    const bool pass6 = bounded && is_small && std::abs(fit.slope - target) <= tol;

    // 7: median Hausdorff distance to the start set shrinks as t decreases.
    std::string hcsv = "t,median_dh,q10_dh,q90_dh\n";
    std::vector<double> med;
    std::vector<std::uint64_t> med_ticks;
    for (std::size_t i = 0; i < ticks.size(); ++i) {
        auto v = dh[i];
        std::sort(v.begin(), v.end());
        const double md = median(v);
        const double q10 = v[static_cast<std::size_t>(0.1 * static_cast<double>(v.size() - 1))];
        const double q90 = v[static_cast<std::size_t>(0.9 * static_cast<double>(v.size() - 1))];
        hcsv += fmt17(curve.times[i]) + "," + fmt17(md) + "," + fmt17(q10) + "," + fmt17(q90) + "\n";
        if (ticks[i] >= 1 && ticks[i] <= cont_max) {
            med.push_back(md);
            med_ticks.push_back(ticks[i]);
        }
    }
    bool monotone = !med.empty();
    for (std::size_t i = 1; i < med.size(); ++i) monotone = monotone && med[i - 1] <= med[i];
    const double smallest = med.empty() ? INFINITY : med.front();
    const bool pass7 = monotone && smallest <= mesh_factor * mesh;

    ExperimentResult r;
    r.summary = {{"fit", fit.to_json()},
                 {"target_exponent", target},
                 {"mean_at_fit_top", mean_at_top},
                 {"bounded_and_monotone_counts", bounded},
                 {"median_dh", med},
                 {"median_dh_ticks", med_ticks},
                 {"initial_mesh", mesh}};
    r.criteria.push_back({6, "gasket instantaneous coalescence", pass6,
                          "slope=" + fixed(fit.slope, 3) + " +- " + fixed(fit.stderr_slope, 3) + " (target " + fixed(target, 3) +
                              " +- " + fixed(tol, 2) + ") mean_count_at_t_hi=" + fixed(mean_at_top, 2) + "/" +
                              std::to_string(initial)});
    r.criteria.push_back({7, "continuity at zero", pass7,
                          std::string("median d_H non-increasing as t decreases: ") + (monotone ? "yes" : "no") +
                              "; smallest-t median=" + fixed(smallest, 5) + " vs " + fixed(mesh_factor, 1) + " x mesh " +
                              fixed(mesh, 5)});
    r.files.push_back({"survival.csv", curve.to_csv()});
    r.files.push_back({"hausdorff.csv", hcsv});
    r.files.push_back({"fit.json", json{{"experiment", m.experiment}, {"slope", fit.slope}, {"stderr", fit.stderr_slope},
                                        {"range", {fit.x_min, fit.x_max}}, {"pass", pass6}}
                                       .dump()});
    return r;
}

// ================================================================ 8: gasket sup displacement

json suptail_manifest() {
    return {{"experiment", "gasket-sup-tail"},
            {"model", "gasket-window"},
            {"resolution", {{"level", 5}, {"window_exponent", 2}}},
            {"initial_set", {{"kind", "explicit"}, {"points", {{0, 0}}}}},
            {"horizon", {{"ticks", 625}}},
            {"replicates", 100000},
            {"seed", 20240305},
            {"analysis", {{"r_values", {0.5, 0.625, 0.75, 0.875, 1.0, 1.125, 1.25, 1.375}}, {"min_exceed", 50}, {"r2_min", 0.9}}}};
}

json suptail_simulate(const ExperimentManifest& m, const RunContext&) {
    const json root = m.to_json();
    const WalkModel model = build_model(m);
    const auto& gm = std::get<GasketWalkModel>(model);
    const auto start = initial_set(m.initial_set, model, m.seed);
    if (start.size() != 1) throw ValidationError("initial_set", "exactly one start point");
    const auto ticks = manifest_get<std::uint64_t>(root, "horizon.ticks");
    const auto& graph = *gm.graph;
    const auto& origin = graph.address(static_cast<std::uint32_t>(start[0]));
    // Exact squared distances in units of 4^-(level+1).
    std::vector<std::int64_t> d2(graph.vertex_count());
    for (std::uint32_t v = 0; v < graph.vertex_count(); ++v) d2[v] = squared_distance(graph.address(v), origin).value;

    WalkerBatch batch(model);
    for (std::uint64_t w = 0; w < m.replicates; ++w) batch.add(StreamId{m.seed, w, 0}.key(), start[0]);
    std::vector<std::int64_t> best(m.replicates, 0);
    std::vector<char> truncated(m.replicates, 0);
    for (std::uint64_t t = 0; t < ticks; ++t) {
        batch.step(t);
        for (std::size_t i = 0; i < batch.size(); ++i) {
            const auto v = static_cast<std::uint32_t>(batch.state(i));
            best[i] = std::max(best[i], d2[v]);
            if (!gm.in_safety_zone(v)) truncated[i] = 1;
        }
    }
    std::map<std::int64_t, std::uint64_t> hist;
    std::uint64_t lost = 0;
    for (std::size_t i = 0; i < best.size(); ++i) {
        if (truncated[i]) ++lost;
        else ++hist[best[i]];
    }
    json h = json::array();
    for (const auto& [k, c] : hist) h.push_back({k, c});
    return {{"walkers", m.replicates},
            {"truncated", lost},
            {"ticks", ticks},
            {"time", static_cast<double>(ticks) * gm.tick_duration()},
            {"distance_scale", std::ldexp(1.0, -(graph.level() + 1))},
            {"max_sq_histogram", h}};
}

ExperimentResult suptail_analyze(const ExperimentManifest& m, const json& raw) {
    const json root = m.to_json();
    const auto rs = manifest_get<std::vector<double>>(root, "analysis.r_values");
    const auto min_exceed = manifest_get<std::uint64_t>(root, "analysis.min_exceed");
    const double r2_min = manifest_get<double>(root, "analysis.r2_min");
    const double scale = raw.at("distance_scale").get<double>();
    const double t = raw.at("time").get<double>();
    const auto walkers = raw.at("walkers").get<std::uint64_t>();
    const auto lost = raw.at("truncated").get<std::uint64_t>();
    // Walkers that left the safety zone are excluded from every bin.
    const std::uint64_t kept = walkers - lost;
    std::vector<TailBin> bins;
    std::string csv = "r,t,exceed,walkers,exceed_prob,x\n";
    const double dw = gasket_walk_dimension();
    for (double r : rs) {
        std::uint64_t k = 0;
        for (const auto& e : raw.at("max_sq_histogram")) {
            if (std::sqrt(e[0].get<double>()) * scale > r) k += e[1].get<std::uint64_t>();
        }
        bins.push_back({r, t, k, kept});
        csv += fmt17(r) + "," + fmt17(t) + "," + std::to_string(k) + "," + std::to_string(kept) + "," +
               fmt17(static_cast<double>(k) / static_cast<double>(kept)) + "," +
               fmt17(std::pow(std::pow(r, dw) / t, 1.0 / (dw - 1.0))) + "\n";
    }
    const auto rep = tail_shape_check(bins, TailForm::GasketStretched, dw, min_exceed);
    const bool pass = rep.sufficient && rep.fit.slope < 0.0 && rep.fit.r2 >= r2_min;
    ExperimentResult r;
    r.summary = {{"tail", rep.to_json()}, {"truncated", lost}};
    r.criteria.push_back({8, "maximal-inequality shape", pass,
                          "slope=" + fixed(rep.fit.slope, 3) + " R2=" + fixed(rep.fit.r2, 4) + " bins=" +
                              std::to_string(rep.bins_used) + " dropped=" + std::to_string(rep.bins_dropped) +
                              " truncated=" + std::to_string(lost)});
    r.files.push_back({"sup_tail.csv", csv});
    r.files.push_back({"fit.json", json{{"experiment", m.experiment}, {"slope", rep.fit.slope}, {"stderr", rep.fit.slope_stderr},
                                        {"range", {rs.front(), rs.back()}}, {"r2", rep.fit.r2}, {"pass", pass}}
                                       .dump()});
    return r;
}

// ================================================================ 9: stable sup tail

json stable_manifest() {
    return {{"experiment", "stable-sup-tail"},
            {"model", "continuum-stable"},
            {"horizon", {{"time", 1.0}, {"steps", 100}}},
            {"replicates", 1000000},
            {"seed", 20240306},
            {"params", {{"alpha", 1.5}, {"c", 1.0}, {"upsilon", 0.0}}},
            {"analysis", {{"u_values", {5.0, 6.9, 9.6, 13.3, 18.5, 25.7, 35.8, 50.0}}, {"tolerance", 0.2}, {"min_exceed", 50}}}};
}

json stable_simulate(const ExperimentManifest& m, const RunContext& ctx) {
    const json root = m.to_json();
    StableParams p{manifest_get<double>(root, "params.alpha"), manifest_get<double>(root, "params.c"),
                   manifest_get<double>(root, "params.upsilon")};
    try {
        p.validate();
    } catch (const ParameterError& e) {
        throw ValidationError("params", e.what());
    }
    const double horizon = manifest_get<double>(root, "horizon.time");
    const auto steps = manifest_get<std::size_t>(root, "horizon.steps");
    const auto us = manifest_get<std::vector<double>>(root, "analysis.u_values");
    const std::size_t chunk = 10000;
    const std::size_t chunks = (m.replicates + chunk - 1) / chunk;
    const auto partial = parallel_map<std::vector<std::uint64_t>>(chunks, ctx.workers, [&](std::size_t c) {
        std::vector<std::uint64_t> exceed(us.size(), 0);
        const std::size_t end = std::min<std::size_t>(m.replicates, (c + 1) * chunk);
        for (std::size_t path = c * chunk; path < end; ++path) {
            RngStream rng(StreamId{m.seed, path, 0}, RngDomain::Continuum);
            const auto values = simulate_stable_path(p, horizon, steps, rng);
            const double sup = max_abs(values);
            for (std::size_t j = 0; j < us.size(); ++j) exceed[j] += sup > us[j] ? 1 : 0;
        }
        return exceed;
    });
    std::vector<std::uint64_t> exceed(us.size(), 0);
    for (const auto& v : partial) {
        for (std::size_t j = 0; j < us.size(); ++j) exceed[j] += v[j];
    }
    return {{"paths", m.replicates}, {"u_values", us}, {"exceed", exceed}};
}

ExperimentResult stable_analyze(const ExperimentManifest& m, const json& raw) {
    const json root = m.to_json();
    const double alpha = manifest_get<double>(root, "params.alpha");
    const double tol = manifest_get<double>(root, "analysis.tolerance");
    const auto min_exceed = manifest_get<std::uint64_t>(root, "analysis.min_exceed");
    const auto us = raw.at("u_values").get<std::vector<double>>();
    const auto ex = raw.at("exceed").get<std::vector<std::uint64_t>>();
    const auto paths = raw.at("paths").get<std::uint64_t>();
    std::vector<TailBin> bins;
    std::string csv = "u,exceed,paths,exceed_prob\n";
    for (std::size_t j = 0; j < us.size(); ++j) {
        bins.push_back({us[j], 1.0, ex[j], paths});
        csv += fmt17(us[j]) + "," + std::to_string(ex[j]) + "," + std::to_string(paths) + "," +
               fmt17(static_cast<double>(ex[j]) / static_cast<double>(paths)) + "\n";
    }
    const auto rep = tail_shape_check(bins, TailForm::StableLogLog, 0.0, min_exceed);
    const bool pass = rep.sufficient && rep.bins_dropped == 0 && std::abs(rep.fit.slope + alpha) <= tol;
    ExperimentResult r;
    r.summary = {{"tail", rep.to_json()}, {"target_slope", -alpha}};
    r.criteria.push_back({9, "stable sup-tail exponent", pass,
                          "slope=" + fixed(rep.fit.slope, 3) + " +- " + fixed(rep.fit.slope_stderr, 3) + " (target " +
                              fixed(-alpha, 2) + " +- " + fixed(tol, 2) + ") R2=" + fixed(rep.fit.r2, 4)});
    r.files.push_back({"sup_tail.csv", csv});
    r.files.push_back({"fit.json", json{{"experiment", m.experiment}, {"slope", rep.fit.slope}, {"stderr", rep.fit.slope_stderr},
                                        {"range", {us.front(), us.back()}}, {"pass", pass}}
                                       .dump()});
    return r;
}

// ================================================================ 10: gamma integral

json integral_manifest() {
    return {{"experiment", "gamma-integral"},
            {"replicates", 20},
            {"seed", 20240307},
            {"params", {{"alpha", {1.1, 5.0}}, {"beta", {0.25, 4.0}}, {"A", {0.05, 20.0}}}},
            {"analysis", {{"rel_tol", 1e-8}}}};
}

json integral_simulate(const ExperimentManifest& m, const RunContext&) {
    const json root = m.to_json();
    const auto ar = manifest_get<std::vector<double>>(root, "params.alpha");
    const auto br = manifest_get<std::vector<double>>(root, "params.beta");
    const auto Ar = manifest_get<std::vector<double>>(root, "params.A");
    if (ar.size() != 2 || !(ar[0] > 1.0)) throw ValidationError("params.alpha", "range [lo, hi] with lo > 1");
    if (br.size() != 2 || !(br[0] > 0.0)) throw ValidationError("params.beta", "range [lo, hi] with lo > 0");
    if (Ar.size() != 2 || !(Ar[0] > 0.0)) throw ValidationError("params.A", "range [lo, hi] with lo > 0");
    RngStream rng(StreamId{m.seed, 0, 0}, RngDomain::General);
    json rows = json::array();
    for (std::uint64_t i = 0; i < m.replicates; ++i) {
        const double a = ar[0] + (ar[1] - ar[0]) * rng.uniform01();
        const double b = br[0] + (br[1] - br[0]) * rng.uniform01();
        // A log-uniform over its range.
        const double A = Ar[0] * std::pow(Ar[1] / Ar[0], rng.uniform01());
        const double closed = closed_form_gamma_integral(a, b, A);
        const double quad = quadrature_gamma_integral(a, b, A);
        rows.push_back({{"alpha", a}, {"beta", b}, {"A", A}, {"closed_form", closed}, {"quadrature", quad}});
    }
    return {{"rows", rows}};
}

ExperimentResult integral_analyze(const ExperimentManifest& m, const json& raw) {
    const double tol = manifest_get<double>(m.to_json(), "analysis.rel_tol");
    double worst = 0.0;
    std::string csv = "alpha,beta,A,closed_form,quadrature,rel_err\n";
    for (const auto& row : raw.at("rows")) {
        const double c = row.at("closed_form").get<double>();
        const double q = row.at("quadrature").get<double>();
        const double e = std::abs(c - q) / std::abs(c);
        worst = std::max(worst, std::isfinite(e) ? e : INFINITY);
        csv += fmt17(row.at("alpha").get<double>()) + "," + fmt17(row.at("beta").get<double>()) + "," +
               fmt17(row.at("A").get<double>()) + "," + fmt17(c) + "," + fmt17(q) + "," + fmt17(e) + "\n";
    }
    ExperimentResult r;
    r.summary = {{"max_rel_err", worst}, {"triples", raw.at("rows").size()}};
    std::ostringstream e;
    e << worst;
    r.criteria.push_back({10, "gamma integral closed form", worst <= tol && raw.at("rows").size() >= 20,
                          "triples=" + std::to_string(raw.at("rows").size()) + " max_rel_err=" + e.str()});
    r.files.push_back({"integral.csv", csv});
    return r;
}

// ================================================================ 11: pigeonhole

json pigeon_manifest() {
    return {{"experiment", "pigeonhole"},
            {"replicates", 1000},
            {"seed", 20240308},
            {"params", {{"max_particles", 200}, {"max_boxes", 60}}}};
}

json pigeon_simulate(const ExperimentManifest& m, const RunContext&) {
    const json root = m.to_json();
    const auto max_m = manifest_get<std::uint64_t>(root, "params.max_particles");
    const auto max_b = manifest_get<std::uint64_t>(root, "params.max_boxes");
    if (max_m == 0 || max_b == 0) throw ValidationError("params", "particle and box limits must be positive");
    std::uint64_t bad = 0, slack_min = ~std::uint64_t{0};
    json sample = json::array();
    for (std::uint64_t i = 0; i < m.replicates; ++i) {
        RngStream rng(StreamId{m.seed, i, 0}, RngDomain::General);
        const std::size_t M = 1 + rng.uniform_below(max_m);
        const std::size_t B = 1 + rng.uniform_below(max_b);
        std::vector<std::uint32_t> box(M);
        for (auto& b : box) b = static_cast<std::uint32_t>(rng.uniform_below(B));
        const auto pairs = pigeonhole_pairs(box);
        std::vector<char> used(M, 0);
        bool ok = true;
        for (const auto& [a, b] : pairs) {
            ok = ok && a != b && box[a] == box[b] && !used[a] && !used[b];
            used[a] = used[b] = 1;
        }
        std::vector<std::uint32_t> sorted = box;
        std::sort(sorted.begin(), sorted.end());
        const std::size_t occupied = static_cast<std::size_t>(std::unique(sorted.begin(), sorted.end()) - sorted.begin());
        const std::size_t bound = (M - occupied + 1) / 2;
        ok = ok && pairs.size() >= bound;
        if (!ok) ++bad;
        slack_min = std::min<std::uint64_t>(slack_min, pairs.size() - std::min(pairs.size(), bound));
        if (i < 5) sample.push_back({{"particles", M}, {"occupied", occupied}, {"pairs", pairs.size()}, {"bound", bound}});
    }
    return {{"assignments", m.replicates}, {"violations", bad}, {"min_slack", slack_min}, {"sample", sample}};
}

ExperimentResult pigeon_analyze(const ExperimentManifest&, const json& raw) {
    ExperimentResult r;
    const auto bad = raw.at("violations").get<std::uint64_t>();
    r.summary = raw;
    r.criteria.push_back({11, "pigeonhole property", bad == 0,
                          "assignments=" + raw.at("assignments").dump() + " violations=" + std::to_string(bad)});
    return r;
}

// ================================================================ 12: engine equivalence

json equivalence_manifest() {
    return {{"experiment", "engine-equivalence"},
            {"replicates", 100},
            {"seed", 20240309},
            {"horizon", {{"ticks", 20}}},
            {"params", {{"particles", 4}, {"dump_paths", false}}}};
}

json equivalence_simulate(const ExperimentManifest& m, const RunContext&) {
    const json root = m.to_json();
    const auto ticks = manifest_get<std::uint64_t>(root, "horizon.ticks");
    const auto n = manifest_get<std::size_t>(root, "params.particles");
    if (n == 0) throw ValidationError("params.particles", "must be positive");
    std::vector<WalkModel> models;
    models.push_back(GasketWalkModel::make(std::make_shared<const GasketGraph>(build_gasket_graph(2, 0))));
    models.push_back(GasketWalkModel::make(std::make_shared<const GasketGraph>(build_gasket_graph(1, 2))));
    models.push_back(LatticeWalkModel::circle(std::make_shared<const LatticeStepLaw>(LatticeStepLaw::make(1.5, 0.5, 8)), 16));
    models.push_back(LatticeWalkModel::line(std::make_shared<const LatticeStepLaw>(LatticeStepLaw::make(1.3, 0.5, 12)), 8.0));
    const bool dump_paths = root.at("params").value("dump_paths", false);
    std::uint64_t log_mismatch = 0, state_mismatch = 0, events = 0;
    json per = json::array();
    std::string events_csv = "replicate,tick,time,absorbed,survivor,location\n";
    std::string states_jsonl, paths_csv = "replicate,particle,tick,state\n";
    for (std::uint64_t i = 0; i < m.replicates; ++i) {
        const WalkModel& model = models[i % models.size()];
        RngStream rng(StreamId{m.seed, i, 0}, RngDomain::General);
        std::vector<std::int64_t> starts(n);
        for (auto& s : starts) {
            if (const auto* g = std::get_if<GasketWalkModel>(&model)) s = static_cast<std::int64_t>(rng.uniform_below(g->graph->vertex_count()));
            else s = static_cast<std::int64_t>(rng.uniform_below(6));
        }
        const Ranking ranking = Ranking::random(n, rng);
        std::vector<PhiloxKey> keys;
        for (std::size_t p = 0; p < n; ++p) keys.push_back(StreamId{m.seed, i, 1000 + p}.key());

        std::vector<PathSample> paths;
        for (std::size_t p = 0; p < n; ++p) paths.push_back(simulate_walk(model, starts[p], ticks, keys[p]));
        const auto offline = apply_collision_rule(paths, ranking);

        EvolveOptions opt;
        opt.horizon = ticks;
        for (std::uint64_t t = 0; t <= ticks; ++t) opt.sample_ticks.push_back(t);
        const auto online = evolve_coalescing(model, starts, ranking, keys, opt);
        const auto replayed = replay(online.log, model, starts, keys, opt.sample_ticks);

        bool states_ok = replayed == online.states && online.states.size() == ticks + 1;
        for (std::uint64_t t = 0; states_ok && t <= ticks; ++t) {
            std::vector<std::int64_t> occupied;
            for (const auto& p : offline.paths) occupied.push_back(p.states[t]);
            std::sort(occupied.begin(), occupied.end());
            occupied.erase(std::unique(occupied.begin(), occupied.end()), occupied.end());
            states_ok = occupied == online.states[t].locations;
        }
        const bool log_ok = offline.log == online.log;
        log_mismatch += log_ok ? 0 : 1;
        state_mismatch += states_ok ? 0 : 1;
        events += online.log.events.size();
        append_events_csv(events_csv, i, online.log, model);
        states_jsonl += set_state_jsonl(online.states.back(), model);
        if (dump_paths) {
            for (std::size_t p = 0; p < n; ++p) append_path_csv(paths_csv, i, p, model, paths[p]);
        }
        if (!log_ok || !states_ok) per.push_back({{"system", i}, {"model", to_string(model_tag(model))}});
    }
    json out{{"systems", m.replicates}, {"log_mismatches", log_mismatch}, {"state_mismatches", state_mismatch},
            {"events", events}, {"failures", per}};
    out["events_csv"] = events_csv;
    out["final_states_jsonl"] = states_jsonl;
    if (dump_paths) out["paths_csv"] = paths_csv;
    return out;
}

ExperimentResult equivalence_analyze(const ExperimentManifest&, const json& raw) {
    ExperimentResult r;
    const auto lm = raw.at("log_mismatches").get<std::uint64_t>();
    const auto sm = raw.at("state_mismatches").get<std::uint64_t>();
    r.summary = raw;
    r.summary.erase("events_csv");
    r.summary.erase("final_states_jsonl");
    r.summary.erase("paths_csv");
    if (raw.contains("events_csv")) r.files.push_back({"events.csv", raw.at("events_csv").get<std::string>()});
    if (raw.contains("final_states_jsonl")) r.files.push_back({"final_states.jsonl", raw.at("final_states_jsonl").get<std::string>()});
    if (raw.contains("paths_csv")) r.files.push_back({"paths.csv", raw.at("paths_csv").get<std::string>()});
    r.criteria.push_back({12, "engine equivalence", lm == 0 && sm == 0,
                          "systems=" + raw.at("systems").dump() + " events=" + raw.at("events").dump() +
                              " log_mismatches=" + std::to_string(lm) + " state_mismatches=" + std::to_string(sm)});
    return r;
}

// ================================================================ extra: partial system coupling

json partial_manifest() {
    return {{"experiment", "partial-system-coupling"},
            {"model", "gasket-finite"},
            {"resolution", {{"level", 5}}},
            {"initial_set", {{"kind", "all-vertices"}, {"level", 3}}},
            {"horizon", {{"ticks", 125}}},
            {"replicates", 200},
            {"seed", 20240310}};
}

json partial_simulate(const ExperimentManifest& m, const RunContext& ctx) {
    const json root = m.to_json();
    const WalkModel model = build_model(m);
    const auto starts = initial_set(m.initial_set, model, m.seed);
    const auto horizon = manifest_get<std::uint64_t>(root, "horizon.ticks");
    struct Row {
        std::uint64_t full = 0, partial = 0, pairs = 0, met = 0;
    };
    const auto rows = parallel_map<Row>(m.replicates, ctx.workers, [&](std::size_t rep) {
        const auto keys = location_keys(model, starts, m.seed, rep);
        EvolveOptions opt;
        opt.horizon = horizon;
        opt.record_states = false;
        const auto evo = evolve_coalescing(model, starts, Ranking::identity(starts.size()), keys, opt);
        // Consecutive particles share a box.
        std::vector<std::uint32_t> box(starts.size());
        for (std::size_t i = 0; i < box.size(); ++i) box[i] = static_cast<std::uint32_t>(i / 2);
        const auto pairs = pigeonhole_pairs(box);
        std::vector<std::pair<std::int64_t, std::int64_t>> pp;
        std::vector<std::pair<PhiloxKey, PhiloxKey>> pk;
        for (const auto& [a, b] : pairs) {
            pp.emplace_back(starts[a], starts[b]);
            pk.emplace_back(keys[a], keys[b]);
        }
        const auto out = paired_partial_system(model, pp, pk, horizon);
        Row r;
        for (const auto& o : out) r.met += o.collided ? 1 : 0;
        r.pairs = pairs.size();
        r.full = evo.log.count_at(horizon);
        r.partial = starts.size() - r.met;
        return r;
    });
    std::uint64_t violations = 0, met = 0, pairs = 0;
    for (const auto& r : rows) {
        violations += r.partial >= r.full ? 0 : 1;
        met += r.met;
        pairs += r.pairs;
    }
    return {{"replicates", m.replicates}, {"violations", violations}, {"pairs", pairs}, {"met", met}};
}

ExperimentResult partial_analyze(const ExperimentManifest&, const json& raw) {
    ExperimentResult r;
    r.summary = raw;
    const auto pairs = raw.at("pairs").get<std::uint64_t>();
    const auto met = raw.at("met").get<std::uint64_t>();
    const auto ci = clopper_pearson(met, pairs);
    r.summary["pair_meeting_prob"] = static_cast<double>(met) / static_cast<double>(pairs);
    r.summary["ci"] = {ci.lo, ci.hi};
    r.summary["pass"] = raw.at("violations").get<std::uint64_t>() == 0;
    return r;
}

} // namespace

const std::vector<ExperimentDef>& experiment_registry() {
    static const std::vector<ExperimentDef> registry{
        {"exchangeability-oracle", "exact ranking invariance of the coalescing law on G_1", {1}, exchangeability_manifest,
         exchangeability_simulate, exchangeability_analyze},
        {"folding-oracle", "exact folding of the window walk onto the finite gasket", {2}, folding_manifest, folding_simulate,
         folding_analyze},
        {"gasket-scaling-collapse", "pair collision probability across triangle levels", {3}, collapse_manifest,
         collapse_simulate, collapse_analyze},
        {"circle-tau-scaling", "first coalescence time vs particle count on the circle", {4}, tau_manifest, tau_simulate,
         tau_analyze},
        {"circle-exceedance", "exceedance probabilities of the class count on the circle", {5}, exceed_manifest,
         exceed_simulate, exceed_analyze},
        {"gasket-coalescence", "class count decay and Hausdorff continuity on the gasket", {6, 7}, gasket_manifest,
         gasket_simulate, gasket_analyze},
        {"gasket-sup-tail", "sup-displacement tail of the gasket walk", {8}, suptail_manifest, suptail_simulate,
         suptail_analyze},
        {"stable-sup-tail", "sup tail of the continuum stable process", {9}, stable_manifest, stable_simulate,
         stable_analyze},
        {"gamma-integral", "closed form vs quadrature", {10}, integral_manifest, integral_simulate, integral_analyze},
        {"pigeonhole", "disjoint same-box pairs on random assignments", {11}, pigeon_manifest, pigeon_simulate,
         pigeon_analyze},
        {"engine-equivalence", "online engine vs offline collision rule", {12}, equivalence_manifest, equivalence_simulate,
         equivalence_analyze},
        {"partial-system-coupling", "paired partial system keeps at least as many particles", {}, partial_manifest,
         partial_simulate, partial_analyze},
    };
    return registry;
}

} // namespace coalesce
