#include <filesystem>
#include <fstream>
#include <set>

#include "coalesce/errors.hpp"
#include "coalesce/harness.hpp"
#include "doctest.h"

using namespace coalesce;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / ("coalesce_test_" + name);
    fs::remove_all(p);
    return p;
}

ExperimentManifest circle_manifest(std::int64_t L) {
    return ExperimentManifest::from_json(
        {{"experiment", "x"}, {"model", "lattice-circle"}, {"resolution", {{"circumference", L}}}, {"params", {{"law", {{"alpha", 1.5}, {"hold", 0.5}}}}}});
}

ExperimentManifest gasket_manifest(int level) {
    return ExperimentManifest::from_json({{"experiment", "x"}, {"model", "gasket-finite"}, {"resolution", {{"level", level}}}});
}

std::string field_of(const std::function<void()>& fn) {
    try {
        fn();
    } catch (const ValidationError& e) {
        return e.field();
    }
    return "";
}

} // namespace

TEST_CASE("initial sets") {
    const auto circle = build_model(circle_manifest(8));
    CHECK(initial_set({{"kind", "equally-spaced"}, {"n", 4}}, circle, 0) == std::vector<std::int64_t>{0, 2, 4, 6});

    const auto g1 = build_model(gasket_manifest(1));
    CHECK(initial_set({{"kind", "all-vertices"}, {"level", 1}}, g1, 0).size() == 6);
    const auto g4 = build_model(gasket_manifest(4));
    const auto v1 = initial_set({{"kind", "all-vertices"}, {"level", 1}}, g4, 0);
    CHECK(v1.size() == 6);
    const auto& graph = *std::get<GasketWalkModel>(g4).graph;
    std::set<VertexAddress> addrs;
    for (auto v : v1) addrs.insert(graph.address(static_cast<std::uint32_t>(v)));
    CHECK(addrs.count({4, 8, 0}) == 1);
    CHECK(addrs.count({4, 8, 8}) == 1);

    const auto u = initial_set({{"kind", "uniform"}, {"n", 30}}, g4, 17);
    CHECK(u.size() == 30);
    CHECK(std::set<std::int64_t>(u.begin(), u.end()).size() == 30);
    CHECK(u == initial_set({{"kind", "uniform"}, {"n", 30}}, g4, 17));
    CHECK(u != initial_set({{"kind", "uniform"}, {"n", 30}}, g4, 18));

    CHECK(field_of([&] { initial_set({{"kind", "uniform"}, {"n", 200}}, g4, 0); }) == "initial_set.n");
    CHECK(field_of([&] { initial_set({{"kind", "equally-spaced"}, {"n", 9}}, circle, 0); }) == "initial_set.n");
    CHECK(field_of([&] { initial_set({{"kind", "spiral"}}, circle, 0); }) == "initial_set.kind");
    CHECK(field_of([&] { initial_set({{"kind", "explicit"}, {"points", {{1, 1}}}}, g1, 0); }).empty());
    CHECK(field_of([&] { initial_set({{"kind", "explicit"}, {"points", {{3, 3}}}}, g1, 0); }) == "initial_set.points");
}

TEST_CASE("nested sizes follow the rounding rule") {
    CHECK(nested_sizes(1.2, 3) == std::vector<std::size_t>{2, 3, 4});
    CHECK(nested_sizes(2.0, 4) == std::vector<std::size_t>{2, 4, 8, 16});
    CHECK(nested_sizes(1.5, 5) == std::vector<std::size_t>{2, 3, 4, 6, 8});
    const auto g = build_model(gasket_manifest(4));
    const auto sets = initial_sets({{"kind", "nested"}, {"gamma", 1.5}, {"levels", 5}}, g, 3);
    REQUIRE(sets.size() == 5);
    for (std::size_t m = 1; m < sets.size(); ++m) {
        CHECK(sets[m].size() > sets[m - 1].size());
        CHECK(std::equal(sets[m - 1].begin(), sets[m - 1].end(), sets[m].begin()));
    }
}

TEST_CASE("manifest validation names the field") {
    CHECK(field_of([] { ExperimentManifest::from_json({{"experiment", "x"}, {"colour", 1}}); }) == "colour");
    CHECK(field_of([] { ExperimentManifest::from_json({{"experiment", "x"}, {"model", "torus"}}); }) == "model");
    CHECK(field_of([] { ExperimentManifest::from_json({{"experiment", "x"}, {"replicates", 0}}); }) == "replicates");
    CHECK(field_of([] { ExperimentManifest::from_json({{"model", "none"}}); }) == "experiment");
    CHECK(field_of([] { build_model(ExperimentManifest::from_json({{"experiment", "x"}, {"model", "gasket-window"}, {"resolution", {{"level", 2}}}})); })
              .rfind("resolution", 0) == 0);
    auto m = find_experiment("circle-tau-scaling").default_manifest();
    m["params"]["eta"] = 0.7;
    CHECK(field_of([&] { run_experiment(ExperimentManifest::from_json(m), {}); }) == "params.eta");
    CHECK(field_of([] { find_experiment("nope"); }) == "experiment");
}

TEST_CASE("manifest hashing") {
    const auto a = ExperimentManifest::from_json(find_experiment("pigeonhole").default_manifest());
    const auto b = ExperimentManifest::from_json(json::parse(a.canonical()));
    CHECK(a.hash() == b.hash());
    CHECK(a.hash().size() == 64);
    auto c = a;
    c.seed += 1;
    CHECK(c.hash() != a.hash());
}

TEST_CASE("embedded manifest hashes") {
    for (const std::string name : {"a.csv", "b.json", "c.jsonl"}) {
        const std::string body = name == "b.json" ? "{\"x\":1}" : "line\n";
        const auto with = embed_manifest_hash(name, body, "abc123");
        CHECK(embedded_manifest_hash(name, with) == "abc123");
        CHECK(embedded_manifest_hash(name, body).empty());
    }
}

TEST_CASE("parallel map") {
    const auto v = parallel_map<int>(100, 4, [](std::size_t i) { return static_cast<int>(i * i); });
    for (std::size_t i = 0; i < 100; ++i) CHECK(v[i] == static_cast<int>(i * i));
    CHECK_THROWS_AS(parallel_map<int>(10, 3, [](std::size_t i) -> int { if (i == 7) throw DomainError("x"); return 0; }), DomainError);
}

TEST_CASE("runs are reproducible byte for byte") {
    const auto m = ExperimentManifest::from_json(find_experiment("engine-equivalence").default_manifest());
    const auto d1 = scratch("repro1"), d2 = scratch("repro2");
    const auto h1 = write_bundle(run_experiment(m, {1, 0}), d1, 1.0, 1);
    const auto h2 = write_bundle(run_experiment(m, {3, 0}), d2, 2.0, 3);
    CHECK(h1 == h2);
    for (const auto& e : fs::directory_iterator(d1)) {
        if (e.path().filename() == "run_info.json") continue;
        std::ifstream a(e.path()), b(d2 / e.path().filename());
        CHECK(std::string(std::istreambuf_iterator<char>(a), {}) == std::string(std::istreambuf_iterator<char>(b), {}));
    }
    // Worker count does not change reductions.
    auto gm = find_experiment("gasket-coalescence").default_manifest();
    gm["replicates"] = 8;
    gm["horizon"]["ticks"] = 256;
    gm["analysis"]["fit_ticks"] = {4, 256};
    gm["analysis"]["continuity_max_tick"] = 64;
    const auto g = ExperimentManifest::from_json(gm);
    CHECK(run_experiment(g, {1, 0}).raw == run_experiment(g, {4, 0}).raw);
    fs::remove_all(d1);
    fs::remove_all(d2);
}

TEST_CASE("bundles reload and orphans are rejected") {
    const auto root = scratch("report");
    const auto m = ExperimentManifest::from_json(find_experiment("pigeonhole").default_manifest());
    const auto b = run_experiment(m, {});
    write_bundle(b, root / "pigeonhole", 0.1, 1);
    const auto back = load_bundle(root / "pigeonhole");
    CHECK(back.manifest.hash() == m.hash());
    CHECK(analyze_raw(back.manifest, back.raw).result.summary == b.result.summary);

    auto rep = assemble_report(root);
    CHECK(rep.orphans.empty());
    CHECK_FALSE(rep.all_pass); // eleven criteria missing

    { std::ofstream(root / "pigeonhole" / "stray.csv") << "t,x\n1,2\n"; }
    rep = assemble_report(root);
    REQUIRE(rep.orphans.size() == 1);
    CHECK(rep.orphans[0].find("stray.csv") != std::string::npos);
    fs::remove(root / "pigeonhole" / "stray.csv");

    { std::ofstream(root / "pigeonhole" / "summary.json", std::ios::app) << " "; }
    rep = assemble_report(root);
    CHECK(rep.orphans.size() == 1);
    CHECK_THROWS_AS(load_bundle(root / "pigeonhole"), ContractError);
    fs::remove_all(root);
}

TEST_CASE("named experiments") {
    const auto ex = run_experiment(ExperimentManifest::from_json(find_experiment("exchangeability-oracle").default_manifest()), {});
    CHECK(ex.raw.at("report").at("tv_max") == "0");
    REQUIRE(ex.result.criteria.size() == 1);
    CHECK(ex.result.criteria[0].pass);

    auto tm = find_experiment("circle-tau-scaling").default_manifest();
    tm["replicates"] = 10;
    tm["resolution"]["circumference"] = 4096;
    const auto tau = run_experiment(ExperimentManifest::from_json(tm), {});
    bool has_csv = false;
    for (const auto& f : tau.result.files) {
        if (f.name == "tau.csv") {
            has_csv = true;
            CHECK(f.content.rfind("n,mean_tau,", 0) == 0);
        }
    }
    CHECK(has_csv);
    CHECK(tau.result.summary.at("fit").contains("slope"));

    std::set<int> ids;
    for (const auto& e : experiment_registry()) ids.insert(e.criteria.begin(), e.criteria.end());
    CHECK(ids.size() == 12);
}
