// coalesce_cli: run named experiments from JSON manifests.

#include <chrono>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <set>
#include <sstream>

#include "CLI11.hpp"
#include "coalesce/errors.hpp"
#include "coalesce/harness.hpp"
#include "coalesce/kernels.hpp"
#include "json.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace coalesce;

namespace {

struct Options {
    std::optional<std::uint64_t> seed;
    unsigned workers = 1;
    std::string out_dir;
    std::uint64_t budget = 0;
};

fs::path output_root(const Options& o) {
    if (!o.out_dir.empty()) return o.out_dir;
    if (const char* env = std::getenv("COALESCE_OUT_DIR"); env != nullptr && *env != '\0') return env;
    return "out";
}

ExperimentManifest read_manifest(const std::string& path, const Options& o) {
    std::ifstream in(path);
    if (!in) throw ValidationError("manifest", "cannot open " + path);
    json j;
    try {
        j = json::parse(in);
    } catch (const json::parse_error& e) {
        throw ValidationError("manifest", e.what());
    }
    // A manifest may name only the experiment; missing fields come from its default.
    if (j.is_object() && j.contains("experiment") && j["experiment"].is_string()) {
        json base = find_experiment(j["experiment"].get<std::string>()).default_manifest();
        base.merge_patch(j);
        j = base;
    }
    auto m = ExperimentManifest::from_json(j);
    if (o.seed) m.seed = *o.seed;
    return m;
}

int run_and_write(const ExperimentManifest& m, const Options& o) {
    const RunContext ctx{o.workers, o.budget};
    const auto t0 = std::chrono::steady_clock::now();
    const Bundle b = run_experiment(m, ctx);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const fs::path dir = output_root(o) / m.experiment;
    const std::string hash = write_bundle(b, dir, secs, o.workers);
    bool pass = true;
    for (const auto& c : b.result.criteria) {
        std::cout << "criterion " << c.id << " [" << (c.pass ? "PASS" : "FAIL") << "] " << c.name << ": " << c.detail << "\n";
        pass = pass && c.pass;
    }
    std::cout << "bundle " << dir.string() << " content_hash=" << hash << " seconds=" << secs << "\n";
    return pass ? 0 : 1;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Coalescing random walk experiments"};
    app.require_subcommand(1);
    Options opt;
    std::uint64_t seed = 0;
    app.add_option("--seed", seed, "override the manifest master seed");
    app.add_option("--workers", opt.workers, "worker threads")->check(CLI::Range(1u, 1024u));
    app.add_option("--out-dir", opt.out_dir, "output directory (default $COALESCE_OUT_DIR or ./out)");
    app.add_option("--budget", opt.budget, "exact-oracle state budget (0: default)");

    std::string manifest_path, bundle_path;
    auto* sim = app.add_subcommand("simulate", "run a named experiment");
    sim->add_option("manifest", manifest_path, "manifest JSON")->required();
    auto* orc = app.add_subcommand("oracle", "run an exact-oracle experiment");
    orc->add_option("manifest", manifest_path, "manifest JSON")->required();
    auto* ana = app.add_subcommand("analyze", "re-run the analysis of a bundle");
    ana->add_option("bundle", bundle_path, "bundle directory")->required();
    auto* ver = app.add_subcommand("verify", "run the acceptance suite and write report.json");
    auto* lst = app.add_subcommand("list-experiments", "list named experiments");
    auto* man = app.add_subcommand("default-manifest", "print the default manifest of an experiment");
    std::string name;
    man->add_option("name", name)->required();

    CLI11_PARSE(app, argc, argv);
    if (app.count("--seed") > 0) opt.seed = seed;

    try {
        if (*lst) {
            for (const auto& e : experiment_registry()) {
                std::cout << e.name;
                for (int c : e.criteria) std::cout << (c == e.criteria.front() ? "  [criteria " : ",") << c;
                std::cout << (e.criteria.empty() ? "" : "]") << "  " << e.description << "\n";
            }
            std::cout << "kernel: " << kernels::isa_name(kernels::active().isa) << "\n";
            return 0;
        }
        if (*man) {
            std::cout << find_experiment(name).default_manifest().dump(2) << "\n";
            return 0;
        }
        if (*sim) return run_and_write(read_manifest(manifest_path, opt), opt);
        if (*orc) {
            const auto m = read_manifest(manifest_path, opt);
            static const std::set<std::string> oracles{"exchangeability-oracle", "folding-oracle"};
            if (!oracles.count(m.experiment)) throw ValidationError("experiment", "not an oracle experiment: " + m.experiment);
            return run_and_write(m, opt);
        }
        if (*ana) {
            Bundle b = load_bundle(bundle_path);
            b = analyze_raw(b.manifest, b.raw);
            const std::string hash = write_bundle(b, bundle_path, 0.0, opt.workers);
            bool pass = true;
            for (const auto& c : b.result.criteria) {
                std::cout << "criterion " << c.id << " [" << (c.pass ? "PASS" : "FAIL") << "] " << c.name << ": " << c.detail
                          << "\n";
                pass = pass && c.pass;
            }
            std::cout << "bundle " << bundle_path << " content_hash=" << hash << "\n";
            return pass ? 0 : 1;
        }
        if (*ver) {
            const RunContext ctx{opt.workers, opt.budget};
            const auto run = run_acceptance(ctx, output_root(opt), opt.seed, [](const CriterionOutcome& c) {
                std::cout << "criterion " << c.id << " [" << (c.pass ? "PASS" : "FAIL") << "] " << c.name << ": " << c.detail
                          << std::endl;
            });
            std::cout << "report " << (output_root(opt) / "report.json").string() << " all_pass=" << (run.all_pass ? "true" : "false")
                      << "\n";
            return run.all_pass ? 0 : 1;
        }
    } catch (const ValidationError& e) {
        std::cerr << "invalid manifest: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    }
    return 0;
}
