#pragma once

// Experiment orchestration: manifests, initial sets, worker pools and
// self-describing output bundles.

#include <atomic>
#include <cstdint>
#include <exception>
#include <filesystem>
#include <functional>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "coalesce/errors.hpp"
#include "coalesce/samplers.hpp"
#include "json.hpp"

namespace coalesce {

struct ExperimentManifest {
    std::string experiment;
    std::string model; // gasket-finite | gasket-window | lattice-line | lattice-circle | continuum-stable | none
    nlohmann::json resolution = nlohmann::json::object();
    nlohmann::json initial_set = nlohmann::json::object();
    nlohmann::json horizon = nlohmann::json::object();
    std::uint64_t replicates = 1;
    std::uint64_t seed = 0;
    nlohmann::json analysis = nlohmann::json::object();
    nlohmann::json params = nlohmann::json::object();

    // ValidationError naming the field on malformed input.
    static ExperimentManifest from_json(const nlohmann::json& j);
    nlohmann::json to_json() const;
    std::string canonical() const; // compact dump with sorted keys
    std::string hash() const;      // SHA-256 of canonical()
};

namespace detail {
const nlohmann::json* manifest_lookup(const nlohmann::json& root, const std::string& path);
}

// Typed manifest lookups: `path` is dotted ("params.beta"); errors name the path.
template <class T>
T manifest_get(const nlohmann::json& root, const std::string& path) {
    const nlohmann::json* node = detail::manifest_lookup(root, path);
    if (node == nullptr) throw ValidationError(path, "missing");
    try {
        return node->get<T>();
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(path, std::string("wrong type: ") + e.what());
    }
}

template <class T>
T manifest_get(const nlohmann::json& root, const std::string& path, const T& fallback) {
    if (detail::manifest_lookup(root, path) == nullptr) return fallback;
    return manifest_get<T>(root, path);
}

// Model described by the manifest's `model`, `resolution` and `params.law` fields.
WalkModel build_model(const ExperimentManifest& m);

// Sizes max(ceil(gamma^m), previous + 1) for m = 1..levels, capped by nothing.
std::vector<std::size_t> nested_sizes(double gamma, std::size_t levels);

// Point sets described by a spec object; a single set except for `nested`.
//   {"kind": "all-vertices", "level": k}
//   {"kind": "uniform", "n": n}                  (seeded from `seed`)
//   {"kind": "equally-spaced", "n": n}
//   {"kind": "nested", "gamma": g, "levels": M}  (seeded from `seed`)
//   {"kind": "explicit", "points": [...]}
std::vector<std::vector<std::int64_t>> initial_sets(const nlohmann::json& spec, const WalkModel& model, std::uint64_t seed);
std::vector<std::int64_t> initial_set(const nlohmann::json& spec, const WalkModel& model, std::uint64_t seed);

// Runs fn(i) for i in [0, count) on `workers` threads; results are stored by index.
template <class T, class Fn>
std::vector<T> parallel_map(std::size_t count, unsigned workers, Fn fn) {
    std::vector<T> out(count);
    if (workers <= 1 || count <= 1) {
        for (std::size_t i = 0; i < count; ++i) out[i] = fn(i);
        return out;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr error;
    std::mutex error_mutex;
    auto worker = [&] {
        for (std::size_t i = next++; i < count; i = next++) {
            try {
                out[i] = fn(i);
            } catch (...) {
                std::lock_guard lock(error_mutex);
                if (!error) error = std::current_exception();
                next = count;
            }
        }
    };
    std::vector<std::thread> pool;
    const unsigned n = std::min<unsigned>(workers, static_cast<unsigned>(count));
    for (unsigned w = 0; w < n; ++w) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
    if (error) std::rethrow_exception(error);
    return out;
}

struct OutputFile {
    std::string name;    // relative path inside the bundle
    std::string content; // without the manifest hash; the writer embeds it
};

struct CriterionOutcome {
    int id = 0;
    std::string name;
    bool pass = false;
    std::string detail;
    nlohmann::json to_json() const;
};

struct ExperimentResult {
    nlohmann::json summary = nlohmann::json::object();
    std::vector<CriterionOutcome> criteria;
    std::vector<OutputFile> files;
};

struct RunContext {
    unsigned workers = 1;
    std::uint64_t budget = 0; // 0: experiment default
};

struct ExperimentDef {
    std::string name;
    std::string description;
    std::vector<int> criteria;
    std::function<nlohmann::json()> default_manifest;
    // Simulation phase: sufficient statistics for the analysis phase.
    std::function<nlohmann::json(const ExperimentManifest&, const RunContext&)> simulate;
    std::function<ExperimentResult(const ExperimentManifest&, const nlohmann::json& raw)> analyze;
};

const std::vector<ExperimentDef>& experiment_registry();
const ExperimentDef& find_experiment(const std::string& name); // ValidationError("experiment", ...)

struct Bundle {
    ExperimentManifest manifest;
    nlohmann::json raw;
    ExperimentResult result;
};

Bundle run_experiment(const ExperimentManifest& manifest, const RunContext& ctx);
Bundle analyze_raw(const ExperimentManifest& manifest, nlohmann::json raw);

// Adds the manifest hash to one output (CSV comment line, JSON field, or JSONL header line).
std::string embed_manifest_hash(const std::string& name, const std::string& content, const std::string& hash);
// Reads the embedded hash back; empty when none is present.
std::string embedded_manifest_hash(const std::string& name, const std::string& content);

// Writes manifest.json, raw.json, summary.json, result files and index.json
// (content hashes) into `dir`; timestamps go to run_info.json only.
// Returns the bundle content hash.
std::string write_bundle(const Bundle& bundle, const std::filesystem::path& dir, double wall_seconds, unsigned workers);
// Loads manifest.json and raw.json from a bundle directory after checking its index.
Bundle load_bundle(const std::filesystem::path& dir);

struct ReportAssembly {
    nlohmann::json report;
    std::vector<std::string> orphans; // files that are unindexed or carry a foreign manifest hash
    bool all_pass = false;
};

// Collects criteria from every bundle directory under `root`.
ReportAssembly assemble_report(const std::filesystem::path& root);

// Runs every experiment at its default manifest (optionally reseeded) and
// writes bundles plus report.json under `out_dir` when it is non-empty.
struct AcceptanceRun {
    std::vector<CriterionOutcome> criteria;
    nlohmann::json report;
    bool all_pass = false;
};
AcceptanceRun run_acceptance(const RunContext& ctx, const std::filesystem::path& out_dir, std::optional<std::uint64_t> seed,
                             const std::function<void(const CriterionOutcome&)>& on_result = {});

} // namespace coalesce
