#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include <hopforge/graph_expander.hpp>
#include <hopforge/model_gateway.hpp>
#include <hopforge/quality_gate.hpp>
#include <hopforge/question_forge.hpp>

namespace hopforge {

/// Every tunable of a run. Relative paths resolve against `base_dir`.
struct PipelineConfig {
    std::filesystem::path base_dir = ".";
    std::string corpus_path;
    std::string store_path = ":memory:";
    std::vector<std::string> seeds;
    ExpansionStrategy strategy{{4, 2, 2}};
    ScoreWeights weights;
    double nli_threshold = 0.45;
    double ner_threshold = 0.5;
    bool coreference = false;
    ExpanderConfig expander;
    ForgeConfig forge;
    GateConfig gate;
    EndpointConfig endpoint;
    std::string mock_script;  // scripted transport instead of HTTP when set
    std::uint64_t rng_seed = 0;
    std::string run_id = "default";
    std::string runs_dir = "runs";
    int parallelism = 0;  // 0 = hardware concurrency

    /// Throws Error(Config) for unknown keys, wrong types or out-of-range
    /// values. Endpoint and API key may be overridden by the environment
    /// (HOPFORGE_BASE_URL, and the variable named by api_key_env).
    static PipelineConfig from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = ".");
    static PipelineConfig from_file(const std::filesystem::path& path);

    void validate() const;
    [[nodiscard]] nlohmann::json to_json() const;

    [[nodiscard]] std::filesystem::path resolve(const std::string& path) const;
    [[nodiscard]] std::filesystem::path run_dir() const;
};

enum class StageStatus { Pending, Completed, Failed, Skipped };
std::string_view to_string(StageStatus s) noexcept;

inline const std::vector<std::string> kSeedStages = {"nodes", "expand", "forge", "gate"};

struct SeedRecord {
    std::string seed;
    std::string slug;
    std::map<std::string, StageStatus> stages;
    std::string error;  // failing stage's message
    std::string outcome;  // decision, "rejected_at_forge", or "failed"
    std::string question;
};

struct RunManifest {
    std::string run_id;
    nlohmann::json config;
    IngestReport ingest;
    std::vector<SeedRecord> seeds;
    std::vector<std::string> artifacts;  // relative to the run directory, sorted

    [[nodiscard]] int accepted() const;
    [[nodiscard]] int failed() const;
    /// 0 when the run finished, 3 when every seed failed.
    [[nodiscard]] int exit_code() const;
};

nlohmann::json to_json(const RunManifest& m);
RunManifest manifest_from_json(const nlohmann::json& j);

/// Scripted transport when `mock_script` is set, HTTP otherwise.
std::shared_ptr<ModelGateway> make_gateway(const PipelineConfig& config);

/// Ingest -> nodes -> expand -> forge -> gate for every seed. A failing seed
/// is recorded and skipped; stages already completed by an earlier run with
/// the same run_id are loaded from disk.
RunManifest run_pipeline(const PipelineConfig& config);

/// Ingests the corpus into the configured store.
IngestReport ingest_corpus(const PipelineConfig& config);

struct EvaluationRecord {
    std::size_t line = 0;
    std::optional<QualityReport> report;
    std::string error;
};

/// Quality gate alone over line-delimited {"question", "answer",
/// "candidates"?} records; malformed lines become per-record errors.
std::vector<EvaluationRecord> evaluate_only(const std::filesystem::path& questions_file, const PipelineConfig& config);

enum class ExportKind { Graph, Dataset };
ExportKind parse_export_kind(std::string_view s);

/// Writes export files under runs/{run_id}/export and returns their paths.
/// Throws Error(NotFound) when the run has no manifest.
std::vector<std::filesystem::path> export_run(const PipelineConfig& config, ExportKind what, std::string_view format);

/// Deterministic JSON file writing: two-space indent, trailing newline.
void write_json(const std::filesystem::path& path, const nlohmann::json& value);
nlohmann::json read_json(const std::filesystem::path& path);

}  // namespace hopforge
