#include <hopforge/pipeline.hpp>

#include <hopforge/error.hpp>
#include <hopforge/json_schema.hpp>
#include <hopforge/node_builder.hpp>
#include <hopforge/relation_engine.hpp>
#include <hopforge/text.hpp>

#include <spdlog/spdlog.h>

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <fstream>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

namespace hopforge {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const json& config_schema() {
    static const json schema = json::parse(R"({
      "type": "object",
      "additionalProperties": false,
      "properties": {
        "corpus_path": {"type": "string"},
        "store_path": {"type": "string", "minLength": 1},
        "seeds": {"type": "array", "items": {"type": "string", "minLength": 1}},
        "strategy": {"type": "array", "items": {"type": "integer"}},
        "weights": {
          "type": "object", "additionalProperties": false,
          "properties": {
            "confidence": {"type": "number", "minimum": 0},
            "relation_diversity": {"type": "number", "minimum": 0},
            "semantic_diversity": {"type": "number", "minimum": 0},
            "paragraph_diversity": {"type": "number", "minimum": 0}
          }
        },
        "thresholds": {
          "type": "object", "additionalProperties": false,
          "properties": {
            "nli_threshold": {"type": "number", "minimum": 0, "maximum": 1},
            "ner_threshold": {"type": "number", "minimum": 0, "maximum": 1},
            "alpha": {"type": "integer", "minimum": 0},
            "beta": {"type": "integer", "minimum": 0},
            "gamma": {"type": "integer", "minimum": 0}
          }
        },
        "question": {
          "type": "object", "additionalProperties": false,
          "properties": {
            "n_deep": {"type": "integer", "minimum": 0},
            "max_words": {"type": "integer", "minimum": 1},
            "probe_runs": {"type": "integer", "minimum": 3},
            "max_rounds": {"type": "integer", "minimum": 0},
            "retry_limit": {"type": "integer", "minimum": 0},
            "rewrite_retries": {"type": "integer", "minimum": 0},
            "anchors": {"type": "object"}
          }
        },
        "gate": {
          "type": "object", "additionalProperties": false,
          "properties": {
            "vote_runs": {"type": "integer", "minimum": 3},
            "retry_limit": {"type": "integer", "minimum": 0},
            "high_priority_cutoff": {"type": "number"},
            "max_passages": {"type": "integer", "minimum": 0},
            "normalization": {"type": "object"}
          }
        },
        "expander": {
          "type": "object", "additionalProperties": false,
          "properties": {
            "pool_multiplier": {"type": "integer", "minimum": 1},
            "embedding_similarity": {"type": "boolean"}
          }
        },
        "coreference": {"type": "boolean"},
        "gateway": {
          "type": "object", "additionalProperties": false,
          "properties": {
            "base_url": {"type": "string"},
            "timeout_ms": {"type": "integer"},
            "max_retries": {"type": "integer"},
            "backoff_ms": {"type": "integer"},
            "max_in_flight": {"type": "integer"},
            "api_key_env": {"type": ["string", "null"]}
          }
        },
        "mock_script": {"type": "string"},
        "rng_seed": {"type": "integer", "minimum": 0},
        "run_id": {"type": "string", "minLength": 1},
        "runs_dir": {"type": "string", "minLength": 1},
        "parallelism": {"type": "integer", "minimum": 0}
      }
    })");
    return schema;
}

std::string read_text(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorCode::Io, "cannot read " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_text(const fs::path& path, const std::string& body) {
    fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) fail(ErrorCode::Io, "cannot write " + path.string());
    out << body;
    if (!out) fail(ErrorCode::Io, "write failed for " + path.string());
}

json to_json(const IngestReport& r) {
    auto issues = [](const std::vector<IngestIssue>& v) {
        json out = json::array();
        for (const auto& i : v) out.push_back({{"line", i.line}, {"message", i.message}});
        return out;
    };
    return {{"pages", r.count}, {"errors", issues(r.errors)}, {"duplicates", issues(r.duplicates)}};
}

IngestReport ingest_from_json(const json& j) {
    IngestReport r;
    r.count = j.at("pages").get<std::size_t>();
    for (const auto& i : j.at("errors")) r.errors.push_back({i.at("line").get<std::size_t>(), i.at("message").get<std::string>()});
    for (const auto& i : j.at("duplicates")) r.duplicates.push_back({i.at("line").get<std::size_t>(), i.at("message").get<std::string>()});
    return r;
}

StageStatus parse_stage_status(std::string_view s) {
    if (s == "pending") return StageStatus::Pending;
    if (s == "completed") return StageStatus::Completed;
    if (s == "failed") return StageStatus::Failed;
    if (s == "skipped") return StageStatus::Skipped;
    fail(ErrorCode::InvalidInput, "unknown stage status '" + std::string(s) + "'");
}

json candidate_set_json(std::string_view seed, const CandidateSet& set) {
    json accepted = json::array();
    for (const auto& c : set.accepted) accepted.push_back(to_json(c));
    json rejected = json::array();
    for (const auto& r : set.rejected) {
        rejected.push_back({{"anchor_text", r.anchor_text}, {"target", r.target}, {"reason", r.reason}});
    }
    return {{"seed", seed}, {"accepted", accepted}, {"rejected", rejected}};
}

}  // namespace

// ---- config ----------------------------------------------------------------

PipelineConfig PipelineConfig::from_json(const json& j, const fs::path& base_dir) {
    if (auto violation = schema_violation(j, config_schema())) fail(ErrorCode::Config, "config: " + *violation);
    PipelineConfig c;
    c.base_dir = base_dir;
    c.corpus_path = j.value("corpus_path", c.corpus_path);
    c.store_path = j.value("store_path", c.store_path);
    c.seeds = j.value("seeds", c.seeds);
    if (j.contains("strategy")) c.strategy.branching = j["strategy"].get<std::vector<int>>();
    if (auto w = j.find("weights"); w != j.end()) {
        c.weights.conf = w->value("confidence", c.weights.conf);
        c.weights.rel = w->value("relation_diversity", c.weights.rel);
        c.weights.sem = w->value("semantic_diversity", c.weights.sem);
        c.weights.par = w->value("paragraph_diversity", c.weights.par);
    }
    if (auto t = j.find("thresholds"); t != j.end()) {
        c.nli_threshold = t->value("nli_threshold", c.nli_threshold);
        c.ner_threshold = t->value("ner_threshold", c.ner_threshold);
        c.gate.thresholds.alpha = t->value("alpha", c.gate.thresholds.alpha);
        c.gate.thresholds.beta = t->value("beta", c.gate.thresholds.beta);
        c.gate.thresholds.gamma = t->value("gamma", c.gate.thresholds.gamma);
    }
    if (auto q = j.find("question"); q != j.end()) {
        c.forge.n_deep = q->value("n_deep", c.forge.n_deep);
        c.forge.max_words = q->value("max_words", c.forge.max_words);
        c.forge.probe_runs = q->value("probe_runs", c.forge.probe_runs);
        c.forge.max_rounds = q->value("max_rounds", c.forge.max_rounds);
        c.forge.retry_limit = q->value("retry_limit", c.forge.retry_limit);
        c.forge.rewrite_retries = q->value("rewrite_retries", c.forge.rewrite_retries);
        if (q->contains("anchors")) c.forge.anchors = AnchorTable::from_json((*q)["anchors"]);
    }
    if (auto g = j.find("gate"); g != j.end()) {
        c.gate.vote_runs = g->value("vote_runs", c.gate.vote_runs);
        c.gate.retry_limit = g->value("retry_limit", c.gate.retry_limit);
        c.gate.high_priority_cutoff = g->value("high_priority_cutoff", c.gate.high_priority_cutoff);
        c.gate.max_passages = g->value("max_passages", c.gate.max_passages);
        if (g->contains("normalization")) c.gate.normalization = NormalizationTable::from_json((*g)["normalization"]);
    }
    if (auto e = j.find("expander"); e != j.end()) {
        c.expander.pool_multiplier = e->value("pool_multiplier", c.expander.pool_multiplier);
        c.expander.embedding_similarity = e->value("embedding_similarity", c.expander.embedding_similarity);
    }
    c.coreference = j.value("coreference", c.coreference);
    if (j.contains("gateway")) c.endpoint = endpoint_config_from_json(j["gateway"]);
    if (const char* url = std::getenv("HOPFORGE_BASE_URL"); url != nullptr && *url != '\0') c.endpoint.base_url = url;
    c.mock_script = j.value("mock_script", c.mock_script);
    c.rng_seed = j.value("rng_seed", c.rng_seed);
    c.run_id = j.value("run_id", c.run_id);
    c.runs_dir = j.value("runs_dir", c.runs_dir);
    c.parallelism = j.value("parallelism", c.parallelism);
    c.validate();
    return c;
}

PipelineConfig PipelineConfig::from_file(const fs::path& path) {
    json j;
    try {
        j = json::parse(read_text(path));
    } catch (const json::parse_error& e) {
        fail(ErrorCode::Config, path.string() + ": " + e.what());
    } catch (const Error& e) {
        fail(ErrorCode::Config, e.what());
    }
    return from_json(j, path.parent_path().empty() ? fs::path(".") : path.parent_path());
}

void PipelineConfig::validate() const {
    auto config_error = [](const Error& e) { fail(ErrorCode::Config, e.what()); };
    try {
        strategy.validate();
        weights.validate();
        forge.validate();
        gate.validate();
    } catch (const Error& e) {
        config_error(e);
    }
    if (nli_threshold < 0.0 || nli_threshold > 1.0) fail(ErrorCode::Config, "nli_threshold must be in [0, 1]");
    if (ner_threshold < 0.0 || ner_threshold > 1.0) fail(ErrorCode::Config, "ner_threshold must be in [0, 1]");
    if (expander.pool_multiplier < 1) fail(ErrorCode::Config, "pool_multiplier must be >= 1");
    if (parallelism < 0) fail(ErrorCode::Config, "parallelism must be >= 0");
    if (run_id.empty() || run_id != text::slug(run_id)) {
        fail(ErrorCode::Config, "run_id '" + run_id + "' must be a plain directory name");
    }
}

json PipelineConfig::to_json() const {
    json anchors_phrases = json::object();
    for (const auto& [k, v] : forge.anchors.phrases) anchors_phrases[k] = v;
    auto parts = [](const std::map<std::string, std::pair<int, int>>& m) {
        json out = json::object();
        for (const auto& [k, v] : m) out[k] = {v.first, v.second};
        return out;
    };
    return {{"corpus_path", corpus_path},
            {"store_path", store_path},
            {"seeds", seeds},
            {"strategy", strategy.branching},
            {"weights",
             {{"confidence", weights.conf},
              {"relation_diversity", weights.rel},
              {"semantic_diversity", weights.sem},
              {"paragraph_diversity", weights.par}}},
            {"thresholds",
             {{"nli_threshold", nli_threshold},
              {"ner_threshold", ner_threshold},
              {"alpha", gate.thresholds.alpha},
              {"beta", gate.thresholds.beta},
              {"gamma", gate.thresholds.gamma}}},
            {"question",
             {{"n_deep", forge.n_deep},
              {"max_words", forge.max_words},
              {"probe_runs", forge.probe_runs},
              {"max_rounds", forge.max_rounds},
              {"retry_limit", forge.retry_limit},
              {"rewrite_retries", forge.rewrite_retries},
              {"anchors", {{"phrases", anchors_phrases}, {"type_descriptors", forge.anchors.type_descriptors}}}}},
            {"gate",
             {{"vote_runs", gate.vote_runs},
              {"retry_limit", gate.retry_limit},
              {"high_priority_cutoff", gate.high_priority_cutoff},
              {"max_passages", gate.max_passages},
              {"normalization",
               {{"decade_parts", parts(gate.normalization.decade_parts)},
                {"century_parts", parts(gate.normalization.century_parts)},
                {"region_words", gate.normalization.region_words},
                {"high_priority_fields", gate.normalization.high_priority_fields}}}}},
            {"expander",
             {{"pool_multiplier", expander.pool_multiplier}, {"embedding_similarity", expander.embedding_similarity}}},
            {"coreference", coreference},
            {"gateway", hopforge::to_json(endpoint)},
            {"mock_script", mock_script},
            {"rng_seed", rng_seed},
            {"run_id", run_id},
            {"runs_dir", runs_dir},
            {"parallelism", parallelism}};
}

fs::path PipelineConfig::resolve(const std::string& path) const {
    fs::path p(path);
    return p.is_absolute() ? p : base_dir / p;
}

fs::path PipelineConfig::run_dir() const { return resolve(runs_dir) / run_id; }

// ---- manifest --------------------------------------------------------------

std::string_view to_string(StageStatus s) noexcept {
    switch (s) {
        case StageStatus::Pending: return "pending";
        case StageStatus::Completed: return "completed";
        case StageStatus::Failed: return "failed";
        case StageStatus::Skipped: return "skipped";
    }
    return "pending";
}

int RunManifest::accepted() const {
    return static_cast<int>(std::count_if(seeds.begin(), seeds.end(), [](const SeedRecord& s) {
        return s.outcome.rfind("accepted_", 0) == 0;
    }));
}

int RunManifest::failed() const {
    return static_cast<int>(std::count_if(seeds.begin(), seeds.end(), [](const SeedRecord& s) { return s.outcome == "failed"; }));
}

int RunManifest::exit_code() const { return !seeds.empty() && failed() == static_cast<int>(seeds.size()) ? 3 : 0; }

json to_json(const RunManifest& m) {
    json seeds = json::array();
    for (const auto& s : m.seeds) {
        json stages = json::object();
        for (const auto& [k, v] : s.stages) stages[k] = to_string(v);
        json rec = {{"seed", s.seed}, {"slug", s.slug}, {"stages", stages}, {"outcome", s.outcome}};
        if (!s.error.empty()) rec["error"] = s.error;
        if (!s.question.empty()) rec["question"] = s.question;
        seeds.push_back(rec);
    }
    return {{"run_id", m.run_id},
            {"config", m.config},
            {"ingest", to_json(m.ingest)},
            {"seeds", seeds},
            {"counts", {{"accepted", m.accepted()}, {"failed", m.failed()}, {"seeds", m.seeds.size()}}},
            {"artifacts", m.artifacts}};
}

RunManifest manifest_from_json(const json& j) {
    RunManifest m;
    m.run_id = j.at("run_id").get<std::string>();
    m.config = j.at("config");
    m.ingest = ingest_from_json(j.at("ingest"));
    for (const auto& s : j.at("seeds")) {
        SeedRecord rec;
        rec.seed = s.at("seed").get<std::string>();
        rec.slug = s.at("slug").get<std::string>();
        for (const auto& [k, v] : s.at("stages").items()) rec.stages[k] = parse_stage_status(v.get<std::string>());
        rec.outcome = s.at("outcome").get<std::string>();
        rec.error = s.value("error", "");
        rec.question = s.value("question", "");
        m.seeds.push_back(std::move(rec));
    }
    m.artifacts = j.at("artifacts").get<std::vector<std::string>>();
    return m;
}

void write_json(const fs::path& path, const json& value) { write_text(path, value.dump(2) + "\n"); }

json read_json(const fs::path& path) {
    try {
        return json::parse(read_text(path));
    } catch (const json::parse_error& e) {
        fail(ErrorCode::InvalidInput, path.string() + ": " + e.what());
    }
}

// ---- gateway ---------------------------------------------------------------

std::shared_ptr<ModelGateway> make_gateway(const PipelineConfig& config) {
    std::shared_ptr<Transport> transport;
    if (!config.mock_script.empty()) {
        auto script = std::make_shared<const MockScript>(MockScript::from_file(config.resolve(config.mock_script).string()));
        transport = std::make_shared<ScriptedTransport>(std::move(script));
    } else {
        std::optional<std::string> key;
        if (config.endpoint.api_key_env) {
            if (const char* v = std::getenv(config.endpoint.api_key_env->c_str()); v != nullptr) key = std::string(v);
        }
        transport = std::make_shared<HttpTransport>(config.endpoint.base_url, key);
    }
    return std::make_shared<ModelGateway>(std::move(transport), config.endpoint);
}

// ---- run -------------------------------------------------------------------

namespace {

CorpusStore open_store(const PipelineConfig& config, IngestReport* report) {
    if (config.corpus_path.empty()) fail(ErrorCode::Config, "corpus_path is not set");
    const fs::path corpus = config.resolve(config.corpus_path);
    if (!fs::exists(corpus)) fail(ErrorCode::Config, "corpus file " + corpus.string() + " does not exist");
    std::string store_path = config.store_path;
    if (store_path != ":memory:") {
        const fs::path p = config.resolve(store_path);
        if (p.has_parent_path()) fs::create_directories(p.parent_path());
        store_path = p.string();
    }
    CorpusStore store(store_path);
    IngestReport r = store.ingest_file(corpus.string());
    for (const auto& e : r.errors) spdlog::warn("corpus line {}: {}", e.line, e.message);
    for (const auto& d : r.duplicates) spdlog::warn("corpus line {}: {}", d.line, d.message);
    if (report != nullptr) *report = std::move(r);
    return store;
}

struct SeedRun {
    SeedRecord record;
    std::vector<std::string> artifacts;
    std::optional<json> dataset_line;
};

class SeedWorker {
  public:
    SeedWorker(const PipelineConfig& config, const CorpusStore& store, ModelGateway& gateway, const fs::path& run_dir,
               const SeedRecord* prior)
        : config_(config), store_(store), gateway_(gateway), run_dir_(run_dir), prior_(prior) {}

    SeedRun run(const std::string& seed, const std::string& slug) {
        SeedRun out;
        SeedRecord& rec = out.record;
        rec.seed = seed;
        rec.slug = slug;
        for (const auto& s : kSeedStages) rec.stages[s] = StageStatus::Pending;
        std::string stage = "nodes";
        try {
            const auto title = store_.try_resolve(seed);
            if (!title) fail(ErrorCode::NotFound, "seed '" + seed + "' is not in the corpus");
            rec.stages["nodes"] = StageStatus::Completed;

            stage = "expand";
            const std::string graph_rel = "expand/" + slug + "/graph.json";
            const std::string cand_rel = "nodes/" + slug + "/candidates.json";
            const std::string trace_rel = "expand/" + slug + "/trace.json";
            EvidenceGraph graph;
            if (reusable("expand", {graph_rel, cand_rel, trace_rel})) {
                graph = graph_from_json(read_json(run_dir_ / graph_rel));
            } else {
                NodeBuilder nodes(store_, gateway_, {config_.ner_threshold, config_.coreference});
                RelationEngine relations(gateway_, {config_.nli_threshold});
                GraphExpander expander(store_, nodes, relations, config_.expander,
                                       config_.expander.embedding_similarity ? &gateway_ : nullptr);
                auto result = expander.expand(*title, config_.strategy, config_.weights, config_.rng_seed);
                json trace = json::array();
                for (const auto& t : result.trace) trace.push_back(to_json(t));
                write_json(run_dir_ / cand_rel, candidate_set_json(*title, result.seed_candidates));
                write_json(run_dir_ / trace_rel, trace);
                write_json(run_dir_ / graph_rel, to_json(result.graph));
                graph = std::move(result.graph);
            }
            out.artifacts.insert(out.artifacts.end(), {cand_rel, graph_rel, trace_rel});
            rec.stages["expand"] = StageStatus::Completed;

            stage = "forge";
            const std::string clues_rel = "forge/" + slug + "/clues.json";
            const std::string draft_rel = "forge/" + slug + "/draft.json";
            const std::string refine_rel = "forge/" + slug + "/refine.json";
            const std::string question_rel = "forge/" + slug + "/question.json";
            json question;
            if (reusable("forge", {clues_rel, draft_rel, refine_rel, question_rel})) {
                question = read_json(run_dir_ / question_rel);
            } else {
                QuestionForge forge(store_, gateway_, config_.forge);
                const ClueSet clues = forge.build_clues(graph);
                json clue_json = json::array();
                for (const auto& c : clues.clues) clue_json.push_back(to_json(c));
                json dropped = json::array();
                for (const auto& d : clues.dropped) dropped.push_back({{"node_id", d.node_id}, {"reason", d.reason}});
                write_json(run_dir_ / clues_rel, {{"clues", clue_json}, {"dropped", dropped}});

                const QuestionDraft composed = forge.compose_question(clues.clues, graph, config_.forge.n_deep);
                const QuestionDraft obfuscated = forge.obfuscate(composed, graph);
                write_json(run_dir_ / draft_rel, {{"composed", to_json(composed)}, {"obfuscated", to_json(obfuscated)}});
                const RefineOutcome refined = forge.refine_loop(obfuscated, graph, config_.forge.max_rounds);
                write_json(run_dir_ / refine_rel, to_json(refined));
                question = to_json(refined.draft);
                write_json(run_dir_ / question_rel, question);
            }
            out.artifacts.insert(out.artifacts.end(), {clues_rel, draft_rel, refine_rel, question_rel});
            rec.stages["forge"] = StageStatus::Completed;
            rec.question = question.at("text").get<std::string>();
            if (question.at("status").get<std::string>() == "rejected") {
                rec.outcome = "rejected_at_forge";
                rec.stages["gate"] = StageStatus::Skipped;
                return out;
            }

            stage = "gate";
            const std::string report_rel = "gate/" + slug + "/report.json";
            json report;
            if (reusable("gate", {report_rel})) {
                report = read_json(run_dir_ / report_rel);
            } else {
                QualityGate gate(store_, gateway_, config_.gate);
                report = to_json(gate.evaluate(rec.question, graph.seed().title));
                write_json(run_dir_ / report_rel, report);
            }
            out.artifacts.push_back(report_rel);
            rec.stages["gate"] = StageStatus::Completed;
            rec.outcome = report.at("decision").get<std::string>();
            if (rec.outcome.rfind("accepted_", 0) == 0) {
                out.dataset_line = json{{"question", rec.question},
                                        {"answer", graph.seed().title},
                                        {"graph_ref", graph_rel},
                                        {"report_ref", report_rel}};
            }
        } catch (const std::exception& e) {
            spdlog::error("seed '{}' failed at {}: {}", seed, stage, e.what());
            rec.stages[stage] = StageStatus::Failed;
            rec.error = stage + ": " + e.what();
            rec.outcome = "failed";
        }
        return out;
    }

  private:
    bool reusable(const std::string& stage, std::initializer_list<std::string> files) const {
        if (prior_ == nullptr) return false;
        auto it = prior_->stages.find(stage);
        if (it == prior_->stages.end() || it->second != StageStatus::Completed) return false;
        return std::all_of(files.begin(), files.end(), [&](const std::string& f) { return fs::exists(run_dir_ / f); });
    }

    const PipelineConfig& config_;
    const CorpusStore& store_;
    ModelGateway& gateway_;
    fs::path run_dir_;
    const SeedRecord* prior_;
};

}  // namespace

IngestReport ingest_corpus(const PipelineConfig& config) {
    IngestReport report;
    open_store(config, &report);
    return report;
}

RunManifest run_pipeline(const PipelineConfig& config) {
    config.validate();
    RunManifest manifest;
    manifest.run_id = config.run_id;
    manifest.config = config.to_json();
    CorpusStore store = open_store(config, &manifest.ingest);
    auto gateway = make_gateway(config);

    const fs::path run_dir = config.run_dir();
    fs::create_directories(run_dir);
    std::optional<RunManifest> prior;
    if (fs::exists(run_dir / "manifest.json")) {
        prior = manifest_from_json(read_json(run_dir / "manifest.json"));
        if (prior->config != manifest.config) {
            spdlog::warn("run '{}' exists with a different config; recomputing every stage", config.run_id);
            prior.reset();
        }
    }

    std::vector<std::pair<std::string, std::string>> jobs;
    std::set<std::string> slugs;
    for (const auto& seed : config.seeds) {
        std::string slug = text::slug(seed);
        for (int n = 2; !slugs.insert(slug).second; ++n) slug = text::slug(seed) + "_" + std::to_string(n);
        jobs.emplace_back(seed, slug);
    }

    std::vector<SeedRun> results(jobs.size());
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i = next++; i < jobs.size(); i = next++) {
            const SeedRecord* before = nullptr;
            if (prior) {
                for (const auto& s : prior->seeds) {
                    if (s.seed == jobs[i].first && s.slug == jobs[i].second) before = &s;
                }
            }
            SeedWorker w(config, store, *gateway, run_dir, before);
            results[i] = w.run(jobs[i].first, jobs[i].second);
        }
    };
    std::size_t threads = config.parallelism > 0 ? static_cast<std::size_t>(config.parallelism)
                                                 : std::max(1u, std::thread::hardware_concurrency());
    threads = std::min(threads, std::max<std::size_t>(jobs.size(), 1));
    if (threads <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }

    std::string dataset;
    write_json(run_dir / "ingest" / "report.json", to_json(manifest.ingest));
    manifest.artifacts = {"ingest/report.json", "dataset.jsonl"};
    for (auto& r : results) {
        if (r.dataset_line) dataset += r.dataset_line->dump() + "\n";
        manifest.artifacts.insert(manifest.artifacts.end(), r.artifacts.begin(), r.artifacts.end());
        manifest.seeds.push_back(std::move(r.record));
    }
    write_text(run_dir / "dataset.jsonl", dataset);
    std::sort(manifest.artifacts.begin(), manifest.artifacts.end());
    write_json(run_dir / "manifest.json", to_json(manifest));
    spdlog::info("run '{}': {} seeds, {} accepted, {} failed", config.run_id, manifest.seeds.size(), manifest.accepted(),
                 manifest.failed());
    return manifest;
}

// ---- evaluate --------------------------------------------------------------

std::vector<EvaluationRecord> evaluate_only(const fs::path& questions_file, const PipelineConfig& config) {
    config.validate();
    if (!fs::exists(questions_file)) fail(ErrorCode::NotFound, "questions file " + questions_file.string() + " does not exist");
    CorpusStore store = open_store(config, nullptr);
    auto gateway = make_gateway(config);
    QualityGate gate(store, *gateway, config.gate);

    static const json kRecordSchema = json::parse(R"({
      "type": "object",
      "required": ["question", "answer"],
      "properties": {
        "question": {"type": "string", "minLength": 1},
        "answer": {"type": "string", "minLength": 1},
        "candidates": {"type": "array", "items": {"type": "string"}}
      }
    })");

    std::ifstream in(questions_file);
    std::vector<EvaluationRecord> out;
    std::string line;
    std::size_t number = 0;
    while (std::getline(in, line)) {
        ++number;
        if (text::collapse_whitespace(line).empty()) continue;
        EvaluationRecord rec;
        rec.line = number;
        try {
            json j;
            try {
                j = json::parse(line);
            } catch (const json::parse_error& e) {
                fail(ErrorCode::InvalidInput, std::string("not JSON: ") + e.what());
            }
            if (auto v = schema_violation(j, kRecordSchema)) fail(ErrorCode::InvalidInput, *v);
            rec.report = gate.evaluate(j["question"].get<std::string>(), j["answer"].get<std::string>(),
                                       j.value("candidates", std::vector<std::string>{}));
        } catch (const Error& e) {
            rec.error = e.what();
            spdlog::warn("record on line {}: {}", number, rec.error);
        }
        out.push_back(std::move(rec));
    }

    std::string body;
    for (const auto& r : out) {
        json line_json = r.report ? json{{"line", r.line}, {"report", to_json(*r.report)}} : json{{"line", r.line}, {"error", r.error}};
        body += line_json.dump() + "\n";
    }
    write_text(config.run_dir() / "evaluate" / "reports.jsonl", body);
    return out;
}

// ---- export ----------------------------------------------------------------

ExportKind parse_export_kind(std::string_view s) {
    if (s == "graph") return ExportKind::Graph;
    if (s == "dataset") return ExportKind::Dataset;
    fail(ErrorCode::Usage, "unknown export target '" + std::string(s) + "' (graph, dataset)");
}

std::vector<fs::path> export_run(const PipelineConfig& config, ExportKind what, std::string_view format) {
    const fs::path run_dir = config.run_dir();
    if (!fs::exists(run_dir / "manifest.json")) fail(ErrorCode::NotFound, "run '" + config.run_id + "' not found");
    const RunManifest manifest = manifest_from_json(read_json(run_dir / "manifest.json"));
    std::vector<fs::path> written;
    if (what == ExportKind::Graph) {
        const GraphFormat fmt = parse_graph_format(format.empty() ? "json" : format);
        const std::string ext = fmt == GraphFormat::dot ? ".dot" : ".json";
        for (const auto& s : manifest.seeds) {
            const fs::path src = run_dir / "expand" / s.slug / "graph.json";
            auto it = s.stages.find("expand");
            if (it == s.stages.end() || it->second != StageStatus::Completed || !fs::exists(src)) continue;
            const fs::path dst = run_dir / "export" / "graph" / (s.slug + ext);
            write_text(dst, export_graph(graph_from_json(read_json(src)), fmt));
            written.push_back(dst);
        }
    } else {
        if (!format.empty() && format != "jsonl") fail(ErrorCode::Usage, "dataset export supports only jsonl");
        const fs::path src = run_dir / "dataset.jsonl";
        const fs::path dst = run_dir / "export" / "dataset.jsonl";
        write_text(dst, fs::exists(src) ? read_text(src) : std::string());
        written.push_back(dst);
    }
    return written;
}

}  // namespace hopforge
