#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include <hopforge/corpus_store.hpp>
#include <hopforge/node_builder.hpp>
#include <hopforge/relation_engine.hpp>
#include <hopforge/vocabulary.hpp>

namespace hopforge {

/// branching[d] = children per frontier node when growing layer d+1.
struct ExpansionStrategy {
    std::vector<int> branching;

    /// Throws Error(Config) unless non-empty with all entries >= 1.
    void validate() const;
};

/// Composite score weights: NLI confidence, relation diversity, semantic
/// (title) diversity, paragraph diversity. Set par = 0 for the three-term form.
struct ScoreWeights {
    double conf = 0.6;
    double rel = 0.2;
    double sem = 0.15;
    double par = 0.05;

    void validate() const;
};

struct GraphNode {
    int id = 0;
    std::string title;
    std::string type;  // entity label; "seed" for the root
    int depth = 0;
    AttributeMap attributes;

    friend bool operator==(const GraphNode&, const GraphNode&) = default;
};

struct GraphEdge {
    int parent = 0;
    int child = 0;
    RelationType relation = RelationType::Causes;
    Direction direction = Direction::Forward;
    double confidence = 0.0;
    std::string evidence;

    friend bool operator==(const GraphEdge&, const GraphEdge&) = default;
};

struct EvidenceGraph {
    int seed_id = 0;
    std::vector<GraphNode> nodes;
    std::vector<GraphEdge> edges;

    [[nodiscard]] const GraphNode& node(int id) const;
    [[nodiscard]] const GraphNode& seed() const { return node(seed_id); }
    /// Incoming edge of a non-seed node.
    [[nodiscard]] const GraphEdge* parent_edge(int child_id) const;
    /// Node ids on the path seed -> id, inclusive.
    [[nodiscard]] std::vector<int> path_from_seed(int id) const;
    [[nodiscard]] std::vector<const GraphNode*> layer(int depth) const;
    [[nodiscard]] int max_depth() const;
    [[nodiscard]] bool has_title(std::string_view title) const;

    /// Throws Error(InvalidInput) naming the first broken invariant.
    void validate() const;

    friend bool operator==(const EvidenceGraph&, const EvidenceGraph&) = default;
};

nlohmann::json to_json(const EvidenceGraph& g);
EvidenceGraph graph_from_json(const nlohmann::json& j);

enum class GraphFormat { json, dot };
GraphFormat parse_graph_format(std::string_view name);  // Error(Usage) on unknown names
std::string export_graph(const EvidenceGraph& g, GraphFormat format);
std::string export_graph(const EvidenceGraph& g, std::string_view format);

/// Diversity bookkeeping for the layer being grown; reset per layer.
struct LayerState {
    std::vector<RelationType> selected_relations;
    std::vector<std::string> selected_titles;
    std::set<int> selected_paragraph_indices;
};

/// Max similarity of `title` to any of `others`, in [0, 1].
using TitleSimilarity = std::function<double(const std::string& title, const std::vector<std::string>& others)>;

/// Character-trigram Jaccard similarity (offline default).
double max_trigram_similarity(const std::string& title, const std::vector<std::string>& others);

/// Cosine similarity over gateway embeddings, clamped to [0, 1].
TitleSimilarity embedding_similarity(ModelGateway& gateway);

struct ScoreTerms {
    double confidence = 0.0;
    double rel_div = 0.0;
    double sem_div = 0.0;
    double par_div = 0.0;
    double total = 0.0;
};

ScoreTerms score_terms(const RelationJudgment& judgment, const CandidateEntity& candidate, const LayerState& layer,
                       const ScoreWeights& weights, const TitleSimilarity& similarity = max_trigram_similarity);

double score_candidate(const RelationJudgment& judgment, const CandidateEntity& candidate, const LayerState& layer,
                       const ScoreWeights& weights, const TitleSimilarity& similarity = max_trigram_similarity);

/// Drops candidates already in the graph, then fills ceil(0.7 * pool_size)
/// slots by mention frequency (ties by title) and the rest uniformly at
/// random from the remainder. Returns fewer when supply is short.
std::vector<CandidateEntity> sample_candidates(const std::vector<CandidateEntity>& candidates,
                                               const std::set<std::string>& existing_titles, std::size_t pool_size,
                                               std::uint64_t rng_seed);

/// Seeded draws with results that do not depend on the standard library's
/// distribution implementations (mt19937_64 output is fully specified).
class SeededRng {
  public:
    explicit SeededRng(std::uint64_t seed) : engine_(seed) {}
    /// Uniform in [0, n), n > 0.
    std::size_t below(std::size_t n);

  private:
    std::mt19937_64 engine_;
};

/// Mixes a base seed with a stream id (splitmix64 finalizer).
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream);

struct ExpanderConfig {
    std::size_t pool_multiplier = 3;  // pool_size = multiplier * K
    bool embedding_similarity = false;
};

struct ScoredCandidate {
    CandidateEntity candidate;
    RelationJudgment judgment;
    ScoreTerms terms;
    bool selected = false;
};

/// Audit trail of one frontier node expansion.
struct FrontierTrace {
    int node_id = 0;
    std::string title;
    std::vector<CandidateEntity> sampled;
    std::vector<ScoredCandidate> scored;  // passed the NLI threshold
    std::vector<std::string> no_relation;  // sampled but no judgment
    std::string note;
};

struct ExpansionResult {
    EvidenceGraph graph;
    CandidateSet seed_candidates;
    std::vector<FrontierTrace> trace;
};

nlohmann::json to_json(const FrontierTrace& t);

class GraphExpander {
  public:
    GraphExpander(const CorpusStore& store, NodeBuilder& nodes, RelationEngine& relations, ExpanderConfig config = {},
                  ModelGateway* embeddings = nullptr);

    /// Controlled breadth-first growth from the seed.
    ExpansionResult expand(std::string_view seed_title, const ExpansionStrategy& strategy, const ScoreWeights& weights,
                           std::uint64_t rng_seed);

  private:
    const CorpusStore& store_;
    NodeBuilder& nodes_;
    RelationEngine& relations_;
    ExpanderConfig config_;
    TitleSimilarity similarity_;
};

}  // namespace hopforge
