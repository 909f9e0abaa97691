#pragma once

#include <map>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include <hopforge/corpus_store.hpp>
#include <hopforge/graph_expander.hpp>
#include <hopforge/model_gateway.hpp>

namespace hopforge {

/// Generalization rules applied during obfuscation.
struct AnchorTable {
    // Exact phrase -> descriptor, matched case-insensitively, longest first.
    std::vector<std::pair<std::string, std::string>> phrases;
    // Entity label -> role descriptor used for non-seed node names.
    std::map<std::string, std::string> type_descriptors;

    static AnchorTable defaults();
    static AnchorTable from_json(const nlohmann::json& j);
};

/// "in the early 21st century" for years in the first sixteen of a century,
/// otherwise "in the early|mid|late <decade>s".
std::string era_phrase(int year);

/// "21st", "12th", "3rd".
std::string ordinal(int n);

struct ForgeConfig {
    int n_deep = 2;
    std::size_t max_words = 120;
    int probe_runs = 5;
    int max_rounds = 3;
    int retry_limit = 3;
    int rewrite_retries = 3;
    AnchorTable anchors = AnchorTable::defaults();

    void validate() const;
};

struct ClueSpec {
    int node_id = 0;
    int depth = 0;
    std::string oblique_text;
    std::vector<std::string> uses_attributes;

    friend bool operator==(const ClueSpec&, const ClueSpec&) = default;
};

struct DroppedClue {
    int node_id = 0;
    std::string reason;
};

struct ClueSet {
    std::vector<ClueSpec> clues;  // leaf-first
    std::vector<DroppedClue> dropped;
};

enum class DraftStatus { draft, probed, hardened, accepted, rejected };
std::string_view to_string(DraftStatus s) noexcept;

struct QuestionDraft {
    std::string text;
    std::string seed_answer;
    std::vector<ClueSpec> clues;
    int round = 0;
    int attempts = 0;  // rewrite attempts, including rolled-back ones
    DraftStatus status = DraftStatus::draft;
    std::size_t word_count = 0;
    std::string rejection_reason;
    std::vector<std::string> verification_failures;

    [[nodiscard]] int deep_clue_count() const;
};

struct ProbeResult {
    std::vector<std::string> answers;
    int match_count = 0;
    bool solved = false;
};

struct KillerPair {
    std::string clause;
    std::vector<std::string> anchors;
};

/// Clauses holding two or more explicit anchors (years, model numbers,
/// proper-noun runs).
std::vector<KillerPair> detect_killer_pairs(std::string_view question);

struct RoundRecord {
    int round = 0;
    std::string text;
    ProbeResult probe;
    bool hardened = false;
    int attempts = 0;
};

struct RefineOutcome {
    QuestionDraft draft;
    std::vector<RoundRecord> rounds;
};

nlohmann::json to_json(const ClueSpec& c);
nlohmann::json to_json(const QuestionDraft& d);
nlohmann::json to_json(const ProbeResult& p);
nlohmann::json to_json(const RefineOutcome& r);

class QuestionForge {
  public:
    QuestionForge(const CorpusStore& store, ModelGateway& gateway, ForgeConfig config = {});

    /// One oblique clue per non-seed node, leaf-first. Throws
    /// Error(Generation) when every clue is dropped.
    ClueSet build_clues(const EvidenceGraph& graph);

    /// Throws Error(Precondition) when fewer than n_deep clues have depth >= 2.
    QuestionDraft compose_question(const std::vector<ClueSpec>& clues, const EvidenceGraph& graph, int n_deep);

    QuestionDraft obfuscate(const QuestionDraft& draft, const EvidenceGraph& graph);

    /// Gateway failures count as non-matching runs.
    ProbeResult probe_solvability(const QuestionDraft& draft, int runs);

    /// Subgraph selection, implicit rewrite, self-verification and rollback.
    /// Returns a rejected draft (round unchanged) when retries run out.
    QuestionDraft harden(const QuestionDraft& draft, const EvidenceGraph& graph);

    RefineOutcome refine_loop(const QuestionDraft& draft, const EvidenceGraph& graph, int max_rounds);

    /// Node ids of the minimal supporting subgraph: the n_deep deepest clue
    /// nodes (depth >= 2) plus their paths to the seed.
    [[nodiscard]] std::vector<int> select_subgraph(const QuestionDraft& draft, const EvidenceGraph& graph) const;

    /// Seed title and aliases.
    [[nodiscard]] std::vector<std::string> seed_names(const EvidenceGraph& graph) const;
    /// Titles and aliases of depth-1 nodes.
    [[nodiscard]] std::vector<std::string> neighbor_names(const EvidenceGraph& graph) const;

    [[nodiscard]] const ForgeConfig& config() const noexcept { return config_; }

  private:
    [[nodiscard]] std::vector<std::string> names_of(const GraphNode& node) const;

    const CorpusStore& store_;
    ModelGateway& gateway_;
    ForgeConfig config_;
};

}  // namespace hopforge
