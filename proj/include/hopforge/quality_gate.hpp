#pragma once

#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include <hopforge/corpus_store.hpp>
#include <hopforge/model_gateway.hpp>
#include <hopforge/question_forge.hpp>
#include <hopforge/vocabulary.hpp>

namespace hopforge {

// ---- graph-based textual structure -----------------------------------------

enum class StructureKind { Subject, Object, Attribute };
std::string_view to_string(StructureKind k) noexcept;
StructureKind parse_structure_kind(std::string_view s);

struct StructureNode {
    std::string id;
    std::string label;
    StructureKind kind = StructureKind::Object;
};

struct StructureEdge {
    std::string from;
    std::string to;
    RelationType relation = RelationType::HasAttribute;
};

struct TextStructureGraph {
    std::vector<StructureNode> nodes;
    std::vector<StructureEdge> edges;

    /// Throws Error(SchemaViolation) on duplicate ids or dangling endpoints.
    void validate() const;
};

nlohmann::json to_json(const TextStructureGraph& g);
TextStructureGraph structure_from_json(const nlohmann::json& j);

struct StructureThresholds {
    int alpha = 3;  // attribute nodes
    int beta = 5;   // edges
    int gamma = 3;  // diameter
};

struct StructureMetrics {
    int orphan_count = 0;
    int attribute_count = 0;
    int edge_count = 0;
    int diameter = 0;
    bool pass = false;
};

/// Orphans and diameter are taken on the undirected view; the largest
/// component wins ties by its lowest node position.
StructureMetrics compute_metrics(const TextStructureGraph& g, const StructureThresholds& t);

// ---- majority vote ---------------------------------------------------------

struct VoteOutcome {
    bool accepted = false;
    int match_count = 0;
    std::vector<std::string> candidates;  // seed first, then distinct other predictions
};

// ---- predicates ------------------------------------------------------------

enum class PredicateOp { Equals, Within, Contains, Category };
std::string_view to_string(PredicateOp op) noexcept;
PredicateOp parse_predicate_op(std::string_view s);

struct NormalizedValue {
    enum class Kind { Interval, RegionHint, Category };
    Kind kind = Kind::Category;
    int lo = 0;
    int hi = 0;
    std::string text;  // region hint or category id

    static NormalizedValue interval(int lo, int hi) { return {Kind::Interval, lo, hi, {}}; }
    static NormalizedValue region(std::string hint) { return {Kind::RegionHint, 0, 0, std::move(hint)}; }
    static NormalizedValue category(std::string id) { return {Kind::Category, 0, 0, std::move(id)}; }

    friend bool operator==(const NormalizedValue&, const NormalizedValue&) = default;
};

struct StructuredPredicate {
    std::string field;
    PredicateOp op = PredicateOp::Equals;
    std::string value;
    std::optional<NormalizedValue> normalized;
    std::string null_reason;
    std::pair<std::size_t, std::size_t> source_span{0, 0};  // code points, [start, end)
    double confidence = 0.0;
    double priority_weight = 1.0;
    std::string attribute;  // stored attribute key, when the model named one
};

nlohmann::json to_json(const NormalizedValue& v);
NormalizedValue normalized_from_json(const nlohmann::json& j);
nlohmann::json to_json(const StructuredPredicate& p);
StructuredPredicate predicate_from_json(const nlohmann::json& j);

/// Phrase -> value tables for the deterministic normalizer.
struct NormalizationTable {
    // Offsets into a decade / century for early, mid, late.
    std::map<std::string, std::pair<int, int>> decade_parts{{"early", {0, 3}}, {"mid", {3, 6}}, {"late", {6, 9}}};
    std::map<std::string, std::pair<int, int>> century_parts{{"early", {0, 15}}, {"mid", {35, 65}}, {"late", {85, 99}}};
    std::map<std::string, std::string> region_words{
        {"southern", "South"}, {"south", "South"},   {"northern", "North"}, {"north", "North"},
        {"eastern", "East"},   {"east", "East"},     {"western", "West"},   {"west", "West"},
        {"central", "Central"}};
    std::vector<std::string> high_priority_fields{"time", "location", "entity_type"};

    static NormalizationTable from_json(const nlohmann::json& j);
};

/// Interval for a time phrase ("early 2020s", "late 19th century", "1951"),
/// nullopt when the phrase is not in the table.
std::optional<std::pair<int, int>> normalize_time(std::string_view phrase, const NormalizationTable& table = {});

/// Fills normalized / null_reason / priority_weight from field, op and value.
void normalize_predicate(StructuredPredicate& p, const NormalizationTable& table = {});

/// Appends one residual predicate per run of content tokens no span covers.
void append_residuals(std::string_view question, std::vector<StructuredPredicate>& predicates);

// ---- screening and matching ------------------------------------------------

enum class ScreenOutcome { Satisfied, Failed, NotEvaluable };
std::string_view to_string(ScreenOutcome s) noexcept;

/// Attribute keys consulted for a predicate, in lookup order.
std::vector<std::string> attribute_keys(const StructuredPredicate& p);

/// Checks one explicit predicate against stored attributes.
ScreenOutcome screen_predicate(const StructuredPredicate& p, const AttributeMap& attributes);

enum class Verdict { Y, P, U, N };
std::string_view to_string(Verdict v) noexcept;
Verdict parse_verdict(std::string_view s);
double verdict_value(Verdict v) noexcept;

struct VerdictRecord {
    int index = 0;
    Verdict verdict = Verdict::U;
    std::string evidence_ref;
    std::string justification;
};

/// Σ w·v / Σ w over all verdicts; 0 when the weight sum is 0.
double s_norm(const std::vector<VerdictRecord>& verdicts, const std::vector<StructuredPredicate>& predicates);

/// Index of the first predicate whose N verdict carries weight >= cutoff.
std::optional<int> eliminating_predicate(const std::vector<VerdictRecord>& verdicts,
                                         const std::vector<StructuredPredicate>& predicates, double cutoff);

struct Passage {
    std::string ref;  // "Title#paragraph"
    std::string text;
};

class RetrievalClient {
  public:
    virtual ~RetrievalClient() = default;
    virtual std::vector<Passage> retrieve(std::string_view candidate, std::string_view question) = 0;
};

struct CandidateRecord {
    std::string title;
    bool resolved = false;
    std::vector<ScreenOutcome> screening;  // aligned with predicates
    double s_exp = 0.0;
    bool discarded = false;
    bool matched = false;  // reached evidence matching
    std::vector<VerdictRecord> verdicts;
    double s_norm = 0.0;
    std::optional<int> eliminated_by;
};

// ---- report ----------------------------------------------------------------

enum class Decision { AcceptedAtVote, AcceptedAtScreening, AcceptedAtMatching, Rejected };
std::string_view to_string(Decision d) noexcept;
Decision parse_decision(std::string_view s);
inline bool is_accepted(Decision d) noexcept { return d != Decision::Rejected; }

struct QualityReport {
    std::string question;
    std::string seed;
    StructureThresholds thresholds;
    double high_priority_cutoff = 2.0;
    std::optional<TextStructureGraph> structure;
    StructureMetrics metrics;
    std::string structure_error;
    std::optional<ProbeResult> vote;
    std::vector<std::string> vote_candidates;
    std::vector<StructuredPredicate> predicates;
    std::string decomposition_error;
    std::vector<CandidateRecord> candidates;
    Decision decision = Decision::Rejected;
    std::string reason;
};

nlohmann::json to_json(const QualityReport& r);
QualityReport report_from_json(const nlohmann::json& j);

/// Re-derives the decision from the recorded metrics, vote, screening
/// outcomes and verdicts; S_exp and S_norm are recomputed, not read.
std::pair<Decision, std::string> decide(const QualityReport& r);

/// Recomputes scores and writes decision and reason into the report.
void adjudicate(QualityReport& r);

struct GateConfig {
    StructureThresholds thresholds;
    int vote_runs = 3;
    int retry_limit = 2;
    double high_priority_cutoff = 2.0;
    std::size_t max_passages = 16;
    NormalizationTable normalization;

    void validate() const;
};

class QualityGate {
  public:
    QualityGate(const CorpusStore& store, ModelGateway& gateway, GateConfig config = {},
                RetrievalClient* retrieval = nullptr);

    /// Throws Error(Precondition) on an empty question and
    /// Error(SchemaViolation) when every attempt is malformed.
    TextStructureGraph extract_structure(std::string_view question);

    /// Answer predictions from `runs` independent chat calls; failed calls
    /// yield "".
    std::vector<std::string> predict_answers(std::string_view question, int runs);

    /// Throws Error(Precondition) with fewer than three predictions.
    [[nodiscard]] VoteOutcome majority_vote(const std::vector<std::string>& predictions, std::string_view seed) const;

    /// Throws Error(SchemaViolation) when every attempt is malformed.
    std::vector<StructuredPredicate> decompose_constraints(std::string_view question);

    /// Screens candidates against explicit predicates. The returned records
    /// carry per-predicate outcomes, S_exp and the discard flag.
    [[nodiscard]] std::vector<CandidateRecord> screen_explicit(const std::vector<StructuredPredicate>& predicates,
                                                               const std::vector<std::string>& candidates) const;

    /// Candidate paragraphs from the store, then retrieval results.
    std::vector<Passage> evidence_pack(std::string_view candidate, std::string_view question);

    /// Fills verdicts, S_norm and eliminated_by of `record`.
    void match_evidence(const std::vector<StructuredPredicate>& predicates, CandidateRecord& record,
                        const std::vector<Passage>& pack, std::string_view question);

    /// Full evaluation: structure, vote, decomposition, screening, matching.
    /// `extra_candidates` joins the vote's candidate set when flagged.
    QualityReport evaluate(std::string_view question, std::string_view seed,
                           const std::vector<std::string>& extra_candidates = {});

    [[nodiscard]] const GateConfig& config() const noexcept { return config_; }

  private:
    [[nodiscard]] std::string canonical_answer(std::string_view s) const;

    const CorpusStore& store_;
    ModelGateway& gateway_;
    GateConfig config_;
    RetrievalClient* retrieval_;
};

}  // namespace hopforge
