#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include <hopforge/model_gateway.hpp>
#include <hopforge/node_builder.hpp>
#include <hopforge/vocabulary.hpp>

namespace hopforge {

/// Hypothesis templates per relation type; "{U}" and "{V}" are replaced by
/// entity titles. Defaults are the three templates per type of the
/// relation table; the lists can be extended from config.
struct RelationTemplates {
    std::map<RelationType, std::vector<std::string>> by_relation;

    static RelationTemplates defaults();
    static RelationTemplates from_json(const nlohmann::json& j);
    [[nodiscard]] std::size_t size() const;
};

/// An entity as it can appear in text: title plus aliases and anchor texts.
struct EntityRef {
    std::string title;
    std::vector<std::string> surface_forms;  // always includes the title

    static EntityRef of(const PageRecord& page);
    static EntityRef of(const CandidateEntity& candidate, const AttributeMap& = {});
};

struct Hypothesis {
    RelationType relation = RelationType::Causes;
    Direction direction = Direction::Forward;
    std::size_t template_index = 0;
    std::string text;
};

struct RelationJudgment {
    RelationType relation = RelationType::Causes;
    Direction direction = Direction::Forward;
    double confidence = 0.0;
    std::string premise;
    std::string winning_hypothesis;

    friend bool operator==(const RelationJudgment&, const RelationJudgment&) = default;
};

nlohmann::json to_json(const RelationJudgment& j);

struct RelationEngineConfig {
    double nli_threshold = 0.45;
    std::size_t max_premise_chars = 512;
    RelationTemplates templates = RelationTemplates::defaults();
};

/// Sentences of the document mentioning a surface form of both entities,
/// in document order.
std::vector<std::string> select_premises(const CleanDocument& doc, const EntityRef& u, const EntityRef& v);

/// Every template in both directions. Order: relation table order, then
/// template order, forward before backward.
std::vector<Hypothesis> generate_hypotheses(const EntityRef& u, const EntityRef& v,
                                            const RelationTemplates& templates = RelationTemplates::defaults());

/// Cuts a long premise to about `max_chars` around the entity mentions,
/// never dropping a mention.
std::string truncate_premise(const std::string& sentence, const EntityRef& u, const EntityRef& v,
                             std::size_t max_chars);

class RelationEngine {
  public:
    RelationEngine(ModelGateway& gateway, RelationEngineConfig config = {});

    /// Global argmax of entailment over (premise, relation, direction);
    /// nullopt when no premise or the maximum is below nli_threshold.
    /// Ties: relation order, then forward, then earlier premise.
    std::optional<RelationJudgment> classify_relation(const std::vector<std::string>& premises, const EntityRef& u,
                                                      const EntityRef& v);

    [[nodiscard]] const RelationEngineConfig& config() const noexcept { return config_; }

  private:
    ModelGateway& gateway_;
    RelationEngineConfig config_;
};

}  // namespace hopforge
