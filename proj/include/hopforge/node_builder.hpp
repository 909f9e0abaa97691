#pragma once

#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include <hopforge/corpus_store.hpp>
#include <hopforge/model_gateway.hpp>
#include <hopforge/vocabulary.hpp>

namespace hopforge {

struct NodeBuilderConfig {
    double ner_threshold = 0.5;
    bool coreference = false;
    // Matched case-insensitively against section names.
    std::vector<std::string> drop_sections = {"See also", "References", "External links",
                                              "Further reading", "Notes", "Bibliography"};
};

/// A page after section dropping and markup cleanup. Paragraphs keep their
/// original indices so outlinks stay addressable.
struct CleanDocument {
    std::string title;
    std::vector<Paragraph> paragraphs;
    std::vector<Outlink> outlinks;

    [[nodiscard]] const Paragraph* paragraph(int index) const;
};

struct EvidenceParagraph {
    std::string source_title;
    int paragraph_index = 0;
    std::string text;

    friend bool operator==(const EvidenceParagraph&, const EvidenceParagraph&) = default;
};

struct CandidateEntity {
    std::string title;        // canonical page title of the link target
    std::string anchor_text;  // first accepted anchor
    EntityLabel label = EntityLabel::EventMisc;
    double ner_score = 0.0;
    int mention_frequency = 0;
    EvidenceParagraph evidence;
    // Originating paragraphs of every anchor occurrence, document order.
    std::vector<int> paragraph_indices;
    AttributeMap attributes;

    friend bool operator==(const CandidateEntity&, const CandidateEntity&) = default;
};

struct CandidateRejection {
    std::string anchor_text;
    std::string target;
    std::string reason;
};

struct CandidateSet {
    std::vector<CandidateEntity> accepted;
    std::vector<CandidateRejection> rejected;
};

/// Either the evidence paragraph or the reason the candidate was dropped.
struct EvidenceResult {
    std::optional<EvidenceParagraph> evidence;
    std::string rejection;
};

/// Removes wiki/html markup residue: citation brackets, templates, ref tags,
/// bold/italic quotes, piped links.
std::string strip_markup(std::string_view paragraph);

nlohmann::json to_json(const CandidateEntity& c);
CandidateEntity candidate_from_json(const nlohmann::json& j);

class NodeBuilder {
  public:
    NodeBuilder(const CorpusStore& store, ModelGateway& gateway, NodeBuilderConfig config = {});

    /// Throws Error(InvalidInput) when nothing survives.
    [[nodiscard]] CleanDocument preprocess(const PageRecord& page) const;

    /// NER-filtered candidates from the document's outlinks. Gateway
    /// failures propagate; there is no partial result.
    CandidateSet extract_and_filter_candidates(const CleanDocument& doc, const PageRecord& seed);

    /// Originating paragraph of the candidate, coreference-resolved when
    /// enabled; rejected with "no co-occurrence" when the seed is absent.
    EvidenceResult associate_evidence(const CandidateEntity& candidate, const PageRecord& seed);

    /// Throws Error(NotFound) for unknown titles.
    [[nodiscard]] AttributeMap enrich_entity(std::string_view title) const;

    /// preprocess -> extract -> associate -> enrich for one page.
    CandidateSet build(const PageRecord& seed);

    [[nodiscard]] const NodeBuilderConfig& config() const noexcept { return config_; }

  private:
    std::string resolve_coreference(const std::string& paragraph, const PageRecord& seed);

    const CorpusStore& store_;
    ModelGateway& gateway_;
    NodeBuilderConfig config_;
};

}  // namespace hopforge
