#include <hopforge/relation_engine.hpp>

#include <hopforge/error.hpp>
#include <hopforge/text.hpp>

#include <nlohmann/json.hpp>

#include <algorithm>
#include <tuple>

namespace hopforge {

using nlohmann::json;

namespace {

std::string instantiate(std::string tmpl, const std::string& u, const std::string& v) {
    // Placeholders are swapped through a sentinel so a title containing "{V}"
    // cannot be re-substituted.
    tmpl = text::replace_all(std::move(tmpl), "{U}", "\x01");
    tmpl = text::replace_all(std::move(tmpl), "{V}", v);
    return text::replace_all(std::move(tmpl), "\x01", u);
}

bool mentions(std::string_view sentence, const EntityRef& e) {
    return std::any_of(e.surface_forms.begin(), e.surface_forms.end(),
                       [&](const std::string& s) { return text::contains_word_ci(sentence, s); });
}

// Earliest [begin, end) of any surface form of e in s.
std::optional<text::Span> first_mention(const std::string& s, const EntityRef& e) {
    std::optional<text::Span> best;
    for (const auto& form : e.surface_forms) {
        auto pos = text::find_ci(s, form);
        if (pos == std::string::npos) continue;
        if (!best || pos < best->begin) best = text::Span{pos, pos + form.size()};
    }
    return best;
}

bool utf8_boundary(const std::string& s, std::size_t i) {
    return i == 0 || i >= s.size() || (static_cast<unsigned char>(s[i]) & 0xC0) != 0x80;
}

}  // namespace

RelationTemplates RelationTemplates::defaults() {
    RelationTemplates t;
    t.by_relation[RelationType::Causes] = {"{U} causes {V}", "{U} leads to {V}", "{U} induces {V}"};
    t.by_relation[RelationType::PartOf] = {"{U} is part of {V}", "{U} belongs to {V}", "{U} is a component of {V}"};
    t.by_relation[RelationType::IsA] = {"{U} is a kind of {V}", "{U} is a type of {V}", "{U} is an instance of {V}"};
    t.by_relation[RelationType::HasAttribute] = {"{U} has attribute {V}", "{U} has property {V}",
                                                 "{U} is characterized by {V}"};
    t.by_relation[RelationType::Requires] = {"{U} requires {V}", "{U} needs {V}", "{U} depends on {V}"};
    t.by_relation[RelationType::UsedFor] = {"{U} is used for {V}", "{U} is used to access {V}",
                                            "{U} serves the purpose of {V}"};
    return t;
}

RelationTemplates RelationTemplates::from_json(const json& j) {
    RelationTemplates t = defaults();
    if (!j.is_object()) fail(ErrorCode::Config, "relation templates must be an object");
    for (const auto& [name, list] : j.items()) {
        auto r = parse_relation(name);
        if (!r) fail(ErrorCode::Config, "unknown relation type '" + name + "' in templates");
        auto templates = list.get<std::vector<std::string>>();
        if (templates.empty()) fail(ErrorCode::Config, "relation '" + name + "' needs at least one template");
        for (const auto& tmpl : templates) {
            if (tmpl.find("{U}") == std::string::npos || tmpl.find("{V}") == std::string::npos) {
                fail(ErrorCode::Config, "template '" + tmpl + "' must contain {U} and {V}");
            }
        }
        t.by_relation[*r] = std::move(templates);
    }
    return t;
}

std::size_t RelationTemplates::size() const {
    std::size_t n = 0;
    for (const auto& [_, list] : by_relation) n += list.size();
    return n;
}

EntityRef EntityRef::of(const PageRecord& page) {
    EntityRef e{page.title, {page.title}};
    for (const auto& a : page.aliases) e.surface_forms.push_back(a);
    return e;
}

EntityRef EntityRef::of(const CandidateEntity& c, const AttributeMap&) {
    EntityRef e{c.title, {c.title}};
    if (!c.anchor_text.empty() && text::canonicalize(c.anchor_text) != text::canonicalize(c.title)) {
        e.surface_forms.push_back(c.anchor_text);
    }
    return e;
}

json to_json(const RelationJudgment& j) {
    return {{"relation", to_string(j.relation)},
            {"direction", to_string(j.direction)},
            {"confidence", j.confidence},
            {"premise", j.premise},
            {"winning_hypothesis", j.winning_hypothesis}};
}

std::vector<std::string> select_premises(const CleanDocument& doc, const EntityRef& u, const EntityRef& v) {
    std::vector<std::string> out;
    for (const auto& p : doc.paragraphs) {
        for (auto& sentence : text::split_sentences(p.text)) {
            if (mentions(sentence, u) && mentions(sentence, v)) out.push_back(std::move(sentence));
        }
    }
    return out;
}

std::vector<Hypothesis> generate_hypotheses(const EntityRef& u, const EntityRef& v, const RelationTemplates& templates) {
    std::vector<Hypothesis> out;
    for (RelationType r : kRelationTypes) {
        auto it = templates.by_relation.find(r);
        if (it == templates.by_relation.end()) continue;
        for (std::size_t i = 0; i < it->second.size(); ++i) {
            out.push_back({r, Direction::Forward, i, instantiate(it->second[i], u.title, v.title)});
            out.push_back({r, Direction::Backward, i, instantiate(it->second[i], v.title, u.title)});
        }
    }
    return out;
}

std::string truncate_premise(const std::string& sentence, const EntityRef& u, const EntityRef& v, std::size_t max_chars) {
    if (sentence.size() <= max_chars) return sentence;
    auto mu = first_mention(sentence, u);
    auto mv = first_mention(sentence, v);
    if (!mu || !mv) return sentence.substr(0, max_chars);

    std::size_t begin = std::min(mu->begin, mv->begin);
    std::size_t end = std::max(mu->end, mv->end);
    if (end - begin < max_chars) {
        std::size_t slack = max_chars - (end - begin);
        std::size_t left = std::min(begin, slack / 2);
        std::size_t right = std::min(sentence.size() - end, slack - left);
        left = std::min(begin, slack - right);
        begin -= left;
        end += right;
    }
    // Snap outward-cut edges to word boundaries.
    if (begin > 0) {
        std::size_t b = begin;
        while (b < std::min(mu->begin, mv->begin) && sentence[b] != ' ') ++b;
        if (b < std::min(mu->begin, mv->begin)) begin = b + 1;
    }
    if (end < sentence.size()) {
        std::size_t e = end;
        while (e > std::max(mu->end, mv->end) && sentence[e - 1] != ' ') --e;
        if (e > std::max(mu->end, mv->end)) end = e - 1;
    }
    while (!utf8_boundary(sentence, begin)) --begin;
    while (!utf8_boundary(sentence, end)) ++end;
    return text::collapse_whitespace(sentence.substr(begin, end - begin));
}

RelationEngine::RelationEngine(ModelGateway& gateway, RelationEngineConfig config)
    : gateway_(gateway), config_(std::move(config)) {
    if (!(config_.nli_threshold >= 0.0 && config_.nli_threshold <= 1.0)) {
        fail(ErrorCode::Config, "nli_threshold must be in [0, 1]");
    }
}

std::optional<RelationJudgment> RelationEngine::classify_relation(const std::vector<std::string>& premises,
                                                                   const EntityRef& u, const EntityRef& v) {
    if (premises.empty()) return std::nullopt;
    const auto hypotheses = generate_hypotheses(u, v, config_.templates);
    if (hypotheses.empty()) return std::nullopt;
    std::vector<std::string> texts;
    texts.reserve(hypotheses.size());
    for (const auto& h : hypotheses) texts.push_back(h.text);

    struct Best {
        double score;
        std::tuple<std::size_t, int, std::size_t, std::size_t> key;  // relation, direction, premise, template
        std::size_t premise;
        std::size_t hypothesis;
    };
    std::optional<Best> best;
    std::vector<std::string> sent;
    for (std::size_t p = 0; p < premises.size(); ++p) {
        sent.push_back(truncate_premise(premises[p], u, v, config_.max_premise_chars));
        const auto scores = gateway_.nli(sent.back(), texts);
        for (std::size_t h = 0; h < hypotheses.size(); ++h) {
            const auto& hy = hypotheses[h];
            const auto rel_rank = static_cast<std::size_t>(
                std::find(kRelationTypes.begin(), kRelationTypes.end(), hy.relation) - kRelationTypes.begin());
            Best cand{scores[h], {rel_rank, hy.direction == Direction::Forward ? 0 : 1, p, hy.template_index}, p, h};
            if (!best || cand.score > best->score || (cand.score == best->score && cand.key < best->key)) best = cand;
        }
    }
    if (!best || best->score < config_.nli_threshold) return std::nullopt;
    const auto& hy = hypotheses[best->hypothesis];
    return RelationJudgment{hy.relation, hy.direction, best->score, sent[best->premise], hy.text};
}

}  // namespace hopforge
