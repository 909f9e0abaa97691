#include <hopforge/node_builder.hpp>

#include <hopforge/error.hpp>
#include <hopforge/prompts.hpp>
#include <hopforge/text.hpp>

#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <map>
#include <regex>

namespace hopforge {

using nlohmann::json;

namespace {

bool mentions_entity(std::string_view passage, const PageRecord& page) {
    if (text::contains_word_ci(passage, page.title)) return true;
    return std::any_of(page.aliases.begin(), page.aliases.end(),
                       [&](const std::string& a) { return text::contains_word_ci(passage, a); });
}

std::size_t find_anchor(std::string_view paragraph, std::string_view anchor) {
    auto pos = paragraph.find(anchor);
    return pos != std::string_view::npos ? pos : text::find_ci(paragraph, anchor);
}

}  // namespace

std::string strip_markup(std::string_view paragraph) {
    static const std::regex kRef(R"(<ref[^>]*/>|<ref[^>]*>.*?</ref>)", std::regex::icase);
    static const std::regex kTag(R"(</?[A-Za-z][^>]*>)");
    static const std::regex kTemplate(R"(\{\{[^{}]*\}\})");
    static const std::regex kPiped(R"(\[\[(?:[^\]|]*\|)?([^\]]*)\]\])");
    static const std::regex kCite(R"(\[(?:\d+|[a-z]|citation needed|edit|note \d+|clarification needed)\])",
                                  std::regex::icase);
    static const std::regex kQuotes(R"('{2,})");

    std::string s(paragraph);
    s = std::regex_replace(s, kRef, "");
    s = std::regex_replace(s, kTemplate, "");
    s = std::regex_replace(s, kPiped, "$1");
    s = std::regex_replace(s, kCite, "");
    s = std::regex_replace(s, kTag, "");
    s = std::regex_replace(s, kQuotes, "");
    s = text::collapse_whitespace(s);
    s = text::replace_all(s, " ,", ",");
    s = text::replace_all(s, " .", ".");
    return s;
}

const Paragraph* CleanDocument::paragraph(int index) const {
    auto it = std::find_if(paragraphs.begin(), paragraphs.end(), [&](const Paragraph& p) { return p.index == index; });
    return it == paragraphs.end() ? nullptr : &*it;
}

json to_json(const CandidateEntity& c) {
    return {{"title", c.title},
            {"anchor", c.anchor_text},
            {"label", to_string(c.label)},
            {"ner_score", c.ner_score},
            {"mention_frequency", c.mention_frequency},
            {"evidence",
             {{"source_title", c.evidence.source_title},
              {"paragraph_index", c.evidence.paragraph_index},
              {"text", c.evidence.text}}},
            {"paragraph_indices", c.paragraph_indices},
            {"attributes", c.attributes}};
}

CandidateEntity candidate_from_json(const json& j) {
    CandidateEntity c;
    c.title = j.at("title").get<std::string>();
    c.anchor_text = j.value("anchor", std::string());
    auto label = parse_entity_label(j.at("label").get<std::string>());
    if (!label) fail(ErrorCode::InvalidInput, "candidate has unknown label");
    c.label = *label;
    c.ner_score = j.at("ner_score").get<double>();
    c.mention_frequency = j.at("mention_frequency").get<int>();
    const auto& e = j.at("evidence");
    c.evidence = {e.at("source_title").get<std::string>(), e.at("paragraph_index").get<int>(),
                  e.at("text").get<std::string>()};
    c.paragraph_indices = j.value("paragraph_indices", std::vector<int>{});
    c.attributes = j.value("attributes", AttributeMap{});
    return c;
}

NodeBuilder::NodeBuilder(const CorpusStore& store, ModelGateway& gateway, NodeBuilderConfig config)
    : store_(store), gateway_(gateway), config_(std::move(config)) {
    if (!(config_.ner_threshold >= 0.0 && config_.ner_threshold <= 1.0)) {
        fail(ErrorCode::Config, "ner_threshold must be in [0, 1]");
    }
}

CleanDocument NodeBuilder::preprocess(const PageRecord& page) const {
    auto dropped = [&](const std::string& section) {
        const std::string key = text::canonicalize(section);
        return std::any_of(config_.drop_sections.begin(), config_.drop_sections.end(),
                           [&](const std::string& d) { return text::canonicalize(d) == key; });
    };

    CleanDocument doc;
    doc.title = page.title;
    for (const auto& p : page.paragraphs) {
        if (dropped(p.section)) continue;
        std::string cleaned = strip_markup(p.text);
        if (cleaned.empty()) continue;
        doc.paragraphs.push_back({p.index, p.section, std::move(cleaned)});
    }
    if (doc.paragraphs.empty()) {
        fail(ErrorCode::InvalidInput, "page '" + page.title + "' has no content after preprocessing");
    }
    for (const auto& l : page.outlinks) {
        if (doc.paragraph(l.paragraph_index) != nullptr) doc.outlinks.push_back(l);
    }
    return doc;
}

CandidateSet NodeBuilder::extract_and_filter_candidates(const CleanDocument& doc, const PageRecord& seed) {
    struct Occurrence {
        const Outlink* link;
        bool accepted = false;
        EntityLabel label = EntityLabel::EventMisc;
        double score = 0.0;
        std::string reason;
    };

    // Document order: paragraph index, then anchor order within the page.
    std::vector<const Outlink*> links;
    for (const auto& l : doc.outlinks) links.push_back(&l);
    std::stable_sort(links.begin(), links.end(),
                     [](const Outlink* a, const Outlink* b) { return a->paragraph_index < b->paragraph_index; });

    CandidateSet out;
    std::map<std::string, std::vector<NerEntity>> ner_cache;
    std::vector<std::string> order;
    std::map<std::string, std::vector<Occurrence>> by_target;

    const std::string seed_key = text::canonicalize(seed.title);
    for (const Outlink* link : links) {
        if (link->dangling()) {
            out.rejected.push_back({link->anchor_text, link->target_title, "dangling link"});
            continue;
        }
        if (text::canonicalize(link->resolved_title) == seed_key) {
            out.rejected.push_back({link->anchor_text, link->target_title, "self link"});
            continue;
        }
        Occurrence occ{link, false, EntityLabel::EventMisc, 0.0, {}};
        const Paragraph* para = doc.paragraph(link->paragraph_index);
        const std::size_t at = find_anchor(para->text, link->anchor_text);
        if (at == std::string_view::npos) {
            occ.reason = "anchor not in paragraph text";
        } else {
            // NER on the sentence that holds the anchor.
            std::string_view sentence = para->text;
            std::size_t offset = 0;
            for (const auto& sp : text::sentence_spans(para->text)) {
                if (at >= sp.begin && at < sp.end) {
                    sentence = std::string_view(para->text).substr(sp.begin, sp.end - sp.begin);
                    offset = sp.begin;
                    break;
                }
            }
            const std::string key(sentence);
            auto cached = ner_cache.find(key);
            if (cached == ner_cache.end()) cached = ner_cache.emplace(key, gateway_.ner(sentence)).first;

            const std::size_t a_begin = at - offset;
            const std::size_t a_end = a_begin + link->anchor_text.size();
            occ.reason = "no entity label";
            for (const auto& ent : cached->second) {
                if (ent.span.end <= a_begin || ent.span.begin >= a_end) continue;
                auto label = parse_entity_label(ent.label);
                if (!label) {
                    if (!occ.accepted) occ.reason = "label '" + ent.label + "' not accepted";
                    continue;
                }
                if (ent.score < config_.ner_threshold) {
                    if (!occ.accepted) occ.reason = "ner score below threshold";
                    continue;
                }
                if (!occ.accepted || ent.score > occ.score) {
                    occ.accepted = true;
                    occ.label = *label;
                    occ.score = ent.score;
                    occ.reason.clear();
                }
            }
        }
        auto [it, inserted] = by_target.try_emplace(link->resolved_title);
        if (inserted) order.push_back(link->resolved_title);
        it->second.push_back(std::move(occ));
    }

    for (const auto& title : order) {
        const auto& occs = by_target[title];
        const Occurrence* best = nullptr;
        for (const auto& o : occs) {
            if (o.accepted && (best == nullptr || o.score > best->score)) best = &o;
        }
        if (best == nullptr) {
            out.rejected.push_back({occs.front().link->anchor_text, title, occs.front().reason});
            continue;
        }
        CandidateEntity c;
        c.title = title;
        c.label = best->label;
        c.ner_score = best->score;
        c.mention_frequency = static_cast<int>(occs.size());
        for (const auto& o : occs) c.paragraph_indices.push_back(o.link->paragraph_index);
        const Occurrence* first_ok = nullptr;
        for (const auto& o : occs) {
            if (o.accepted) {
                first_ok = &o;
                break;
            }
        }
        c.anchor_text = first_ok->link->anchor_text;
        const Paragraph* para = doc.paragraph(first_ok->link->paragraph_index);
        c.evidence = {doc.title, para->index, para->text};
        out.accepted.push_back(std::move(c));
    }
    return out;
}

std::string NodeBuilder::resolve_coreference(const std::string& paragraph, const PageRecord& seed) {
    try {
        json reply = gateway_.chat_json(
            prompts::messages(prompts::kCoreference, {{"entity", seed.title}, {"aliases", seed.aliases}, {"text", paragraph}}),
            prompts::response_schema(prompts::kCoreference));
        return text::collapse_whitespace(reply["text"].get<std::string>());
    } catch (const Error& e) {
        spdlog::warn("coreference failed for '{}', using raw paragraph: {}", seed.title, e.what());
        return paragraph;
    }
}

EvidenceResult NodeBuilder::associate_evidence(const CandidateEntity& candidate, const PageRecord& seed) {
    std::vector<int> indices = candidate.paragraph_indices;
    if (indices.empty()) indices.push_back(candidate.evidence.paragraph_index);
    indices.erase(std::unique(indices.begin(), indices.end()), indices.end());

    CleanDocument doc;
    try {
        doc = preprocess(seed);
    } catch (const Error&) {
        return {std::nullopt, "no co-occurrence"};
    }
    for (int idx : indices) {
        const Paragraph* para = doc.paragraph(idx);
        if (para == nullptr) continue;
        std::string body = para->text;
        if (config_.coreference) body = resolve_coreference(body, seed);
        if (!text::contains_ci(body, candidate.anchor_text) && !text::contains_ci(body, candidate.title)) continue;
        if (mentions_entity(body, seed)) return {EvidenceParagraph{seed.title, idx, std::move(body)}, {}};
    }
    return {std::nullopt, "no co-occurrence"};
}

AttributeMap NodeBuilder::enrich_entity(std::string_view title) const {
    if (!store_.try_resolve(title)) fail(ErrorCode::NotFound, "unknown entity '" + std::string(title) + "'");
    return store_.attributes(title);
}

CandidateSet NodeBuilder::build(const PageRecord& seed) {
    CleanDocument doc = preprocess(seed);
    CandidateSet raw = extract_and_filter_candidates(doc, seed);
    CandidateSet out;
    out.rejected = std::move(raw.rejected);
    for (auto& c : raw.accepted) {
        EvidenceResult ev = associate_evidence(c, seed);
        if (!ev.evidence) {
            out.rejected.push_back({c.anchor_text, c.title, ev.rejection});
            continue;
        }
        c.evidence = std::move(*ev.evidence);
        c.attributes = enrich_entity(c.title);
        out.accepted.push_back(std::move(c));
    }
    return out;
}

}  // namespace hopforge
