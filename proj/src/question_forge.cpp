#include <hopforge/question_forge.hpp>

#include <hopforge/error.hpp>
#include <hopforge/prompts.hpp>
#include <hopforge/text.hpp>

#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <cctype>
#include <regex>
#include <set>

namespace hopforge {

using nlohmann::json;

namespace {

bool leaks(std::string_view text, const std::vector<std::string>& names) {
    return std::any_of(names.begin(), names.end(), [&](const std::string& n) { return text::contains_word_ci(text, n); });
}

std::string first_leak(std::string_view text, const std::vector<std::string>& names) {
    for (const auto& n : names) {
        if (text::contains_word_ci(text, n)) return n;
    }
    return {};
}

json clue_payload(const std::vector<ClueSpec>& clues) {
    json out = json::array();
    for (const auto& c : clues) out.push_back({{"depth", c.depth}, {"text", c.oblique_text}});
    return out;
}

bool is_model_token(std::string_view t) {
    bool digit = std::any_of(t.begin(), t.end(), [](char c) { return std::isdigit(static_cast<unsigned char>(c)); });
    return digit && t.size() >= 2;
}

bool is_capitalized(std::string_view t) {
    return !t.empty() && (std::isupper(static_cast<unsigned char>(t[0])) || static_cast<unsigned char>(t[0]) >= 0xC0);
}

}  // namespace

std::string ordinal(int n) {
    const int mod100 = n % 100;
    const char* suffix = "th";
    if (mod100 < 11 || mod100 > 13) {
        switch (n % 10) {
            case 1: suffix = "st"; break;
            case 2: suffix = "nd"; break;
            case 3: suffix = "rd"; break;
            default: break;
        }
    }
    return std::to_string(n) + suffix;
}

std::string era_phrase(int year) {
    const int within = ((year % 100) + 100) % 100;
    if (within <= 15) return "in the early " + ordinal(year / 100 + 1) + " century";
    const int decade = year - year % 10;
    const int digit = year % 10;
    const char* part = digit <= 3 ? "early" : digit <= 6 ? "mid" : "late";
    return std::string("in the ") + part + " " + std::to_string(decade) + "s";
}

AnchorTable AnchorTable::defaults() {
    AnchorTable t;
    t.phrases = {{"the U.S. Secretary of State", "a North American diplomatic authority"},
                 {"U.S. Secretary of State", "a North American diplomatic authority"},
                 {"Tokyo", "an East Asian capital"},
                 {"Osaka", "a major Japanese port city"}};
    t.type_descriptors = {{"person", "a public figure"},
                          {"location", "a certain place"},
                          {"organization", "a certain organization"},
                          {"event_misc", "a notable work or event"}};
    return t;
}

AnchorTable AnchorTable::from_json(const json& j) {
    AnchorTable t = defaults();
    if (auto p = j.find("phrases"); p != j.end()) {
        t.phrases.clear();
        for (const auto& [k, v] : p->items()) t.phrases.emplace_back(k, v.get<std::string>());
    }
    if (auto d = j.find("type_descriptors"); d != j.end()) {
        for (const auto& [k, v] : d->items()) t.type_descriptors[k] = v.get<std::string>();
    }
    return t;
}

void ForgeConfig::validate() const {
    if (n_deep < 0) fail(ErrorCode::Config, "n_deep must be >= 0");
    if (max_words < 1) fail(ErrorCode::Config, "max_words must be >= 1");
    if (probe_runs < 3 || probe_runs % 2 == 0) fail(ErrorCode::Config, "probe_runs must be odd and >= 3");
    if (max_rounds < 0) fail(ErrorCode::Config, "max_rounds must be >= 0");
    if (retry_limit < 0 || rewrite_retries < 0) fail(ErrorCode::Config, "retry limits must be >= 0");
}

std::string_view to_string(DraftStatus s) noexcept {
    switch (s) {
        case DraftStatus::draft: return "draft";
        case DraftStatus::probed: return "probed";
        case DraftStatus::hardened: return "hardened";
        case DraftStatus::accepted: return "accepted";
        case DraftStatus::rejected: return "rejected";
    }
    return "draft";
}

int QuestionDraft::deep_clue_count() const {
    return static_cast<int>(std::count_if(clues.begin(), clues.end(), [](const ClueSpec& c) { return c.depth >= 2; }));
}

std::vector<KillerPair> detect_killer_pairs(std::string_view question) {
    static const std::set<std::string> kLeadWords = {"which", "what", "who", "whom", "whose", "where", "when",
                                                     "this", "that", "these", "its", "it", "name", "identify",
                                                     "in", "on", "at", "during", "after", "before", "a", "an", "the"};
    static const std::regex kYear(R"(^(1[0-9]{3}|20[0-9]{2})$)");
    std::vector<KillerPair> out;
    std::size_t start = 0;
    auto flush = [&](std::size_t end) {
        std::string_view clause = question.substr(start, end - start);
        const auto tokens = text::word_tokens(clause);
        std::vector<std::string> anchors;
        std::size_t i = 0;
        while (i < tokens.size()) {
            std::string_view t = tokens[i].text;
            const bool year = std::regex_match(std::string(t), kYear);
            if (year) {
                anchors.emplace_back(t);
                ++i;
                continue;
            }
            if (!is_capitalized(t) && !is_model_token(t)) {
                ++i;
                continue;
            }
            std::size_t j = i + 1;
            while (j < tokens.size() && !std::regex_match(std::string(tokens[j].text), kYear) &&
                   (is_capitalized(tokens[j].text) || is_model_token(tokens[j].text)) &&
                   tokens[j].span.begin == tokens[j - 1].span.end + 1) {
                ++j;
            }
            std::string run(clause.substr(tokens[i].span.begin, tokens[j - 1].span.end - tokens[i].span.begin));
            const bool lone_lead = j == i + 1 && kLeadWords.count(text::case_fold(run)) != 0;
            if (!lone_lead) anchors.push_back(run);
            i = j;
        }
        if (anchors.size() >= 2) out.push_back({text::collapse_whitespace(clause), anchors});
    };
    for (std::size_t i = 0; i < question.size(); ++i) {
        const char c = question[i];
        const bool boundary = c == ',' || c == ';' || c == ':' || c == '(' || c == ')' || c == '?' || c == '!' ||
                              (c == '.' && (i + 1 == question.size() || question[i + 1] == ' '));
        if (boundary) {
            flush(i);
            start = i + 1;
        }
    }
    if (start < question.size()) flush(question.size());
    return out;
}

json to_json(const ClueSpec& c) {
    return {{"node_id", c.node_id}, {"depth", c.depth}, {"oblique_text", c.oblique_text}, {"uses_attributes", c.uses_attributes}};
}

json to_json(const QuestionDraft& d) {
    json clues = json::array();
    for (const auto& c : d.clues) clues.push_back(to_json(c));
    json out = {{"text", d.text},
                {"seed_answer", d.seed_answer},
                {"clues", clues},
                {"round", d.round},
                {"attempts", d.attempts},
                {"status", to_string(d.status)},
                {"word_count", d.word_count}};
    if (!d.rejection_reason.empty()) out["rejection_reason"] = d.rejection_reason;
    if (!d.verification_failures.empty()) out["verification_failures"] = d.verification_failures;
    return out;
}

json to_json(const ProbeResult& p) {
    return {{"answers", p.answers}, {"match_count", p.match_count}, {"solved", p.solved}};
}

json to_json(const RefineOutcome& r) {
    json rounds = json::array();
    for (const auto& rr : r.rounds) {
        rounds.push_back({{"round", rr.round},
                          {"text", rr.text},
                          {"probe", to_json(rr.probe)},
                          {"hardened", rr.hardened},
                          {"attempts", rr.attempts}});
    }
    return {{"draft", to_json(r.draft)}, {"rounds", rounds}};
}

// ---------------------------------------------------------------------------

QuestionForge::QuestionForge(const CorpusStore& store, ModelGateway& gateway, ForgeConfig config)
    : store_(store), gateway_(gateway), config_(std::move(config)) {
    config_.validate();
}

std::vector<std::string> QuestionForge::names_of(const GraphNode& node) const {
    std::vector<std::string> names{node.title};
    if (auto page = store_.find_page(node.title)) {
        for (const auto& a : page->aliases) names.push_back(a);
    }
    return names;
}

std::vector<std::string> QuestionForge::seed_names(const EvidenceGraph& graph) const { return names_of(graph.seed()); }

std::vector<std::string> QuestionForge::neighbor_names(const EvidenceGraph& graph) const {
    std::vector<std::string> out;
    for (const GraphNode* n : graph.layer(1)) {
        for (auto& name : names_of(*n)) out.push_back(std::move(name));
    }
    return out;
}

ClueSet QuestionForge::build_clues(const EvidenceGraph& graph) {
    if (graph.nodes.size() < 2) fail(ErrorCode::Precondition, "graph has no nodes beyond the seed");
    std::vector<const GraphNode*> order;
    for (const auto& n : graph.nodes) {
        if (n.id != graph.seed_id) order.push_back(&n);
    }
    std::stable_sort(order.begin(), order.end(), [](const GraphNode* a, const GraphNode* b) {
        return a->depth != b->depth ? a->depth > b->depth : a->id < b->id;
    });

    std::vector<std::string> banned = seed_names(graph);
    for (auto& n : neighbor_names(graph)) banned.push_back(std::move(n));

    ClueSet out;
    for (const GraphNode* node : order) {
        const GraphEdge* edge = graph.parent_edge(node->id);
        if (edge == nullptr) {
            out.dropped.push_back({node->id, "node has no parent edge"});
            continue;
        }
        std::string reason;
        bool done = false;
        for (int attempt = 0; attempt <= config_.retry_limit && !done; ++attempt) {
            json payload = {{"node", node->title},
                            {"node_type", node->type},
                            {"depth", node->depth},
                            {"parent", graph.node(edge->parent).title},
                            {"relation", to_string(edge->relation)},
                            {"direction", to_string(edge->direction)},
                            {"evidence", edge->evidence},
                            {"attributes", node->attributes},
                            {"banned", banned},
                            {"attempt", attempt}};
            try {
                json reply = gateway_.chat_json(prompts::messages(prompts::kClue, payload),
                                                prompts::response_schema(prompts::kClue));
                std::string clue = text::collapse_whitespace(reply["clue"].get<std::string>());
                if (auto leak = first_leak(clue, banned); !leak.empty()) {
                    reason = "clue mentions '" + leak + "'";
                    continue;
                }
                ClueSpec spec{node->id, node->depth, std::move(clue), {}};
                for (const auto& key : reply.value("attributes_used", std::vector<std::string>{})) {
                    if (node->attributes.count(key)) spec.uses_attributes.push_back(key);
                }
                out.clues.push_back(std::move(spec));
                done = true;
            } catch (const Error& e) {
                reason = e.what();
            }
        }
        if (!done) out.dropped.push_back({node->id, reason});
    }
    if (out.clues.empty()) fail(ErrorCode::Generation, "no clue survived generation");
    return out;
}

QuestionDraft QuestionForge::compose_question(const std::vector<ClueSpec>& clues, const EvidenceGraph& graph, int n_deep) {
    const auto deep = std::count_if(clues.begin(), clues.end(), [](const ClueSpec& c) { return c.depth >= 2; });
    if (deep < n_deep) {
        fail(ErrorCode::Precondition, "need " + std::to_string(n_deep) + " deep clues, have " + std::to_string(deep) +
                                          " (short by " + std::to_string(n_deep - deep) + ")");
    }
    const auto banned = seed_names(graph);
    std::string reason;
    for (int attempt = 0; attempt <= config_.retry_limit; ++attempt) {
        json payload = {{"clues", clue_payload(clues)},
                        {"answer_type", graph.seed().type},
                        {"seed_attributes", graph.seed().attributes},
                        {"banned", banned},
                        {"max_words", config_.max_words},
                        {"attempt", attempt}};
        try {
            json reply = gateway_.chat_json(prompts::messages(prompts::kCompose, payload),
                                            prompts::response_schema(prompts::kCompose));
            std::string question = text::collapse_whitespace(reply["question"].get<std::string>());
            if (auto leak = first_leak(question, banned); !leak.empty()) {
                reason = "question names the answer ('" + leak + "')";
                continue;
            }
            const std::size_t words = text::word_count(question);
            if (words > config_.max_words) {
                reason = "question has " + std::to_string(words) + " words, limit " + std::to_string(config_.max_words);
                continue;
            }
            QuestionDraft d;
            d.text = std::move(question);
            d.seed_answer = graph.seed().title;
            d.clues = clues;
            d.word_count = words;
            return d;
        } catch (const Error& e) {
            if (e.code() != ErrorCode::SchemaViolation && e.code() != ErrorCode::Gateway) throw;
            reason = e.what();
        }
    }
    fail(ErrorCode::Generation, "compose failed: " + reason);
}

QuestionDraft QuestionForge::obfuscate(const QuestionDraft& draft, const EvidenceGraph& graph) {
    if (draft.status != DraftStatus::draft) fail(ErrorCode::Precondition, "obfuscate expects a draft");
    std::string s = draft.text;

    auto phrases = config_.anchors.phrases;
    std::stable_sort(phrases.begin(), phrases.end(),
                     [](const auto& a, const auto& b) { return a.first.size() > b.first.size(); });
    for (const auto& [from, to] : phrases) s = text::replace_all_ci(s, from, to);

    static const std::regex kYear(R"(\b(?:(in|In|during|During|since|Since|from|From|by|By|around|Around|until|Until) )?((?:1[0-9]|20)[0-9]{2})\b)");
    std::string rebuilt;
    auto begin = std::sregex_iterator(s.begin(), s.end(), kYear);
    std::size_t last = 0;
    for (auto it = begin; it != std::sregex_iterator(); ++it) {
        const auto& m = *it;
        rebuilt.append(s, last, static_cast<std::size_t>(m.position(0)) - last);
        std::string era = era_phrase(std::stoi(m[2].str()));  // "in the ..."
        std::string prep = m[1].matched ? m[1].str() : "";
        if (prep.empty() || text::case_fold(prep) == "in") {
            if (!prep.empty() && std::isupper(static_cast<unsigned char>(prep[0]))) era[0] = 'I';
            rebuilt += era;
        } else {
            rebuilt += prep + " " + era.substr(3);
        }
        last = static_cast<std::size_t>(m.position(0) + m.length(0));
    }
    rebuilt.append(s, last, std::string::npos);
    s = rebuilt;

    std::vector<std::string> generalized;
    for (const auto& n : graph.nodes) {
        if (n.id == graph.seed_id) continue;
        auto it = config_.anchors.type_descriptors.find(n.type);
        const std::string descriptor = it != config_.anchors.type_descriptors.end() ? it->second : "a certain entity";
        for (const auto& name : names_of(n)) {
            if (text::contains_word_ci(s, name)) {
                s = text::replace_all_ci(s, name, descriptor);
                generalized.push_back(name);
            }
        }
    }

    std::vector<std::string> banned = seed_names(graph);
    banned.insert(banned.end(), generalized.begin(), generalized.end());
    std::string reason;
    for (int attempt = 0; attempt <= config_.retry_limit; ++attempt) {
        try {
            json reply = gateway_.chat_json(
                prompts::messages(prompts::kParaphrase, {{"question", s}, {"attempt", attempt}}),
                prompts::response_schema(prompts::kParaphrase));
            std::string out = text::collapse_whitespace(reply["question"].get<std::string>());
            if (auto leak = first_leak(out, banned); !leak.empty()) {
                reason = "paraphrase reintroduced '" + leak + "'";
                continue;
            }
            if (text::word_count(out) > config_.max_words) {
                reason = "paraphrase exceeds max_words";
                continue;
            }
            QuestionDraft d = draft;
            d.text = std::move(out);
            d.word_count = text::word_count(d.text);
            return d;
        } catch (const Error& e) {
            if (e.code() != ErrorCode::SchemaViolation && e.code() != ErrorCode::Gateway) throw;
            reason = e.what();
        }
    }
    fail(ErrorCode::Generation, "obfuscation failed: " + reason);
}

ProbeResult QuestionForge::probe_solvability(const QuestionDraft& draft, int runs) {
    if (runs < 3 || runs % 2 == 0) fail(ErrorCode::Precondition, "probe runs must be odd and >= 3");
    const std::string seed_key = text::canonicalize(store_.try_resolve(draft.seed_answer).value_or(draft.seed_answer));
    ProbeResult r;
    for (int run = 0; run < runs; ++run) {
        std::string answer;
        try {
            json reply = gateway_.chat_json(prompts::messages(prompts::kAnswer, {{"question", draft.text}, {"run", run}}),
                                            prompts::response_schema(prompts::kAnswer));
            answer = reply["answer"].get<std::string>();
        } catch (const Error& e) {
            spdlog::warn("probe run {} failed, counted as non-match: {}", run, e.what());
        }
        const std::string key = text::canonicalize(store_.try_resolve(answer).value_or(answer));
        if (!key.empty() && key == seed_key) ++r.match_count;
        r.answers.push_back(std::move(answer));
    }
    r.solved = 2 * r.match_count > runs;
    return r;
}

std::vector<int> QuestionForge::select_subgraph(const QuestionDraft& draft, const EvidenceGraph& graph) const {
    std::vector<const ClueSpec*> deep;
    for (const auto& c : draft.clues) {
        if (c.depth >= 2) deep.push_back(&c);
    }
    std::stable_sort(deep.begin(), deep.end(), [](const ClueSpec* a, const ClueSpec* b) {
        return a->depth != b->depth ? a->depth > b->depth : a->node_id < b->node_id;
    });
    const auto take = std::min<std::size_t>(deep.size(), static_cast<std::size_t>(std::max(config_.n_deep, 0)));
    std::set<int> ids;
    for (std::size_t i = 0; i < take; ++i) {
        for (int id : graph.path_from_seed(deep[i]->node_id)) ids.insert(id);
    }
    return {ids.begin(), ids.end()};
}

QuestionDraft QuestionForge::harden(const QuestionDraft& draft, const EvidenceGraph& graph) {
    QuestionDraft d = draft;
    if (leaks(d.text, seed_names(graph))) fail(ErrorCode::Precondition, "draft already names the answer");

    // (1) subgraph: core axis plus deep cues
    const auto subgraph = select_subgraph(d, graph);
    const std::set<int> in_sub(subgraph.begin(), subgraph.end());
    std::vector<ClueSpec> sub_clues;
    for (const auto& c : d.clues) {
        if (in_sub.count(c.node_id)) sub_clues.push_back(c);
    }

    std::vector<std::string> killer_terms;
    for (const auto& kp : detect_killer_pairs(d.text)) {
        for (const auto& a : kp.anchors) {
            if (std::find(killer_terms.begin(), killer_terms.end(), a) == killer_terms.end()) killer_terms.push_back(a);
        }
    }
    const auto seeds = seed_names(graph);
    const auto neighbors = neighbor_names(graph);
    std::vector<std::string> banned = seeds;
    banned.insert(banned.end(), neighbors.begin(), neighbors.end());
    banned.insert(banned.end(), killer_terms.begin(), killer_terms.end());

    const std::string checkpoint = d.text;
    for (int attempt = 0; attempt <= config_.rewrite_retries; ++attempt) {
        d.text = checkpoint;  // rollback point
        ++d.attempts;
        std::vector<std::string> failures;

        // (2) implicit regeneration
        std::string candidate;
        try {
            json reply = gateway_.chat_json(prompts::messages(prompts::kRewrite, {{"question", checkpoint},
                                                                                  {"clues", clue_payload(sub_clues)},
                                                                                  {"banned", banned},
                                                                                  {"max_words", config_.max_words},
                                                                                  {"round", d.round},
                                                                                  {"attempt", attempt}}),
                                            prompts::response_schema(prompts::kRewrite));
            candidate = text::collapse_whitespace(reply["question"].get<std::string>());
        } catch (const Error& e) {
            if (e.code() != ErrorCode::SchemaViolation && e.code() != ErrorCode::Gateway) throw;
            failures.push_back(std::string("generation: ") + e.what());
        }

        // (3) self-verification
        if (failures.empty()) {
            const auto deep = std::count_if(sub_clues.begin(), sub_clues.end(), [](const ClueSpec& c) { return c.depth >= 2; });
            if (deep < config_.n_deep) {
                failures.push_back("cue count: " + std::to_string(deep) + " deep cues, need " + std::to_string(config_.n_deep));
            }
            if (auto leak = first_leak(candidate, seeds); !leak.empty()) failures.push_back("alias: names answer '" + leak + "'");
            if (auto leak = first_leak(candidate, neighbors); !leak.empty()) failures.push_back("alias: names neighbor '" + leak + "'");
            for (const auto& term : killer_terms) {
                if (text::contains_word_ci(candidate, term)) failures.push_back("killer pair term '" + term + "' kept");
            }
            for (const auto& c : sub_clues) {
                const GraphEdge* e = graph.parent_edge(c.node_id);
                if (e == nullptr || !in_sub.count(e->parent)) failures.push_back("coherence: clue node " + std::to_string(c.node_id) + " has no subgraph edge");
            }
            const std::size_t words = text::word_count(candidate);
            if (words > config_.max_words) failures.push_back("length: " + std::to_string(words) + " words");
            if (candidate.empty()) failures.push_back("empty rewrite");
        }

        if (failures.empty()) {
            d.text = std::move(candidate);
            d.word_count = text::word_count(d.text);
            d.clues = std::move(sub_clues);
            d.round += 1;
            d.status = DraftStatus::hardened;
            return d;
        }
        // (4) roll back and regenerate
        for (auto& f : failures) d.verification_failures.push_back("attempt " + std::to_string(d.attempts) + ": " + f);
    }
    d.text = checkpoint;
    d.status = DraftStatus::rejected;
    d.rejection_reason = "hardening retries exhausted";
    return d;
}

RefineOutcome QuestionForge::refine_loop(const QuestionDraft& draft, const EvidenceGraph& graph, int max_rounds) {
    RefineOutcome out{draft, {}};
    QuestionDraft& d = out.draft;
    while (d.round < max_rounds) {
        RoundRecord rec;
        rec.round = d.round;
        rec.text = d.text;
        rec.probe = probe_solvability(d, config_.probe_runs);
        d.status = DraftStatus::probed;
        if (!rec.probe.solved) {
            out.rounds.push_back(std::move(rec));
            break;
        }
        const int before = d.attempts;
        d = harden(d, graph);
        rec.hardened = d.status == DraftStatus::hardened;
        rec.attempts = d.attempts - before;
        out.rounds.push_back(std::move(rec));
        if (d.status == DraftStatus::rejected) return out;
    }
    d.status = DraftStatus::hardened;
    return out;
}

}  // namespace hopforge
