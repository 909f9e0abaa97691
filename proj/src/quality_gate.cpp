#include <hopforge/quality_gate.hpp>

#include <hopforge/error.hpp>
#include <hopforge/node_builder.hpp>
#include <hopforge/prompts.hpp>
#include <hopforge/text.hpp>

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <deque>
#include <regex>
#include <set>
#include <tuple>

namespace hopforge {

using nlohmann::json;

// ---- enums -----------------------------------------------------------------

std::string_view to_string(StructureKind k) noexcept {
    switch (k) {
        case StructureKind::Subject: return "subject";
        case StructureKind::Object: return "object";
        case StructureKind::Attribute: return "attribute";
    }
    return "object";
}

StructureKind parse_structure_kind(std::string_view s) {
    if (s == "subject") return StructureKind::Subject;
    if (s == "object") return StructureKind::Object;
    if (s == "attribute") return StructureKind::Attribute;
    fail(ErrorCode::SchemaViolation, "unknown structure node kind '" + std::string(s) + "'");
}

std::string_view to_string(PredicateOp op) noexcept {
    switch (op) {
        case PredicateOp::Equals: return "equals";
        case PredicateOp::Within: return "within";
        case PredicateOp::Contains: return "contains";
        case PredicateOp::Category: return "category";
    }
    return "equals";
}

PredicateOp parse_predicate_op(std::string_view s) {
    if (s == "equals") return PredicateOp::Equals;
    if (s == "within") return PredicateOp::Within;
    if (s == "contains") return PredicateOp::Contains;
    if (s == "category") return PredicateOp::Category;
    fail(ErrorCode::SchemaViolation, "unknown predicate operator '" + std::string(s) + "'");
}

std::string_view to_string(ScreenOutcome s) noexcept {
    switch (s) {
        case ScreenOutcome::Satisfied: return "satisfied";
        case ScreenOutcome::Failed: return "failed";
        case ScreenOutcome::NotEvaluable: return "not_evaluable";
    }
    return "not_evaluable";
}

namespace {
ScreenOutcome parse_screen_outcome(std::string_view s) {
    if (s == "satisfied") return ScreenOutcome::Satisfied;
    if (s == "failed") return ScreenOutcome::Failed;
    if (s == "not_evaluable") return ScreenOutcome::NotEvaluable;
    fail(ErrorCode::InvalidInput, "unknown screening outcome '" + std::string(s) + "'");
}
}  // namespace

std::string_view to_string(Verdict v) noexcept {
    switch (v) {
        case Verdict::Y: return "Y";
        case Verdict::P: return "P";
        case Verdict::U: return "U";
        case Verdict::N: return "N";
    }
    return "U";
}

Verdict parse_verdict(std::string_view s) {
    if (s == "Y") return Verdict::Y;
    if (s == "P") return Verdict::P;
    if (s == "U") return Verdict::U;
    if (s == "N") return Verdict::N;
    fail(ErrorCode::SchemaViolation, "unknown verdict '" + std::string(s) + "'");
}

double verdict_value(Verdict v) noexcept {
    switch (v) {
        case Verdict::Y: return 1.0;
        case Verdict::P: return 0.5;
        case Verdict::U:
        case Verdict::N: return 0.0;
    }
    return 0.0;
}

std::string_view to_string(Decision d) noexcept {
    switch (d) {
        case Decision::AcceptedAtVote: return "accepted_at_vote";
        case Decision::AcceptedAtScreening: return "accepted_at_screening";
        case Decision::AcceptedAtMatching: return "accepted_at_matching";
        case Decision::Rejected: return "rejected";
    }
    return "rejected";
}

Decision parse_decision(std::string_view s) {
    if (s == "accepted_at_vote") return Decision::AcceptedAtVote;
    if (s == "accepted_at_screening") return Decision::AcceptedAtScreening;
    if (s == "accepted_at_matching") return Decision::AcceptedAtMatching;
    if (s == "rejected") return Decision::Rejected;
    fail(ErrorCode::InvalidInput, "unknown decision '" + std::string(s) + "'");
}

// ---- structure -------------------------------------------------------------

void TextStructureGraph::validate() const {
    std::set<std::string> ids;
    for (const auto& n : nodes) {
        if (n.id.empty()) fail(ErrorCode::SchemaViolation, "structure node with empty id");
        if (!ids.insert(n.id).second) fail(ErrorCode::SchemaViolation, "duplicate structure node id '" + n.id + "'");
    }
    for (const auto& e : edges) {
        if (!ids.count(e.from) || !ids.count(e.to)) {
            fail(ErrorCode::SchemaViolation, "structure edge " + e.from + " -> " + e.to + " has a missing endpoint");
        }
    }
}

json to_json(const TextStructureGraph& g) {
    json nodes = json::array();
    for (const auto& n : g.nodes) nodes.push_back({{"id", n.id}, {"label", n.label}, {"kind", to_string(n.kind)}});
    json edges = json::array();
    for (const auto& e : g.edges) edges.push_back({{"from", e.from}, {"to", e.to}, {"relation", to_string(e.relation)}});
    return {{"nodes", nodes}, {"edges", edges}};
}

TextStructureGraph structure_from_json(const json& j) {
    TextStructureGraph g;
    for (const auto& n : j.at("nodes")) {
        g.nodes.push_back({n.at("id").get<std::string>(), n.at("label").get<std::string>(),
                           parse_structure_kind(n.at("kind").get<std::string>())});
    }
    for (const auto& e : j.at("edges")) {
        const auto name = e.at("relation").get<std::string>();
        auto rel = parse_relation(name);
        if (!rel) fail(ErrorCode::SchemaViolation, "unknown structure relation '" + name + "'");
        g.edges.push_back({e.at("from").get<std::string>(), e.at("to").get<std::string>(), *rel});
    }
    g.validate();
    return g;
}

StructureMetrics compute_metrics(const TextStructureGraph& g, const StructureThresholds& t) {
    StructureMetrics m;
    const std::size_t n = g.nodes.size();
    std::map<std::string, std::size_t> index;
    for (std::size_t i = 0; i < n; ++i) index.emplace(g.nodes[i].id, i);
    std::vector<std::vector<std::size_t>> adj(n);
    for (const auto& e : g.edges) {
        const auto a = index.at(e.from);
        const auto b = index.at(e.to);
        adj[a].push_back(b);
        adj[b].push_back(a);
    }

    auto bfs = [&](std::size_t from) {
        std::vector<int> dist(n, -1);
        std::deque<std::size_t> q{from};
        dist[from] = 0;
        while (!q.empty()) {
            const auto u = q.front();
            q.pop_front();
            for (auto v : adj[u]) {
                if (dist[v] < 0) {
                    dist[v] = dist[u] + 1;
                    q.push_back(v);
                }
            }
        }
        return dist;
    };

    std::vector<int> component(n, -1);
    std::vector<std::size_t> sizes;
    for (std::size_t i = 0; i < n; ++i) {
        if (component[i] >= 0) continue;
        const auto dist = bfs(i);
        std::size_t size = 0;
        for (std::size_t v = 0; v < n; ++v) {
            if (dist[v] >= 0) {
                component[v] = static_cast<int>(sizes.size());
                ++size;
            }
        }
        sizes.push_back(size);
    }

    if (n > 0) {
        const auto largest = static_cast<int>(std::max_element(sizes.begin(), sizes.end()) - sizes.begin());
        m.orphan_count = static_cast<int>(n - sizes[largest]);
        for (std::size_t i = 0; i < n; ++i) {
            if (component[i] != largest) continue;
            for (int d : bfs(i)) m.diameter = std::max(m.diameter, d);
        }
    }
    m.attribute_count = static_cast<int>(std::count_if(g.nodes.begin(), g.nodes.end(), [](const StructureNode& s) {
        return s.kind == StructureKind::Attribute;
    }));
    m.edge_count = static_cast<int>(g.edges.size());
    m.pass = m.orphan_count == 0 && m.attribute_count >= t.alpha && m.edge_count >= t.beta && m.diameter >= t.gamma;
    return m;
}

// ---- predicates ------------------------------------------------------------

json to_json(const NormalizedValue& v) {
    switch (v.kind) {
        case NormalizedValue::Kind::Interval: return {{"interval", {v.lo, v.hi}}};
        case NormalizedValue::Kind::RegionHint: return {{"region_hint", v.text}};
        case NormalizedValue::Kind::Category: return {{"category", v.text}};
    }
    return nullptr;
}

NormalizedValue normalized_from_json(const json& j) {
    if (j.contains("interval")) return NormalizedValue::interval(j["interval"].at(0).get<int>(), j["interval"].at(1).get<int>());
    if (j.contains("region_hint")) return NormalizedValue::region(j["region_hint"].get<std::string>());
    if (j.contains("category")) return NormalizedValue::category(j["category"].get<std::string>());
    fail(ErrorCode::InvalidInput, "unrecognized normalized value " + j.dump());
}

json to_json(const StructuredPredicate& p) {
    json out = {{"field", p.field},
                {"operator", to_string(p.op)},
                {"value", p.value},
                {"normalized", p.normalized ? to_json(*p.normalized) : json(nullptr)},
                {"source_span", {p.source_span.first, p.source_span.second}},
                {"confidence", p.confidence},
                {"priority_weight", p.priority_weight}};
    if (!p.normalized) out["null_reason"] = p.null_reason;
    if (!p.attribute.empty()) out["attribute"] = p.attribute;
    return out;
}

StructuredPredicate predicate_from_json(const json& j) {
    StructuredPredicate p;
    p.field = j.at("field").get<std::string>();
    p.op = parse_predicate_op(j.at("operator").get<std::string>());
    p.value = j.at("value").get<std::string>();
    if (!j.at("normalized").is_null()) p.normalized = normalized_from_json(j["normalized"]);
    p.null_reason = j.value("null_reason", "");
    p.source_span = {j.at("source_span").at(0).get<std::size_t>(), j.at("source_span").at(1).get<std::size_t>()};
    p.confidence = j.at("confidence").get<double>();
    p.priority_weight = j.at("priority_weight").get<double>();
    p.attribute = j.value("attribute", "");
    return p;
}

NormalizationTable NormalizationTable::from_json(const json& j) {
    NormalizationTable t;
    auto parts = [](const json& src, std::map<std::string, std::pair<int, int>>& dst) {
        for (const auto& [k, v] : src.items()) dst[k] = {v.at(0).get<int>(), v.at(1).get<int>()};
    };
    if (j.contains("decade_parts")) parts(j["decade_parts"], t.decade_parts);
    if (j.contains("century_parts")) parts(j["century_parts"], t.century_parts);
    if (j.contains("region_words")) {
        t.region_words.clear();
        for (const auto& [k, v] : j["region_words"].items()) t.region_words[text::case_fold(k)] = v.get<std::string>();
    }
    if (j.contains("high_priority_fields")) t.high_priority_fields = j["high_priority_fields"].get<std::vector<std::string>>();
    return t;
}

std::optional<std::pair<int, int>> normalize_time(std::string_view phrase, const NormalizationTable& table) {
    const std::string s = text::case_fold(phrase);
    static const std::regex kDecade(R"((?:\b([a-z]+)[- ]+)?\b(\d{3}0)s\b)");
    static const std::regex kCentury(R"((?:\b([a-z]+)[- ]+)?\b(\d{1,2})(?:st|nd|rd|th)[- ]+century\b)");
    static const std::regex kYear(R"(\b(1\d{3}|20\d{2})\b)");
    std::smatch m;
    if (std::regex_search(s, m, kDecade)) {
        const int decade = std::stoi(m[2].str());
        if (m[1].matched) {
            if (auto it = table.decade_parts.find(m[1].str()); it != table.decade_parts.end()) {
                return std::make_pair(decade + it->second.first, decade + it->second.second);
            }
        }
        return std::make_pair(decade, decade + 9);
    }
    if (std::regex_search(s, m, kCentury)) {
        const int base = (std::stoi(m[2].str()) - 1) * 100;
        if (m[1].matched) {
            if (auto it = table.century_parts.find(m[1].str()); it != table.century_parts.end()) {
                return std::make_pair(base + it->second.first, base + it->second.second);
            }
        }
        return std::make_pair(base, base + 99);
    }
    std::vector<int> years;
    for (auto it = std::sregex_iterator(s.begin(), s.end(), kYear); it != std::sregex_iterator(); ++it) {
        years.push_back(std::stoi((*it)[1].str()));
    }
    if (years.empty()) return std::nullopt;
    const auto [lo, hi] = std::minmax_element(years.begin(), years.end());
    return std::make_pair(*lo, *hi);
}

namespace {

std::string field_key(std::string_view s) {
    std::string out = text::canonicalize(s);
    std::replace(out.begin(), out.end(), '_', ' ');
    return out;
}

bool is_high_priority(std::string_view field, const NormalizationTable& table) {
    const auto key = field_key(field);
    return std::any_of(table.high_priority_fields.begin(), table.high_priority_fields.end(),
                       [&](const std::string& f) { return field_key(f) == key; });
}

}  // namespace

void normalize_predicate(StructuredPredicate& p, const NormalizationTable& table) {
    p.priority_weight = is_high_priority(p.field, table) ? 2.0 : 1.0;
    p.normalized.reset();
    p.null_reason.clear();
    const auto field = field_key(p.field);
    if (field == "residual") {
        p.null_reason = "uncovered text";
        return;
    }
    if (auto interval = normalize_time(p.value, table)) {
        p.normalized = NormalizedValue::interval(interval->first, interval->second);
        return;
    }
    if (field == "time") {
        p.null_reason = "time phrase not in normalization table";
        return;
    }
    if (field == "location") {
        for (const auto& tok : text::word_tokens(p.value)) {
            auto it = table.region_words.find(text::case_fold(tok.text));
            if (it != table.region_words.end()) {
                p.normalized = NormalizedValue::region(it->second);
                return;
            }
        }
    }
    const auto category = text::canonicalize(p.value);
    if (category.empty()) {
        p.null_reason = "empty value";
        return;
    }
    p.normalized = NormalizedValue::category(category);
}

void append_residuals(std::string_view question, std::vector<StructuredPredicate>& predicates) {
    std::vector<std::pair<std::size_t, std::size_t>> covered;
    for (const auto& p : predicates) {
        const auto b = text::byte_offset(question, p.source_span.first);
        const auto e = text::byte_offset(question, p.source_span.second);
        if (b != std::string_view::npos && e != std::string_view::npos && b < e) covered.emplace_back(b, e);
    }
    auto is_covered = [&](const text::Token& t) {
        return std::any_of(covered.begin(), covered.end(), [&](const auto& c) {
            return t.span.begin < c.second && c.first < t.span.end;
        });
    };
    auto emit = [&](std::size_t b, std::size_t e) {
        StructuredPredicate r;
        r.field = "residual";
        r.op = PredicateOp::Contains;
        r.value = std::string(question.substr(b, e - b));
        r.source_span = {text::code_point_index(question, b), text::code_point_index(question, e)};
        r.null_reason = "uncovered text";
        predicates.push_back(std::move(r));
    };

    bool open = false;
    std::size_t run_begin = 0;
    std::size_t run_end = 0;
    for (const auto& tok : text::word_tokens(question)) {
        if (is_covered(tok)) {
            if (open) emit(run_begin, run_end);
            open = false;
            continue;
        }
        if (text::is_stopword(text::case_fold(tok.text))) continue;
        if (!open) run_begin = tok.span.begin;
        run_end = tok.span.end;
        open = true;
    }
    if (open) emit(run_begin, run_end);
}

// ---- screening and aggregation ---------------------------------------------

std::vector<std::string> attribute_keys(const StructuredPredicate& p) {
    if (!p.attribute.empty()) return {p.attribute};
    const auto field = field_key(p.field);
    if (field == "time") return {"inception", "founded", "founding year", "founding date", "established", "year", "date"};
    if (field == "location") return {"location", "headquarters", "hub", "region", "country"};
    if (field == "entity type") return {"entity type", "instance of", "type"};
    return {p.field};
}

ScreenOutcome screen_predicate(const StructuredPredicate& p, const AttributeMap& attributes) {
    if (!p.normalized) return ScreenOutcome::NotEvaluable;
    std::vector<std::string> values;
    for (const auto& key : attribute_keys(p)) {
        const auto want = field_key(key);
        for (const auto& [k, v] : attributes) {
            if (field_key(k) == want) values.push_back(v);
        }
    }
    static const std::regex kYear(R"(\b(1\d{3}|20\d{2})\b)");
    const NormalizedValue& n = *p.normalized;
    bool evaluated = false;
    for (const auto& v : values) {
        switch (n.kind) {
            case NormalizedValue::Kind::Interval:
                for (auto it = std::sregex_iterator(v.begin(), v.end(), kYear); it != std::sregex_iterator(); ++it) {
                    evaluated = true;
                    const int y = std::stoi((*it)[1].str());
                    if (y >= n.lo && y <= n.hi) return ScreenOutcome::Satisfied;
                }
                break;
            case NormalizedValue::Kind::RegionHint:
                evaluated = true;
                if (text::contains_ci(v, n.text)) return ScreenOutcome::Satisfied;
                break;
            case NormalizedValue::Kind::Category: {
                evaluated = true;
                const auto canon = text::canonicalize(v);
                if (text::contains_word_ci(canon, n.text) || text::contains_word_ci(n.text, canon)) {
                    return ScreenOutcome::Satisfied;
                }
                break;
            }
        }
    }
    return evaluated ? ScreenOutcome::Failed : ScreenOutcome::NotEvaluable;
}

double s_norm(const std::vector<VerdictRecord>& verdicts, const std::vector<StructuredPredicate>& predicates) {
    double num = 0.0;
    double den = 0.0;
    for (const auto& v : verdicts) {
        const double w = predicates.at(static_cast<std::size_t>(v.index)).priority_weight;
        num += w * verdict_value(v.verdict);
        den += w;
    }
    return den > 0.0 ? num / den : 0.0;
}

std::optional<int> eliminating_predicate(const std::vector<VerdictRecord>& verdicts,
                                         const std::vector<StructuredPredicate>& predicates, double cutoff) {
    std::optional<int> first;
    for (const auto& v : verdicts) {
        if (v.verdict != Verdict::N) continue;
        if (predicates.at(static_cast<std::size_t>(v.index)).priority_weight >= cutoff && (!first || v.index < *first)) {
            first = v.index;
        }
    }
    return first;
}

// ---- report ----------------------------------------------------------------

namespace {

json probe_json(const ProbeResult& p) { return to_json(p); }

ProbeResult probe_from_json(const json& j) {
    return {j.at("answers").get<std::vector<std::string>>(), j.at("match_count").get<int>(), j.at("solved").get<bool>()};
}

double s_exp_of(const std::vector<ScreenOutcome>& outcomes) {
    const auto sat = std::count(outcomes.begin(), outcomes.end(), ScreenOutcome::Satisfied);
    const auto failed = std::count(outcomes.begin(), outcomes.end(), ScreenOutcome::Failed);
    return sat + failed > 0 ? static_cast<double>(sat) / static_cast<double>(sat + failed) : 0.0;
}

bool discarded_by(const std::vector<ScreenOutcome>& outcomes) {
    return std::find(outcomes.begin(), outcomes.end(), ScreenOutcome::Failed) != outcomes.end();
}

// Decision reachable from screening alone, if any.
std::optional<std::pair<Decision, std::string>> screening_decision(const std::vector<CandidateRecord>& records) {
    if (records.empty()) return std::make_pair(Decision::Rejected, std::string("no candidates recorded"));
    const CandidateRecord& seed = records.front();
    if (discarded_by(seed.screening)) return std::make_pair(Decision::Rejected, std::string("seed failed explicit constraints"));
    const double seed_exp = s_exp_of(seed.screening);
    bool others = false;
    bool seed_highest = true;
    for (std::size_t i = 1; i < records.size(); ++i) {
        if (discarded_by(records[i].screening)) continue;
        others = true;
        if (s_exp_of(records[i].screening) >= seed_exp) seed_highest = false;
    }
    if (!others) return std::make_pair(Decision::AcceptedAtScreening, std::string("only the seed survives screening"));
    if (seed_highest) return std::make_pair(Decision::AcceptedAtScreening, std::string("seed has the uniquely highest S_exp"));
    return std::nullopt;
}

}  // namespace

json to_json(const QualityReport& r) {
    json structure = {{"graph", r.structure ? to_json(*r.structure) : json(nullptr)},
                      {"orphan_count", r.metrics.orphan_count},
                      {"attribute_count", r.metrics.attribute_count},
                      {"edge_count", r.metrics.edge_count},
                      {"diameter", r.metrics.diameter},
                      {"pass", r.metrics.pass}};
    if (!r.structure_error.empty()) structure["error"] = r.structure_error;
    json predicates = json::array();
    for (const auto& p : r.predicates) predicates.push_back(to_json(p));
    json candidates = json::array();
    for (const auto& c : r.candidates) {
        json screening = json::array();
        for (auto s : c.screening) screening.push_back(to_string(s));
        json verdicts = json::array();
        for (const auto& v : c.verdicts) {
            verdicts.push_back({{"index", v.index},
                                {"verdict", to_string(v.verdict)},
                                {"evidence_ref", v.evidence_ref},
                                {"justification", v.justification}});
        }
        candidates.push_back({{"title", c.title},
                              {"resolved", c.resolved},
                              {"screening", screening},
                              {"S_exp", c.s_exp},
                              {"discarded", c.discarded},
                              {"matched", c.matched},
                              {"verdicts", verdicts},
                              {"S_norm", c.s_norm},
                              {"eliminated_by", c.eliminated_by ? json(*c.eliminated_by) : json(nullptr)}});
    }
    json out = {{"question", r.question},
                {"seed", r.seed},
                {"thresholds", {{"alpha", r.thresholds.alpha}, {"beta", r.thresholds.beta}, {"gamma", r.thresholds.gamma}}},
                {"high_priority_cutoff", r.high_priority_cutoff},
                {"structure", structure},
                {"vote", r.vote ? probe_json(*r.vote) : json(nullptr)},
                {"vote_candidates", r.vote_candidates},
                {"predicates", predicates},
                {"candidates", candidates},
                {"decision", to_string(r.decision)},
                {"reason", r.reason}};
    if (!r.decomposition_error.empty()) out["decomposition_error"] = r.decomposition_error;
    return out;
}

QualityReport report_from_json(const json& j) {
    QualityReport r;
    r.question = j.at("question").get<std::string>();
    r.seed = j.at("seed").get<std::string>();
    const auto& t = j.at("thresholds");
    r.thresholds = {t.at("alpha").get<int>(), t.at("beta").get<int>(), t.at("gamma").get<int>()};
    r.high_priority_cutoff = j.at("high_priority_cutoff").get<double>();
    const auto& s = j.at("structure");
    if (!s.at("graph").is_null()) r.structure = structure_from_json(s["graph"]);
    r.metrics = {s.at("orphan_count").get<int>(), s.at("attribute_count").get<int>(), s.at("edge_count").get<int>(),
                 s.at("diameter").get<int>(), s.at("pass").get<bool>()};
    r.structure_error = s.value("error", "");
    if (!j.at("vote").is_null()) r.vote = probe_from_json(j["vote"]);
    r.vote_candidates = j.at("vote_candidates").get<std::vector<std::string>>();
    for (const auto& p : j.at("predicates")) r.predicates.push_back(predicate_from_json(p));
    r.decomposition_error = j.value("decomposition_error", "");
    for (const auto& c : j.at("candidates")) {
        CandidateRecord rec;
        rec.title = c.at("title").get<std::string>();
        rec.resolved = c.at("resolved").get<bool>();
        for (const auto& o : c.at("screening")) rec.screening.push_back(parse_screen_outcome(o.get<std::string>()));
        rec.s_exp = c.at("S_exp").get<double>();
        rec.discarded = c.at("discarded").get<bool>();
        rec.matched = c.at("matched").get<bool>();
        for (const auto& v : c.at("verdicts")) {
            rec.verdicts.push_back({v.at("index").get<int>(), parse_verdict(v.at("verdict").get<std::string>()),
                                    v.value("evidence_ref", ""), v.value("justification", "")});
        }
        rec.s_norm = c.at("S_norm").get<double>();
        if (!c.at("eliminated_by").is_null()) rec.eliminated_by = c["eliminated_by"].get<int>();
        r.candidates.push_back(std::move(rec));
    }
    r.decision = parse_decision(j.at("decision").get<std::string>());
    r.reason = j.at("reason").get<std::string>();
    return r;
}

std::pair<Decision, std::string> decide(const QualityReport& r) {
    if (!r.structure_error.empty()) return {Decision::Rejected, "structure extraction failed: " + r.structure_error};
    if (!r.structure) return {Decision::Rejected, "no structure recorded"};
    const auto m = compute_metrics(*r.structure, r.thresholds);
    if (!m.pass) {
        return {Decision::Rejected, "structure screening failed (orphans " + std::to_string(m.orphan_count) + ", T_a " +
                                        std::to_string(m.attribute_count) + ", T_e " + std::to_string(m.edge_count) +
                                        ", T_d " + std::to_string(m.diameter) + ")"};
    }
    if (!r.vote) return {Decision::Rejected, "no vote recorded"};
    if (2 * static_cast<std::size_t>(r.vote->match_count) > r.vote->answers.size()) {
        return {Decision::AcceptedAtVote, "majority of predictions match the seed"};
    }
    if (!r.decomposition_error.empty()) return {Decision::Rejected, "constraint decomposition failed: " + r.decomposition_error};
    if (auto early = screening_decision(r.candidates)) return *early;

    const CandidateRecord& seed = r.candidates.front();
    if (!seed.matched) return {Decision::Rejected, "seed never reached evidence matching"};
    if (eliminating_predicate(seed.verdicts, r.predicates, r.high_priority_cutoff)) {
        return {Decision::Rejected, "seed contradicted"};
    }
    const double seed_score = s_norm(seed.verdicts, r.predicates);
    for (std::size_t i = 1; i < r.candidates.size(); ++i) {
        const auto& c = r.candidates[i];
        if (!c.matched || eliminating_predicate(c.verdicts, r.predicates, r.high_priority_cutoff)) continue;
        const double score = s_norm(c.verdicts, r.predicates);
        if (score == seed_score) return {Decision::Rejected, "tie: seed and '" + c.title + "' share the highest S_norm"};
        if (score > seed_score) return {Decision::Rejected, "'" + c.title + "' outscores the seed"};
    }
    return {Decision::AcceptedAtMatching, "seed has the uniquely highest S_norm"};
}

void adjudicate(QualityReport& r) {
    for (auto& c : r.candidates) {
        c.s_exp = s_exp_of(c.screening);
        c.discarded = discarded_by(c.screening);
        c.s_norm = s_norm(c.verdicts, r.predicates);
        c.eliminated_by = eliminating_predicate(c.verdicts, r.predicates, r.high_priority_cutoff);
    }
    std::tie(r.decision, r.reason) = decide(r);
}

void GateConfig::validate() const {
    if (thresholds.alpha < 0 || thresholds.beta < 0 || thresholds.gamma < 0) fail(ErrorCode::Config, "structure thresholds must be >= 0");
    if (vote_runs < 3) fail(ErrorCode::Config, "vote_runs must be >= 3");
    if (retry_limit < 0) fail(ErrorCode::Config, "retry_limit must be >= 0");
    if (!(high_priority_cutoff > 0.0)) fail(ErrorCode::Config, "high_priority_cutoff must be positive");
}

// ---- gate ------------------------------------------------------------------

QualityGate::QualityGate(const CorpusStore& store, ModelGateway& gateway, GateConfig config, RetrievalClient* retrieval)
    : store_(store), gateway_(gateway), config_(std::move(config)), retrieval_(retrieval) {
    config_.validate();
}

std::string QualityGate::canonical_answer(std::string_view s) const {
    return text::canonicalize(store_.try_resolve(s).value_or(std::string(s)));
}

TextStructureGraph QualityGate::extract_structure(std::string_view question) {
    if (text::collapse_whitespace(question).empty()) fail(ErrorCode::Precondition, "empty question");
    std::string reason;
    for (int attempt = 0; attempt <= config_.retry_limit; ++attempt) {
        try {
            json reply = gateway_.chat_json(
                prompts::messages(prompts::kStructure, {{"question", question}, {"attempt", attempt}}),
                prompts::response_schema(prompts::kStructure));
            return structure_from_json(reply);
        } catch (const Error& e) {
            if (e.code() != ErrorCode::SchemaViolation && e.code() != ErrorCode::Gateway) throw;
            reason = e.what();
            spdlog::debug("structure attempt {} rejected: {}", attempt, reason);
        }
    }
    fail(ErrorCode::SchemaViolation, "structure extraction failed: " + reason);
}

std::vector<std::string> QualityGate::predict_answers(std::string_view question, int runs) {
    std::vector<std::string> out;
    for (int run = 0; run < runs; ++run) {
        try {
            json reply = gateway_.chat_json(
                prompts::messages(prompts::kAnswer, {{"question", question}, {"run", run}, {"purpose", "vote"}}),
                prompts::response_schema(prompts::kAnswer));
            out.push_back(reply["answer"].get<std::string>());
        } catch (const Error& e) {
            spdlog::warn("vote prediction {} failed: {}", run, e.what());
            out.emplace_back();
        }
    }
    return out;
}

VoteOutcome QualityGate::majority_vote(const std::vector<std::string>& predictions, std::string_view seed) const {
    if (predictions.size() < 3) fail(ErrorCode::Precondition, "majority vote needs at least 3 predictions");
    VoteOutcome out;
    const std::string seed_title = store_.try_resolve(seed).value_or(std::string(seed));
    const std::string seed_key = text::canonicalize(seed_title);
    out.candidates.push_back(seed_title);
    std::set<std::string> seen{seed_key};
    for (const auto& p : predictions) {
        const std::string shown = store_.try_resolve(p).value_or(text::collapse_whitespace(p));
        const std::string key = text::canonicalize(shown);
        if (key.empty()) continue;
        if (key == seed_key) {
            ++out.match_count;
            continue;
        }
        if (seen.insert(key).second) out.candidates.push_back(shown);
    }
    out.accepted = 2 * static_cast<std::size_t>(out.match_count) > predictions.size();
    return out;
}

std::vector<StructuredPredicate> QualityGate::decompose_constraints(std::string_view question) {
    const std::size_t length = text::code_point_index(question, question.size());
    std::string reason;
    for (int attempt = 0; attempt <= config_.retry_limit; ++attempt) {
        try {
            json reply = gateway_.chat_json(
                prompts::messages(prompts::kDecompose, {{"question", question}, {"attempt", attempt}}),
                prompts::response_schema(prompts::kDecompose));
            std::vector<StructuredPredicate> out;
            for (const auto& item : reply["predicates"]) {
                StructuredPredicate p;
                p.field = text::collapse_whitespace(item["field"].get<std::string>());
                p.op = parse_predicate_op(item["operator"].get<std::string>());
                p.value = item["value"].get<std::string>();
                p.confidence = item["confidence"].get<double>();
                p.attribute = item.value("attribute", "");
                bool placed = false;
                if (item.contains("span")) {
                    const auto b = item["span"].at(0).get<long long>();
                    const auto e = item["span"].at(1).get<long long>();
                    if (b >= 0 && b < e && static_cast<std::size_t>(e) <= length) {
                        p.source_span = {static_cast<std::size_t>(b), static_cast<std::size_t>(e)};
                        placed = true;
                    }
                }
                if (!placed) {
                    const auto pos = text::find_ci(question, p.value);
                    if (p.value.empty() || pos == std::string_view::npos) {
                        fail(ErrorCode::SchemaViolation, "predicate value '" + p.value + "' has no span in the question");
                    }
                    p.source_span = {text::code_point_index(question, pos), text::code_point_index(question, pos + p.value.size())};
                }
                normalize_predicate(p, config_.normalization);
                out.push_back(std::move(p));
            }
            append_residuals(question, out);
            return out;
        } catch (const Error& e) {
            if (e.code() != ErrorCode::SchemaViolation && e.code() != ErrorCode::Gateway) throw;
            reason = e.what();
        }
    }
    fail(ErrorCode::SchemaViolation, "constraint decomposition failed: " + reason);
}

std::vector<CandidateRecord> QualityGate::screen_explicit(const std::vector<StructuredPredicate>& predicates,
                                                          const std::vector<std::string>& candidates) const {
    const bool any_explicit = std::any_of(predicates.begin(), predicates.end(),
                                          [](const StructuredPredicate& p) { return p.normalized.has_value(); });
    if (!any_explicit) spdlog::info("no explicit predicates; all {} candidates forwarded", candidates.size());
    std::vector<CandidateRecord> out;
    for (const auto& title : candidates) {
        CandidateRecord rec;
        auto resolved = store_.try_resolve(title);
        rec.title = resolved.value_or(title);
        rec.resolved = resolved.has_value();
        const AttributeMap attrs = resolved ? store_.attributes(*resolved) : AttributeMap{};
        for (const auto& p : predicates) rec.screening.push_back(screen_predicate(p, attrs));
        rec.s_exp = s_exp_of(rec.screening);
        rec.discarded = discarded_by(rec.screening);
        out.push_back(std::move(rec));
    }
    return out;
}

std::vector<Passage> QualityGate::evidence_pack(std::string_view candidate, std::string_view question) {
    std::vector<Passage> pack;
    if (auto title = store_.try_resolve(candidate)) {
        NodeBuilder builder(store_, gateway_);
        try {
            const auto doc = builder.preprocess(store_.get_page(*title));
            for (const auto& p : doc.paragraphs) {
                if (pack.size() >= config_.max_passages) break;
                pack.push_back({*title + "#" + std::to_string(p.index), p.text});
            }
        } catch (const Error& e) {
            if (e.code() != ErrorCode::InvalidInput) throw;
        }
    }
    if (retrieval_ != nullptr) {
        for (auto& p : retrieval_->retrieve(candidate, question)) pack.push_back(std::move(p));
    }
    return pack;
}

void QualityGate::match_evidence(const std::vector<StructuredPredicate>& predicates, CandidateRecord& record,
                                 const std::vector<Passage>& pack, std::string_view question) {
    record.matched = true;
    auto all_unknown = [&](const std::string& why) {
        record.verdicts.clear();
        for (std::size_t i = 0; i < predicates.size(); ++i) {
            record.verdicts.push_back({static_cast<int>(i), Verdict::U, "", why});
        }
    };

    if (pack.empty()) {
        all_unknown("no evidence available");
    } else if (!predicates.empty()) {
        json preds = json::array();
        for (std::size_t i = 0; i < predicates.size(); ++i) {
            preds.push_back({{"index", i}, {"field", predicates[i].field}, {"operator", to_string(predicates[i].op)},
                             {"value", predicates[i].value}});
        }
        json evidence = json::array();
        std::set<std::string> refs;
        for (const auto& p : pack) {
            evidence.push_back({{"ref", p.ref}, {"text", p.text}});
            refs.insert(p.ref);
        }
        std::string reason;
        bool done = false;
        for (int attempt = 0; attempt <= config_.retry_limit && !done; ++attempt) {
            try {
                json reply = gateway_.chat_json(prompts::messages(prompts::kVerify, {{"candidate", record.title},
                                                                                     {"question", question},
                                                                                     {"predicates", preds},
                                                                                     {"evidence", evidence},
                                                                                     {"attempt", attempt}}),
                                                prompts::response_schema(prompts::kVerify));
                std::vector<std::optional<VerdictRecord>> slots(predicates.size());
                for (const auto& v : reply["verdicts"]) {
                    const auto idx = v["index"].get<long long>();
                    if (idx < 0 || static_cast<std::size_t>(idx) >= predicates.size()) {
                        fail(ErrorCode::SchemaViolation, "verdict index " + std::to_string(idx) + " out of range");
                    }
                    VerdictRecord rec{static_cast<int>(idx), parse_verdict(v["verdict"].get<std::string>()),
                                      v.value("evidence_ref", ""), v.value("justification", "")};
                    if ((rec.verdict == Verdict::Y || rec.verdict == Verdict::N) && !refs.count(rec.evidence_ref)) {
                        fail(ErrorCode::SchemaViolation, "verdict " + std::string(to_string(rec.verdict)) +
                                                             " without a valid evidence_ref");
                    }
                    if (!slots[idx]) slots[idx] = std::move(rec);
                }
                record.verdicts.clear();
                for (std::size_t i = 0; i < slots.size(); ++i) {
                    record.verdicts.push_back(slots[i] ? *slots[i]
                                                       : VerdictRecord{static_cast<int>(i), Verdict::U, "", "no verdict returned"});
                }
                done = true;
            } catch (const Error& e) {
                if (e.code() != ErrorCode::SchemaViolation && e.code() != ErrorCode::Gateway) throw;
                reason = e.what();
            }
        }
        if (!done) {
            spdlog::warn("verification for '{}' failed, recording U verdicts: {}", record.title, reason);
            all_unknown("verification failed: " + reason);
        }
    }
    record.s_norm = s_norm(record.verdicts, predicates);
    record.eliminated_by = eliminating_predicate(record.verdicts, predicates, config_.high_priority_cutoff);
}

QualityReport QualityGate::evaluate(std::string_view question, std::string_view seed,
                                    const std::vector<std::string>& extra_candidates) {
    QualityReport r;
    r.question = std::string(question);
    r.seed = store_.try_resolve(seed).value_or(std::string(seed));
    r.thresholds = config_.thresholds;
    r.high_priority_cutoff = config_.high_priority_cutoff;

    try {
        r.structure = extract_structure(question);
        r.metrics = compute_metrics(*r.structure, config_.thresholds);
    } catch (const Error& e) {
        if (e.code() != ErrorCode::SchemaViolation && e.code() != ErrorCode::Precondition) throw;
        r.structure_error = e.what();
    }
    if (!r.structure || !r.metrics.pass) {
        adjudicate(r);
        return r;
    }

    const auto predictions = predict_answers(question, config_.vote_runs);
    const auto vote = majority_vote(predictions, r.seed);
    r.vote = ProbeResult{predictions, vote.match_count, vote.accepted};
    r.vote_candidates = vote.candidates;
    if (vote.accepted) {
        adjudicate(r);
        return r;
    }

    std::vector<std::string> candidates = vote.candidates;
    std::set<std::string> seen;
    for (const auto& c : candidates) seen.insert(canonical_answer(c));
    for (const auto& c : extra_candidates) {
        if (seen.insert(canonical_answer(c)).second) candidates.push_back(store_.try_resolve(c).value_or(c));
    }

    try {
        r.predicates = decompose_constraints(question);
    } catch (const Error& e) {
        if (e.code() != ErrorCode::SchemaViolation) throw;
        r.decomposition_error = e.what();
        adjudicate(r);
        return r;
    }

    r.candidates = screen_explicit(r.predicates, candidates);
    if (!screening_decision(r.candidates)) {
        for (auto& c : r.candidates) {
            if (c.discarded) continue;
            match_evidence(r.predicates, c, evidence_pack(c.title, question), question);
        }
    }
    adjudicate(r);
    return r;
}

}  // namespace hopforge
