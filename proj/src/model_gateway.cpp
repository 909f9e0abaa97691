#include <hopforge/model_gateway.hpp>

#include <hopforge/error.hpp>
#include <hopforge/json_schema.hpp>

#include <httplib.h>
#include <openssl/evp.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <thread>

namespace hopforge {

using nlohmann::json;

namespace {

json normalized(const json& v) {
    if (v.is_string()) return text::collapse_whitespace(v.get<std::string>());
    if (v.is_array()) {
        json out = json::array();
        for (const auto& e : v) out.push_back(normalized(e));
        return out;
    }
    if (v.is_object()) {
        json out = json::object();
        for (const auto& [k, e] : v.items()) out[k] = normalized(e);
        return out;
    }
    return v;
}

void collect_strings(const json& v, std::string& out) {
    if (v.is_string()) {
        out += v.get<std::string>();
        out += '\n';
    } else if (v.is_array() || v.is_object()) {
        for (const auto& e : v) collect_strings(e, out);
    }
}

std::array<unsigned char, 32> sha256(std::string_view data) {
    std::array<unsigned char, 32> digest{};
    unsigned int len = 0;
    EVP_Digest(data.data(), data.size(), digest.data(), &len, EVP_sha256(), nullptr);
    return digest;
}

std::string hex(const std::array<unsigned char, 32>& bytes) {
    static constexpr char kHex[] = "0123456789abcdef";
    std::string out;
    for (unsigned char b : bytes) {
        out.push_back(kHex[b >> 4]);
        out.push_back(kHex[b & 0xF]);
    }
    return out;
}

std::string_view operation_of(std::string_view path) {
    if (!path.empty() && path.front() == '/') path.remove_prefix(1);
    return path;
}

bool is_word_byte(char c) {
    auto u = static_cast<unsigned char>(c);
    return std::isalnum(u) != 0 || u >= 0x80;
}

json gazetteer_entities(const json& rule, std::string_view text) {
    struct Hit {
        std::size_t b, e;
        std::string label;
        double score;
    };
    std::vector<std::pair<std::string, json>> entries;
    for (const auto& [surface, spec] : rule.at("gazetteer").items()) entries.emplace_back(surface, spec);
    std::stable_sort(entries.begin(), entries.end(),
                     [](const auto& a, const auto& b) { return a.first.size() > b.first.size(); });
    const double default_score = rule.value("score", 0.9);

    std::vector<Hit> hits;
    for (const auto& [surface, spec] : entries) {
        if (surface.empty()) continue;
        std::string label = spec.is_string() ? spec.get<std::string>() : spec.value("label", "");
        double score = spec.is_object() ? spec.value("score", default_score) : default_score;
        std::size_t pos = text.find(surface);
        while (pos != std::string_view::npos) {
            std::size_t end = pos + surface.size();
            bool bounded = (pos == 0 || !is_word_byte(text[pos - 1])) && (end == text.size() || !is_word_byte(text[end]));
            bool overlaps = std::any_of(hits.begin(), hits.end(), [&](const Hit& h) { return pos < h.e && h.b < end; });
            if (bounded && !overlaps) hits.push_back({pos, end, label, score});
            pos = text.find(surface, pos + 1);
        }
    }
    std::sort(hits.begin(), hits.end(), [](const Hit& a, const Hit& b) { return a.b < b.b; });
    json entities = json::array();
    for (const auto& h : hits) {
        entities.push_back({{"start", text::code_point_index(text, h.b)},
                            {"end", text::code_point_index(text, h.e)},
                            {"label", h.label},
                            {"score", h.score}});
    }
    return {{"entities", entities}};
}

json echo_vector(std::string_view s) {
    auto digest = sha256(s);
    std::vector<double> v(8);
    double norm = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) {
        v[i] = (static_cast<double>(digest[2 * i]) + 1.0) / 256.0 - 0.5;
        norm += v[i] * v[i];
    }
    norm = std::sqrt(norm);
    for (auto& x : v) x /= norm;
    return v;
}

}  // namespace

EndpointConfig endpoint_config_from_json(const json& j) {
    EndpointConfig c;
    c.base_url = j.value("base_url", c.base_url);
    c.timeout_ms = j.value("timeout_ms", c.timeout_ms);
    c.max_retries = j.value("max_retries", c.max_retries);
    c.backoff_ms = j.value("backoff_ms", c.backoff_ms);
    c.max_in_flight = j.value("max_in_flight", c.max_in_flight);
    if (auto it = j.find("api_key_env"); it != j.end() && it->is_string()) c.api_key_env = it->get<std::string>();
    if (c.timeout_ms <= 0) fail(ErrorCode::Config, "gateway timeout_ms must be positive");
    if (c.max_retries < 0) fail(ErrorCode::Config, "gateway max_retries must be >= 0");
    if (c.max_in_flight < 1 || c.max_in_flight > 1024) fail(ErrorCode::Config, "gateway max_in_flight must be in [1, 1024]");
    if (c.backoff_ms < 0) fail(ErrorCode::Config, "gateway backoff_ms must be >= 0");
    return c;
}

json to_json(const EndpointConfig& c) {
    json j = {{"base_url", c.base_url},
              {"timeout_ms", c.timeout_ms},
              {"max_retries", c.max_retries},
              {"backoff_ms", c.backoff_ms},
              {"max_in_flight", c.max_in_flight}};
    j["api_key_env"] = c.api_key_env ? json(*c.api_key_env) : json(nullptr);
    return j;
}

// ---------------------------------------------------------------------------

HttpTransport::HttpTransport(std::string base_url, std::optional<std::string> bearer_token)
    : bearer_(std::move(bearer_token)) {
    auto scheme = base_url.find("://");
    auto path_start = base_url.find('/', scheme == std::string::npos ? 0 : scheme + 3);
    if (path_start == std::string::npos) {
        origin_ = base_url;
    } else {
        origin_ = base_url.substr(0, path_start);
        prefix_ = base_url.substr(path_start);
        while (!prefix_.empty() && prefix_.back() == '/') prefix_.pop_back();
    }
}

TransportResponse HttpTransport::post(std::string_view path, const json& body, int timeout_ms) {
    httplib::Client client(origin_);
    const auto timeout = std::chrono::milliseconds(timeout_ms);
    client.set_connection_timeout(timeout);
    client.set_read_timeout(timeout);
    client.set_write_timeout(timeout);
    httplib::Headers headers;
    if (bearer_) headers.emplace("Authorization", "Bearer " + *bearer_);
    auto res = client.Post(prefix_ + std::string(path), headers, body.dump(), "application/json");
    if (!res) return {0, httplib::to_string(res.error())};
    return {res->status, res->body};
}

// ---------------------------------------------------------------------------

std::string request_fingerprint(std::string_view operation, const json& body) {
    std::string canonical(operation);
    canonical += '\n';
    canonical += normalized(body).dump();
    return hex(sha256(canonical));
}

MockScript MockScript::from_json(const json& script) {
    MockScript m;
    const std::string policy = script.value("default_policy", "error");
    if (policy == "error") {
        m.default_policy_ = DefaultPolicy::error;
    } else if (policy == "echo") {
        m.default_policy_ = DefaultPolicy::echo;
    } else if (policy == "constant") {
        m.default_policy_ = DefaultPolicy::constant;
    } else {
        fail(ErrorCode::Config, "unknown mock default_policy '" + policy + "'");
    }
    if (auto c = script.find("constant"); c != script.end()) {
        for (const auto& [op, reply] : c->items()) m.constants_[op] = reply;
    }
    if (auto r = script.find("responses"); r != script.end()) {
        for (const auto& [fp, reply] : r->items()) m.responses_[fp] = reply;
    }
    if (auto r = script.find("rules"); r != script.end()) {
        if (!r->is_array()) fail(ErrorCode::Config, "mock 'rules' must be an array");
        for (const auto& rule : *r) m.add_rule(rule);
    }
    return m;
}

MockScript MockScript::from_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) fail(ErrorCode::Io, "cannot read mock script '" + path + "'");
    try {
        return from_json(json::parse(in));
    } catch (const json::exception& e) {
        fail(ErrorCode::Config, "mock script '" + path + "': " + e.what());
    }
}

void MockScript::add_response(const std::string& fingerprint, json reply) {
    responses_[fingerprint] = std::move(reply);
}

void MockScript::add_rule(json rule) {
    if (!rule.is_object()) fail(ErrorCode::Config, "mock rule must be an object");
    rule["_index"] = rules_.size();
    rules_.push_back(std::move(rule));
}

void MockScript::set_constant(std::string operation, json reply) { constants_[std::move(operation)] = std::move(reply); }

TransportResponse MockScript::render(std::string_view operation, const json& reply, const std::string& key) const {
    if (reply.is_object()) {
        if (auto seq = reply.find("sequence"); seq != reply.end() && seq->is_array() && !seq->empty()) {
            std::size_t n = 0;
            {
                std::lock_guard lock(sequences_->mu);
                n = sequences_->calls[key]++;
            }
            return render(operation, (*seq)[std::min(n, seq->size() - 1)], key + "#" + std::to_string(n));
        }
        if (auto st = reply.find("status"); st != reply.end() && st->is_number_integer() && st->get<int>() != 200) {
            return {st->get<int>(), reply.value("error", std::string("scripted failure"))};
        }
        if (auto c = reply.find("content"); c != reply.end() && c->is_string() && operation == "chat") {
            return {200, json{{"content", *c}}.dump()};
        }
        if (auto j = reply.find("json"); j != reply.end() && operation == "chat") {
            return {200, json{{"content", j->dump()}}.dump()};
        }
        if (auto b = reply.find("body"); b != reply.end()) return {200, b->dump()};
    }
    return {200, reply.dump()};
}

std::optional<json> MockScript::apply_rule(const json& rule, std::string_view operation, const json& body,
                                           const std::string& flat) const {
    if (auto op = rule.find("op"); op != rule.end() && op->get<std::string>() != operation) return std::nullopt;
    if (auto c = rule.find("contains"); c != rule.end()) {
        std::vector<std::string> needles;
        if (c->is_string()) {
            needles.push_back(c->get<std::string>());
        } else {
            for (const auto& n : *c) needles.push_back(n.get<std::string>());
        }
        for (const auto& n : needles) {
            if (flat.find(text::collapse_whitespace(n)) == std::string::npos) return std::nullopt;
        }
    }
    if (auto c = rule.find("excludes"); c != rule.end()) {
        for (const auto& n : *c) {
            if (flat.find(text::collapse_whitespace(n.get<std::string>())) != std::string::npos) return std::nullopt;
        }
    }
    if (operation == "ner" && rule.contains("gazetteer")) {
        return gazetteer_entities(rule, body.value("text", std::string()));
    }
    if (operation == "nli" && rule.contains("scores")) {
        std::map<std::string, double> table;
        for (const auto& [h, s] : rule["scores"].items()) table[text::collapse_whitespace(h)] = s.get<double>();
        const double fallback_score = rule.value("default", 0.0);
        json out = json::array();
        for (const auto& h : body.at("hypotheses")) {
            auto it = table.find(text::collapse_whitespace(h.get<std::string>()));
            out.push_back(it == table.end() ? fallback_score : it->second);
        }
        return json{{"entailment", out}};
    }
    json reply = rule;
    for (const char* k : {"op", "contains", "excludes", "_index"}) reply.erase(k);
    return reply;
}

TransportResponse MockScript::fallback(std::string_view operation, const json& body) const {
    switch (default_policy_) {
        case DefaultPolicy::error:
            return {503, "no scripted response"};
        case DefaultPolicy::constant: {
            auto it = constants_.find(operation);
            if (it == constants_.end()) return {503, "no constant for operation"};
            return render(operation, it->second, "constant:" + std::string(operation));
        }
        case DefaultPolicy::echo:
            break;
    }
    if (operation == "ner") return {200, json{{"entities", json::array()}}.dump()};
    if (operation == "nli") {
        return {200, json{{"entailment", std::vector<double>(body.at("hypotheses").size(), 0.0)}}.dump()};
    }
    if (operation == "embed") {
        json vectors = json::array();
        for (const auto& t : body.at("texts")) vectors.push_back(echo_vector(t.get<std::string>()));
        return {200, json{{"vectors", vectors}}.dump()};
    }
    if (operation == "chat") {
        const auto& msgs = body.at("messages");
        std::string content = msgs.empty() ? std::string() : msgs.back().value("content", std::string());
        return {200, json{{"content", content}}.dump()};
    }
    return {404, "unknown operation"};
}

TransportResponse MockScript::respond(std::string_view operation, const json& body) const {
    const std::string fp = request_fingerprint(operation, body);
    if (auto it = responses_.find(fp); it != responses_.end()) return render(operation, it->second, fp);

    std::string flat;
    collect_strings(normalized(body), flat);
    for (const auto& rule : rules_) {
        if (auto reply = apply_rule(rule, operation, body, flat)) {
            return render(operation, *reply, "rule:" + std::to_string(rule["_index"].get<std::size_t>()));
        }
    }
    return fallback(operation, body);
}

ScriptedTransport::ScriptedTransport(std::shared_ptr<const MockScript> script) : script_(std::move(script)) {}

TransportResponse ScriptedTransport::post(std::string_view path, const json& body, int /*timeout_ms*/) {
    {
        std::lock_guard lock(mu_);
        ++counts_[std::string(path)];
    }
    return script_->respond(operation_of(path), body);
}

std::size_t ScriptedTransport::requests(std::string_view path) const {
    std::lock_guard lock(mu_);
    auto it = counts_.find(path);
    return it == counts_.end() ? 0 : it->second;
}

std::size_t ScriptedTransport::total_requests() const {
    std::lock_guard lock(mu_);
    std::size_t n = 0;
    for (const auto& [_, c] : counts_) n += c;
    return n;
}

// ---------------------------------------------------------------------------

ModelGateway::ModelGateway(std::shared_ptr<Transport> transport, EndpointConfig config)
    : transport_(std::move(transport)), config_(std::move(config)), in_flight_(std::max(1, config_.max_in_flight)) {
    if (!transport_) fail(ErrorCode::Config, "gateway needs a transport");
    if (config_.timeout_ms <= 0) fail(ErrorCode::Config, "gateway timeout_ms must be positive");
}

json ModelGateway::call(std::string_view path, const json& body) {
    ++calls_;
    std::string last_error;
    for (int attempt = 0; attempt <= config_.max_retries; ++attempt) {
        if (attempt > 0 && config_.backoff_ms > 0) {
            std::this_thread::sleep_for(std::chrono::milliseconds(config_.backoff_ms));
        }
        ++attempts_;
        in_flight_.acquire();
        TransportResponse res;
        try {
            res = transport_->post(path, body, config_.timeout_ms);
        } catch (...) {
            in_flight_.release();
            throw;
        }
        in_flight_.release();

        if (res.status == 200) {
            try {
                return json::parse(res.body);
            } catch (const json::parse_error&) {
                ++failures_;
                fail(ErrorCode::Gateway, std::string(path) + ": response is not JSON");
            }
        }
        if (res.status >= 400 && res.status < 500) {
            ++failures_;
            fail(ErrorCode::CallerError,
                 std::string(path) + ": HTTP " + std::to_string(res.status) + " " + res.body);
        }
        last_error = res.status == 0 ? "transport failure: " + res.body : "HTTP " + std::to_string(res.status);
    }
    ++failures_;
    fail(ErrorCode::Gateway, std::string(path) + ": " + last_error + " after " +
                                 std::to_string(config_.max_retries + 1) + " attempts");
}

std::vector<NerEntity> ModelGateway::ner(std::string_view input) {
    if (input.empty()) fail(ErrorCode::Precondition, "ner: text must be non-empty");
    json res = call("/ner", {{"text", input}});
    auto it = res.find("entities");
    if (it == res.end() || !it->is_array()) fail(ErrorCode::Gateway, "/ner: missing 'entities'");

    std::vector<NerEntity> out;
    for (const auto& e : *it) {
        if (!e.is_object() || !e.contains("start") || !e.contains("end") || !e.contains("label") || !e.contains("score")) {
            fail(ErrorCode::Gateway, "/ner: malformed entity " + e.dump());
        }
        auto b = text::byte_offset(input, e["start"].get<std::size_t>());
        auto en = text::byte_offset(input, e["end"].get<std::size_t>());
        const double score = e["score"].get<double>();
        if (b == std::string_view::npos || en == std::string_view::npos || b >= en) {
            fail(ErrorCode::Gateway, "/ner: span out of bounds " + e.dump());
        }
        if (!(score >= 0.0 && score <= 1.0)) fail(ErrorCode::Gateway, "/ner: score outside [0,1]");
        out.push_back({{b, en}, e["label"].get<std::string>(), score});
    }
    std::stable_sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.span.begin < b.span.begin; });
    for (std::size_t i = 1; i < out.size(); ++i) {
        if (out[i].span.begin < out[i - 1].span.end) fail(ErrorCode::Gateway, "/ner: overlapping spans");
    }
    return out;
}

std::vector<double> ModelGateway::nli(std::string_view premise, const std::vector<std::string>& hypotheses) {
    if (hypotheses.empty()) fail(ErrorCode::Precondition, "nli: at least one hypothesis required");
    json res = call("/nli", {{"premise", premise}, {"hypotheses", hypotheses}});
    auto it = res.find("entailment");
    if (it == res.end() || !it->is_array()) fail(ErrorCode::Gateway, "/nli: missing 'entailment'");
    if (it->size() != hypotheses.size()) fail(ErrorCode::Gateway, "/nli: arity mismatch");
    std::vector<double> out;
    out.reserve(it->size());
    for (const auto& p : *it) {
        if (!p.is_number()) fail(ErrorCode::Gateway, "/nli: non-numeric probability");
        double x = p.get<double>();
        if (!(x >= 0.0 && x <= 1.0)) fail(ErrorCode::Gateway, "/nli: probability outside [0,1]");
        out.push_back(x);
    }
    return out;
}

std::vector<std::vector<double>> ModelGateway::embed(const std::vector<std::string>& texts) {
    if (texts.empty()) fail(ErrorCode::Precondition, "embed: at least one text required");
    json res = call("/embed", {{"texts", texts}});
    auto it = res.find("vectors");
    if (it == res.end() || !it->is_array() || it->size() != texts.size()) {
        fail(ErrorCode::Gateway, "/embed: missing or mis-sized 'vectors'");
    }
    std::vector<std::vector<double>> out;
    for (const auto& v : *it) {
        auto vec = v.get<std::vector<double>>();
        if (vec.empty() || (!out.empty() && vec.size() != out.front().size())) {
            fail(ErrorCode::Gateway, "/embed: inconsistent dimensions");
        }
        double norm = 0.0;
        for (double x : vec) norm += x * x;
        norm = std::sqrt(norm);
        if (!(norm > 0.0) || !std::isfinite(norm)) fail(ErrorCode::Gateway, "/embed: zero vector");
        for (double& x : vec) x /= norm;
        out.push_back(std::move(vec));
    }
    return out;
}

std::string ModelGateway::chat_raw(const std::vector<ChatMessage>& messages, const json& schema) {
    if (messages.empty()) fail(ErrorCode::Precondition, "chat: messages must be non-empty");
    json msgs = json::array();
    for (const auto& m : messages) msgs.push_back({{"role", m.role}, {"content", m.content}});
    json res = call("/chat", {{"messages", msgs}, {"schema", schema}});
    auto it = res.find("content");
    if (it == res.end() || !it->is_string()) fail(ErrorCode::Gateway, "/chat: missing 'content'");
    return it->get<std::string>();
}

std::string ModelGateway::chat(const std::vector<ChatMessage>& messages) { return chat_raw(messages, nullptr); }

json ModelGateway::chat_json(const std::vector<ChatMessage>& messages, const json& schema) {
    std::string content = chat_raw(messages, schema);
    // Tolerate a fenced code block around the JSON payload.
    auto first = content.find('{');
    auto first_arr = content.find('[');
    if (first_arr < first) first = first_arr;
    auto last = content.find_last_of("}]");
    json parsed;
    try {
        if (first == std::string::npos || last == std::string::npos || last < first) throw json::parse_error::create(101, 0, "no JSON value", nullptr);
        parsed = json::parse(content.substr(first, last - first + 1));
    } catch (const json::exception&) {
        fail(ErrorCode::SchemaViolation, "chat output is not JSON: " + content.substr(0, 200));
    }
    if (auto err = schema_violation(parsed, schema)) fail(ErrorCode::SchemaViolation, "chat output: " + *err);
    return parsed;
}

GatewayMetrics ModelGateway::metrics() const { return {calls_.load(), attempts_.load(), failures_.load()}; }

}  // namespace hopforge
