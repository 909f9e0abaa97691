#pragma once

#include <atomic>
#include <cstddef>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <semaphore>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include <hopforge/text.hpp>

namespace hopforge {

struct EndpointConfig {
    std::string base_url = "http://127.0.0.1:8765";
    int timeout_ms = 30000;
    int max_retries = 2;
    std::optional<std::string> api_key_env;
    int backoff_ms = 200;
    int max_in_flight = 8;
};

EndpointConfig endpoint_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const EndpointConfig& c);

/// One wire exchange. status 0 means the request never completed
/// (connection failure or timeout).
struct TransportResponse {
    int status = 0;
    std::string body;
};

/// Moves one JSON request to an endpoint path ("/ner", "/nli", "/embed",
/// "/chat") and returns the raw reply.
class Transport {
  public:
    virtual ~Transport() = default;
    virtual TransportResponse post(std::string_view path, const nlohmann::json& body, int timeout_ms) = 0;
};

/// JSON-over-HTTP transport (cpp-httplib).
class HttpTransport final : public Transport {
  public:
    explicit HttpTransport(std::string base_url, std::optional<std::string> bearer_token = std::nullopt);
    TransportResponse post(std::string_view path, const nlohmann::json& body, int timeout_ms) override;

  private:
    std::string origin_;
    std::string prefix_;
    std::optional<std::string> bearer_;
};

/// Request fingerprint: SHA-256 (hex) over the operation name and the
/// whitespace-normalized, key-sorted serialization of the request body.
std::string request_fingerprint(std::string_view operation, const nlohmann::json& body);

enum class DefaultPolicy { error, echo, constant };

/// Deterministic replay of scripted responses.
///
/// Lookup order for a request: exact fingerprint entry, then the first
/// matching rule, then the default policy. A reply is either a response body,
/// {"body": ...}, {"status": code} for a failure, or for chat the shorthands
/// {"content": str} / {"json": value}. {"sequence": [reply, ...]} replays
/// replies in call order per fingerprint and repeats the last one.
class MockScript {
  public:
    MockScript() = default;
    static MockScript from_json(const nlohmann::json& script);
    static MockScript from_file(const std::string& path);

    void set_default_policy(DefaultPolicy p) { default_policy_ = p; }
    void add_response(const std::string& fingerprint, nlohmann::json reply);
    void add_rule(nlohmann::json rule);
    void set_constant(std::string operation, nlohmann::json reply);

    TransportResponse respond(std::string_view operation, const nlohmann::json& body) const;

  private:
    TransportResponse render(std::string_view operation, const nlohmann::json& reply,
                             const std::string& fingerprint) const;
    std::optional<nlohmann::json> apply_rule(const nlohmann::json& rule, std::string_view operation,
                                             const nlohmann::json& body, const std::string& flat) const;
    TransportResponse fallback(std::string_view operation, const nlohmann::json& body) const;

    DefaultPolicy default_policy_ = DefaultPolicy::error;
    std::map<std::string, nlohmann::json> responses_;
    std::vector<nlohmann::json> rules_;
    std::map<std::string, nlohmann::json, std::less<>> constants_;
    struct SequenceState {
        std::mutex mu;
        std::map<std::string, std::size_t> calls;
    };
    std::unique_ptr<SequenceState> sequences_ = std::make_unique<SequenceState>();
};

/// In-process transport that replays a MockScript and counts requests.
class ScriptedTransport final : public Transport {
  public:
    explicit ScriptedTransport(std::shared_ptr<const MockScript> script);
    TransportResponse post(std::string_view path, const nlohmann::json& body, int timeout_ms) override;

    [[nodiscard]] std::size_t requests(std::string_view path) const;
    [[nodiscard]] std::size_t total_requests() const;

  private:
    std::shared_ptr<const MockScript> script_;
    mutable std::mutex mu_;
    std::map<std::string, std::size_t, std::less<>> counts_;
};

struct NerEntity {
    text::Span span;    // byte offsets into the request text
    std::string label;  // as returned; consumers check it against EntityLabel
    double score = 0.0;
};

struct ChatMessage {
    std::string role;
    std::string content;
};

struct GatewayMetrics {
    std::size_t calls = 0;
    std::size_t attempts = 0;
    std::size_t failures = 0;
};

/// The single entry point for model inference. Retries 5xx and transport
/// failures up to max_retries with a fixed backoff; 4xx is never retried.
class ModelGateway {
  public:
    ModelGateway(std::shared_ptr<Transport> transport, EndpointConfig config);

    std::vector<NerEntity> ner(std::string_view text);
    std::vector<double> nli(std::string_view premise, const std::vector<std::string>& hypotheses);
    std::vector<std::vector<double>> embed(const std::vector<std::string>& texts);

    /// Plain-text completion.
    std::string chat(const std::vector<ChatMessage>& messages);
    /// Completion parsed as JSON and validated against `schema`;
    /// throws Error(SchemaViolation) when it does not conform.
    nlohmann::json chat_json(const std::vector<ChatMessage>& messages, const nlohmann::json& schema);

    [[nodiscard]] GatewayMetrics metrics() const;
    [[nodiscard]] const EndpointConfig& config() const noexcept { return config_; }

  private:
    nlohmann::json call(std::string_view path, const nlohmann::json& body);
    std::string chat_raw(const std::vector<ChatMessage>& messages, const nlohmann::json& schema);

    std::shared_ptr<Transport> transport_;
    EndpointConfig config_;
    std::counting_semaphore<1024> in_flight_;
    std::atomic<std::size_t> calls_{0};
    std::atomic<std::size_t> attempts_{0};
    std::atomic<std::size_t> failures_{0};
};

}  // namespace hopforge
