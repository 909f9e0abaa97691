#include <hopforge/error.hpp>
#include <hopforge/model_gateway.hpp>

#include <gtest/gtest.h>
#include <httplib.h>

#include "support.hpp"

#include <cmath>
#include <thread>

using namespace hopforge;
using nlohmann::json;
using testsupport::mocked;

namespace {

ErrorCode code_of(const std::function<void()>& f) {
    try {
        f();
    } catch (const Error& e) {
        return e.code();
    }
    ADD_FAILURE() << "no error thrown";
    return ErrorCode::Usage;
}

}  // namespace

TEST(Ner, GazetteerSpanCoversTheEntity) {
    auto m = mocked({{"rules", {{{"op", "ner"}, {"gazetteer", {{"Albert Einstein", "person"}}}}}}});
    const std::string text = "Albert Einstein was born in Ulm.";
    const auto ents = m.gw().ner(text);
    ASSERT_EQ(ents.size(), 1u);
    EXPECT_EQ(text.substr(ents[0].span.begin, ents[0].span.end - ents[0].span.begin), "Albert Einstein");
    EXPECT_EQ(ents[0].label, "person");
}

TEST(Ner, NoEntitiesGivesEmptyList) {
    auto m = mocked({{"default_policy", "echo"}});
    EXPECT_TRUE(m.gw().ner("nothing to see here").empty());
}

TEST(Ner, OffsetsAreCodePointsOnTheWire) {
    // "cast" starts at code point 12, byte 13.
    auto m = mocked({{"rules", {{{"op", "ner"}, {"body", {{"entities", {{{"start", 12}, {"end", 16}, {"label", "person"}, {"score", 0.9}}}}}}}}}});
    const std::string text = "The Saiyūki cast";
    const auto ents = m.gw().ner(text);
    ASSERT_EQ(ents.size(), 1u);
    EXPECT_EQ(text.substr(ents[0].span.begin, ents[0].span.end - ents[0].span.begin), "cast");
}

TEST(Ner, RejectsOverlappingOrOutOfBoundsSpans) {
    auto overlap = mocked({{"rules", {{{"op", "ner"}, {"body", {{"entities", {{{"start", 0}, {"end", 5}, {"label", "person"}, {"score", 0.9}},
                                                                             {{"start", 3}, {"end", 7}, {"label", "person"}, {"score", 0.9}}}}}}}}}});
    EXPECT_EQ(code_of([&] { overlap.gw().ner("abcdefgh"); }), ErrorCode::Gateway);
    auto oob = mocked({{"rules", {{{"op", "ner"}, {"body", {{"entities", {{{"start", 0}, {"end", 50}, {"label", "person"}, {"score", 0.9}}}}}}}}}});
    EXPECT_EQ(code_of([&] { oob.gw().ner("abc"); }), ErrorCode::Gateway);
}

TEST(Ner, EmptyTextIsAPreconditionError) {
    auto m = mocked({{"default_policy", "echo"}});
    EXPECT_EQ(code_of([&] { m.gw().ner(""); }), ErrorCode::Precondition);
}

TEST(Retry, PersistentFailureMakesExactlyMaxRetriesPlusOneAttempts) {
    for (int retries : {0, 1, 2, 4}) {
        auto m = mocked({{"default_policy", "error"}}, testsupport::fast_endpoint(retries));
        EXPECT_EQ(code_of([&] { m.gw().ner("Albert Einstein"); }), ErrorCode::Gateway);
        EXPECT_EQ(m.transport->requests("/ner"), static_cast<std::size_t>(retries + 1));
        EXPECT_EQ(m.gw().metrics().attempts, static_cast<std::size_t>(retries + 1));
    }
}

TEST(Retry, RecoversWhenALaterAttemptSucceeds) {
    auto m = mocked({{"rules", {{{"op", "nli"}, {"sequence", {{{"status", 503}}, {{"status", 500}}, {{"body", {{"entailment", {0.3}}}}}}}}}}});
    EXPECT_EQ(m.gw().nli("p", {"h"}), std::vector<double>{0.3});
    EXPECT_EQ(m.transport->requests("/nli"), 3u);
}

TEST(Retry, ClientErrorsAreNotRetried) {
    auto m = mocked({{"rules", {{{"op", "chat"}, {"status", 400}}}}});
    EXPECT_EQ(code_of([&] { m.gw().chat({{"user", "hi"}}); }), ErrorCode::CallerError);
    EXPECT_EQ(m.transport->requests("/chat"), 1u);
}

TEST(Nli, ArityIsPreserved) {
    auto m = mocked({{"rules", {{{"op", "nli"}, {"scores", json::object()}, {"default", 0.25}}}}});
    std::vector<std::string> hyps;
    for (int i = 0; i < 36; ++i) hyps.push_back("hypothesis " + std::to_string(i));
    const auto out = m.gw().nli("premise", hyps);
    ASSERT_EQ(out.size(), 36u);
    for (double v : out) EXPECT_DOUBLE_EQ(v, 0.25);
}

TEST(Nli, ScriptedScoreLandsOnItsHypothesis) {
    auto m = mocked({{"rules", {{{"op", "nli"}, {"scores", {{"Shingo Katori has attribute Japan Airlines", 0.92}}}, {"default", 0.01}}}}});
    const auto out = m.gw().nli("At the end of 2005 ...", {"Japan Airlines has attribute Shingo Katori",
                                                           "Shingo Katori has attribute Japan Airlines"});
    EXPECT_EQ(out, (std::vector<double>{0.01, 0.92}));
}

TEST(Nli, EmptyHypothesesAndBadRepliesAreErrors) {
    auto m = mocked({{"default_policy", "echo"}});
    EXPECT_EQ(code_of([&] { m.gw().nli("p", {}); }), ErrorCode::Precondition);
    auto short_reply = mocked({{"rules", {{{"op", "nli"}, {"body", {{"entailment", {0.5}}}}}}}});
    EXPECT_EQ(code_of([&] { short_reply.gw().nli("p", {"a", "b"}); }), ErrorCode::Gateway);
    auto out_of_range = mocked({{"rules", {{{"op", "nli"}, {"body", {{"entailment", {1.5}}}}}}}});
    EXPECT_EQ(code_of([&] { out_of_range.gw().nli("p", {"a"}); }), ErrorCode::Gateway);
}

TEST(Embed, DeterministicUnitVectorsOfFixedDimension) {
    auto m = mocked({{"default_policy", "echo"}});
    const auto v = m.gw().embed({"Tokyo", "Osaka", "Tokyo"});
    ASSERT_EQ(v.size(), 3u);
    for (const auto& x : v) {
        ASSERT_EQ(x.size(), 8u);
        double norm = 0;
        for (double c : x) norm += c * c;
        EXPECT_NEAR(std::sqrt(norm), 1.0, 1e-6);
    }
    EXPECT_EQ(v[0], v[2]);
    EXPECT_NE(v[0], v[1]);
}

TEST(Embed, ScriptedVectorsAreNormalized) {
    auto m = mocked({{"rules", {{{"op", "embed"}, {"body", {{"vectors", {{3.0, 4.0}}}}}}}}});
    const auto v = m.gw().embed({"x"});
    EXPECT_NEAR(v[0][0], 0.6, 1e-12);
    EXPECT_NEAR(v[0][1], 0.8, 1e-12);
}

TEST(Chat, SchemaValidatedJson) {
    const json schema = {{"type", "object"}, {"required", {"answer"}}, {"properties", {{"answer", {{"type", "string"}}}}}};
    auto ok = mocked({{"rules", {{{"op", "chat"}, {"content", "Sure: {\"answer\": \"Tokyo\"}"}}}}});
    EXPECT_EQ(ok.gw().chat_json({{"user", "q"}}, schema), (json{{"answer", "Tokyo"}}));
    auto bad = mocked({{"rules", {{{"op", "chat"}, {"json", {{"reply", 3}}}}}}});
    EXPECT_EQ(code_of([&] { bad.gw().chat_json({{"user", "q"}}, schema); }), ErrorCode::SchemaViolation);
    auto prose = mocked({{"rules", {{{"op", "chat"}, {"content", "no json here"}}}}});
    EXPECT_EQ(code_of([&] { prose.gw().chat_json({{"user", "q"}}, schema); }), ErrorCode::SchemaViolation);
}

TEST(Chat, ScriptedSequenceReplaysInOrderThenSticks) {
    auto m = mocked(json::parse(R"({"rules": [{"op": "chat", "sequence": [{"content": "first"}, {"content": "second"}, {"content": "third"}]}]})"));
    EXPECT_EQ(m.gw().chat({{"user", "a"}}), "first");
    EXPECT_EQ(m.gw().chat({{"user", "b"}}), "second");
    EXPECT_EQ(m.gw().chat({{"user", "c"}}), "third");
    EXPECT_EQ(m.gw().chat({{"user", "d"}}), "third");
}

TEST(Chat, EmptyMessagesArePreconditionErrors) {
    auto m = mocked({{"default_policy", "echo"}});
    EXPECT_EQ(code_of([&] { m.gw().chat({}); }), ErrorCode::Precondition);
}

TEST(Fingerprint, IgnoresKeyOrderAndWhitespace) {
    const json a = json::parse(R"({"premise": "a  b", "hypotheses": ["x"]})");
    const json b = json::parse(R"({"hypotheses": ["x"], "premise": "a b"})");
    EXPECT_EQ(request_fingerprint("nli", a), request_fingerprint("nli", b));
    EXPECT_NE(request_fingerprint("nli", a), request_fingerprint("ner", a));
    EXPECT_EQ(request_fingerprint("nli", a).size(), 64u);
}

TEST(Fingerprint, KeyedResponsesWinOverRules) {
    const json body = {{"text", "Albert Einstein"}};
    json script = {{"responses", {{request_fingerprint("ner", body), {{"entities", json::array()}}}}},
                   {"rules", {{{"op", "ner"}, {"gazetteer", {{"Albert Einstein", "person"}}}}}}};
    auto m = mocked(script);
    EXPECT_TRUE(m.gw().ner("Albert Einstein").empty());
    EXPECT_EQ(m.gw().ner("Albert Einstein was here").size(), 1u);
}

TEST(Replay, SameScriptSameAnswers) {
    const json script = {{"default_policy", "echo"}, {"rules", {{{"op", "nli"}, {"scores", {{"h", 0.7}}}}}}};
    auto a = mocked(script);
    auto b = mocked(script);
    EXPECT_EQ(a.gw().nli("p", {"h", "g"}), b.gw().nli("p", {"h", "g"}));
    EXPECT_EQ(a.gw().embed({"t"}), b.gw().embed({"t"}));
}

TEST(Config, EndpointValidationAndRoundTrip) {
    EXPECT_THROW(endpoint_config_from_json({{"timeout_ms", 0}}), Error);
    EXPECT_THROW(endpoint_config_from_json({{"max_retries", -1}}), Error);
    auto c = endpoint_config_from_json({{"base_url", "http://h:1/v1"}, {"api_key_env", "KEY"}});
    EXPECT_EQ(endpoint_config_from_json(to_json(c)).base_url, "http://h:1/v1");
    EXPECT_EQ(*endpoint_config_from_json(to_json(c)).api_key_env, "KEY");
}

// The HTTP transport speaks the documented wire protocol to a live local server.
TEST(HttpWire, FourEndpointsOverLoopback) {
    httplib::Server server;
    std::vector<std::pair<std::string, json>> seen;
    std::mutex mu;
    auto record = [&](const httplib::Request& req) {
        std::lock_guard lock(mu);
        seen.emplace_back(req.path, json::parse(req.body));
        return req.get_header_value("Authorization");
    };
    server.Post("/api/ner", [&](const httplib::Request& req, httplib::Response& res) {
        EXPECT_EQ(record(req), "Bearer secret");
        res.set_content(R"({"entities": [{"start": 0, "end": 6, "label": "location", "score": 0.8}]})", "application/json");
    });
    server.Post("/api/nli", [&](const httplib::Request& req, httplib::Response& res) {
        record(req);
        res.set_content(R"({"entailment": [0.1, 0.9]})", "application/json");
    });
    server.Post("/api/embed", [&](const httplib::Request& req, httplib::Response& res) {
        record(req);
        res.set_content(R"({"vectors": [[1.0, 0.0]]})", "application/json");
    });
    server.Post("/api/chat", [&](const httplib::Request& req, httplib::Response& res) {
        record(req);
        res.set_content(R"({"content": "{\"answer\": \"Tokyo\"}"})", "application/json");
    });
    server.Post("/api/broken", [](const httplib::Request&, httplib::Response& res) { res.status = 500; });
    const int port = server.bind_to_any_port("127.0.0.1");
    std::thread th([&] { server.listen_after_bind(); });
    server.wait_until_ready();

    EndpointConfig cfg = testsupport::fast_endpoint(1);
    cfg.base_url = "http://127.0.0.1:" + std::to_string(port) + "/api";
    auto transport = std::make_shared<HttpTransport>(cfg.base_url, std::string("secret"));
    ModelGateway gw(transport, cfg);

    EXPECT_EQ(gw.ner("Osaka is large").at(0).span.end, 6u);
    EXPECT_EQ(gw.nli("p", {"a", "b"}), (std::vector<double>{0.1, 0.9}));
    EXPECT_EQ(gw.embed({"x"}).at(0), (std::vector<double>{1.0, 0.0}));
    const json schema = {{"type", "object"}, {"required", {"answer"}}};
    EXPECT_EQ(gw.chat_json({{"user", "q"}}, schema)["answer"], "Tokyo");
    EXPECT_EQ(transport->post("/broken", json::object(), 1000).status, 500);

    server.stop();
    th.join();

    ASSERT_EQ(seen.size(), 4u);
    EXPECT_EQ(seen[0].first, "/api/ner");
    EXPECT_EQ(seen[0].second, (json{{"text", "Osaka is large"}}));
    EXPECT_EQ(seen[1].second, (json{{"premise", "p"}, {"hypotheses", {"a", "b"}}}));
    EXPECT_EQ(seen[2].second, (json{{"texts", {"x"}}}));
    EXPECT_EQ(seen[3].second["messages"], (json::array({{{"role", "user"}, {"content", "q"}}})));
    EXPECT_EQ(seen[3].second["schema"], schema);
}

TEST(HttpWire, UnreachableEndpointIsAGatewayErrorAfterRetries) {
    EndpointConfig cfg = testsupport::fast_endpoint(1);
    cfg.timeout_ms = 200;
    auto transport = std::make_shared<HttpTransport>("http://127.0.0.1:1");
    ModelGateway gw(transport, cfg);
    EXPECT_EQ(code_of([&] { gw.nli("p", {"h"}); }), ErrorCode::Gateway);
    EXPECT_EQ(gw.metrics().attempts, 2u);
}
