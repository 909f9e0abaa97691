#pragma once

#include <hopforge/corpus_store.hpp>
#include <hopforge/model_gateway.hpp>

#include <nlohmann/json.hpp>

#include <filesystem>
#include <fstream>
#include <memory>
#include <random>
#include <sstream>
#include <string>
#include <string_view>

namespace testsupport {

using nlohmann::json;

inline std::string fixture(std::string_view rel) { return std::string(HOPFORGE_FIXTURES) + "/" + std::string(rel); }

inline json load_json(const std::string& path) {
    std::ifstream in(path);
    return json::parse(in);
}

inline hopforge::EndpointConfig fast_endpoint(int max_retries = 2) {
    hopforge::EndpointConfig c;
    c.backoff_ms = 0;
    c.max_retries = max_retries;
    return c;
}

/// A gateway replaying a mock script, with the transport kept for counting.
struct Mocked {
    std::shared_ptr<hopforge::ScriptedTransport> transport;
    std::shared_ptr<hopforge::ModelGateway> gateway;

    hopforge::ModelGateway& gw() { return *gateway; }
};

inline Mocked mocked(const json& script, hopforge::EndpointConfig cfg = fast_endpoint()) {
    auto s = std::make_shared<const hopforge::MockScript>(hopforge::MockScript::from_json(script));
    auto t = std::make_shared<hopforge::ScriptedTransport>(s);
    return {t, std::make_shared<hopforge::ModelGateway>(t, cfg)};
}

inline Mocked mocked_file(const std::string& path) { return mocked(load_json(path)); }

/// Chat rule answering `task` prompts whose payload contains every needle.
inline json chat_rule(std::string_view task, std::vector<std::string> needles, json reply) {
    needles.insert(needles.begin(), "TASK: " + std::string(task) + " ");
    return {{"op", "chat"}, {"contains", needles}, {"json", std::move(reply)}};
}

/// One-page corpus document with a single section.
inline json page_doc(const std::string& title, std::vector<std::string> paragraphs, json links = json::array(),
                     json attributes = json::object(), std::vector<std::string> aliases = {}) {
    return {{"title", title},
            {"aliases", aliases},
            {"sections", json::array({{{"name", "Overview"}, {"paragraphs", paragraphs}}})},
            {"links", links},
            {"attributes", attributes}};
}

inline hopforge::CorpusStore store_of(const std::vector<json>& docs) {
    hopforge::CorpusStore store;
    std::stringstream ss;
    for (const auto& d : docs) ss << d.dump() << "\n";
    store.ingest(ss);
    return store;
}

inline std::filesystem::path temp_dir(std::string_view name) {
    auto dir = std::filesystem::temp_directory_path() / ("hopforge_test_" + std::string(name));
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

inline std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace testsupport
