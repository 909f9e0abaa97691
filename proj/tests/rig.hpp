#pragma once

#include <hopforge/graph_expander.hpp>
#include <hopforge/node_builder.hpp>
#include <hopforge/relation_engine.hpp>

#include "support.hpp"

#include <memory>

namespace testsupport {

/// Store, scripted gateway and the expansion stack wired together.
struct ExpansionRig {
    hopforge::CorpusStore store;
    Mocked mock;
    std::unique_ptr<hopforge::NodeBuilder> nodes;
    std::unique_ptr<hopforge::RelationEngine> relations;
    std::unique_ptr<hopforge::GraphExpander> expander;

    ExpansionRig(hopforge::CorpusStore s, const json& script, double nli_threshold = 0.45)
        : store(std::move(s)), mock(mocked(script)) {
        nodes = std::make_unique<hopforge::NodeBuilder>(store, mock.gw());
        hopforge::RelationEngineConfig rc;
        rc.nli_threshold = nli_threshold;
        relations = std::make_unique<hopforge::RelationEngine>(mock.gw(), rc);
        expander = std::make_unique<hopforge::GraphExpander>(store, *nodes, *relations);
    }

    static ExpansionRig fixture_corpus(const std::string& dir, double nli_threshold = 0.45) {
        hopforge::CorpusStore s;
        s.ingest_file(fixture(dir + "/corpus.jsonl"));
        return ExpansionRig(std::move(s), load_json(fixture(dir + "/mock_script.json")), nli_threshold);
    }
};

}  // namespace testsupport
