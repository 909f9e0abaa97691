#include <hopforge/error.hpp>
#include <hopforge/node_builder.hpp>
#include <hopforge/prompts.hpp>

#include <gtest/gtest.h>

#include "support.hpp"

#include <algorithm>

using namespace hopforge;
using nlohmann::json;
using testsupport::fixture;

namespace {

CorpusStore fixture_store() {
    CorpusStore s;
    s.ingest_file(fixture("corpus.jsonl"));
    return s;
}

std::vector<std::string> titles_of(const CandidateSet& s) {
    std::vector<std::string> out;
    for (const auto& c : s.accepted) out.push_back(c.title);
    return out;
}

const CandidateRejection* rejection_for(const CandidateSet& s, std::string_view target) {
    for (const auto& r : s.rejected)
        if (r.target == target) return &r;
    return nullptr;
}

}  // namespace

TEST(Preprocess, DropsSeeAlsoAndReferences) {
    auto store = fixture_store();
    auto m = testsupport::mocked_file(fixture("airline_mock.json"));
    NodeBuilder nb(store, m.gw());
    const auto doc = nb.preprocess(store.get_page("Japan Airlines"));
    ASSERT_EQ(doc.paragraphs.size(), 3u);
    for (const auto& p : doc.paragraphs) EXPECT_EQ(p.section, "History");
    for (const auto& l : doc.outlinks) EXPECT_NE(l.target_title, "List of airlines of Japan");
    EXPECT_EQ(doc.outlinks.size(), 4u);
}

TEST(Preprocess, OnlyReferencesIsAnEmptyDocument) {
    auto store = testsupport::store_of({{{"title", "Stub"},
                                         {"sections", {{{"name", "References"}, {"paragraphs", {"[1] x"}}}}}}});
    auto m = testsupport::mocked({{"default_policy", "echo"}});
    NodeBuilder nb(store, m.gw());
    try {
        (void)nb.preprocess(store.get_page("Stub"));
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::InvalidInput);
    }
}

TEST(Preprocess, NoDroppableSectionsKeepsParagraphs) {
    auto store = fixture_store();
    auto m = testsupport::mocked({{"default_policy", "echo"}});
    NodeBuilder nb(store, m.gw());
    const auto page = store.get_page("Physics Notes");
    const auto doc = nb.preprocess(page);
    ASSERT_EQ(doc.paragraphs.size(), page.paragraphs.size());
    for (std::size_t i = 0; i < page.paragraphs.size(); ++i) EXPECT_EQ(doc.paragraphs[i].text, page.paragraphs[i].text);
}

TEST(StripMarkup, RemovesCitationsTemplatesAndQuotes) {
    EXPECT_EQ(strip_markup("Founded in 1951.[1] It '''grew'''{{citation needed}}."), "Founded in 1951. It grew.");
    EXPECT_EQ(strip_markup("Flew to [[Tokyo|the capital]]<ref>x</ref> daily."), "Flew to the capital daily.");
}

TEST(Candidates, EntityLinksAcceptedAbstractOnesRejected) {
    auto store = fixture_store();
    auto m = testsupport::mocked_file(fixture("airline_mock.json"));
    NodeBuilder nb(store, m.gw());
    const auto page = store.get_page("Physics Notes");
    const auto set = nb.extract_and_filter_candidates(nb.preprocess(page), page);
    EXPECT_EQ(titles_of(set), (std::vector<std::string>{"Albert Einstein", "Pacific Ocean", "Bytedance Inc", "World War II"}));
    EXPECT_EQ(set.accepted[0].label, EntityLabel::Person);
    EXPECT_EQ(set.accepted[1].label, EntityLabel::Location);
    EXPECT_EQ(set.accepted[2].label, EntityLabel::Organization);
    EXPECT_EQ(set.accepted[3].label, EntityLabel::EventMisc);
    for (const char* t : {"Philosophy", "Meditation", "Ocean", "List of countries"}) {
        EXPECT_NE(rejection_for(set, t), nullptr) << t;
    }
    EXPECT_EQ(rejection_for(set, "Philosophy")->reason, "label 'concept' not accepted");
    EXPECT_EQ(rejection_for(set, "Meditation")->reason, "ner score below threshold");
}

TEST(Candidates, RepeatedLinkMergesWithFrequency) {
    json links = json::array();
    for (int p = 0; p < 3; ++p) links.push_back({{"anchor", "Tokyo"}, {"target", "Tokyo"}, {"paragraph", p}});
    auto store = testsupport::store_of({testsupport::page_doc("Hub", {"Hub flies to Tokyo.", "Tokyo again for Hub.", "Hub and Tokyo."}, links),
                                        testsupport::page_doc("Tokyo", {"Capital."})});
    auto m = testsupport::mocked({{"rules", {{{"op", "ner"}, {"gazetteer", {{"Tokyo", "location"}}}}}}});
    NodeBuilder nb(store, m.gw());
    const auto page = store.get_page("Hub");
    const auto set = nb.build(page);
    ASSERT_EQ(set.accepted.size(), 1u);
    EXPECT_EQ(set.accepted[0].mention_frequency, 3);
    EXPECT_EQ(set.accepted[0].paragraph_indices, (std::vector<int>{0, 1, 2}));
    EXPECT_EQ(set.accepted[0].evidence.paragraph_index, 0);
    EXPECT_EQ(set.accepted[0].evidence.text, "Hub flies to Tokyo.");
}

TEST(Candidates, DanglingAndSelfLinksRejected) {
    json links = {{{"anchor", "Nowhere"}, {"target", "Nowhere"}, {"paragraph", 0}},
                  {{"anchor", "Hub"}, {"target", "Hub"}, {"paragraph", 0}}};
    auto store = testsupport::store_of({testsupport::page_doc("Hub", {"Hub flies to Nowhere."}, links)});
    auto m = testsupport::mocked({{"default_policy", "echo"}});
    NodeBuilder nb(store, m.gw());
    const auto page = store.get_page("Hub");
    const auto set = nb.extract_and_filter_candidates(nb.preprocess(page), page);
    EXPECT_TRUE(set.accepted.empty());
    EXPECT_EQ(rejection_for(set, "Nowhere")->reason, "dangling link");
    EXPECT_EQ(rejection_for(set, "Hub")->reason, "self link");
}

TEST(Candidates, NerFailurePropagates) {
    auto store = fixture_store();
    auto m = testsupport::mocked({{"default_policy", "error"}});
    NodeBuilder nb(store, m.gw());
    const auto page = store.get_page("Physics Notes");
    EXPECT_THROW(nb.extract_and_filter_candidates(nb.preprocess(page), page), Error);
}

TEST(Candidates, EveryAcceptedLabelClearsTheThresholdAndRaisingItNeverAdds) {
    auto store = fixture_store();
    std::vector<std::string> previous;
    for (double th : {0.0, 0.2, 0.31, 0.5, 0.89, 0.9, 0.91, 1.0}) {
        auto m = testsupport::mocked_file(fixture("airline_mock.json"));
        NodeBuilderConfig cfg;
        cfg.ner_threshold = th;
        NodeBuilder nb(store, m.gw(), cfg);
        std::vector<std::string> titles;
        for (const auto& title : store.titles()) {
            const auto page = store.get_page(title);
            CleanDocument doc;
            try {
                doc = nb.preprocess(page);
            } catch (const Error&) {
                continue;
            }
            for (const auto& c : nb.extract_and_filter_candidates(doc, page).accepted) {
                EXPECT_GE(c.ner_score, th);
                titles.push_back(title + ">" + c.title);
            }
        }
        std::sort(titles.begin(), titles.end());
        if (th > 0.0) {
            EXPECT_TRUE(std::includes(previous.begin(), previous.end(), titles.begin(), titles.end())) << th;
        }
        previous = titles;
    }
}

TEST(Evidence, ParagraphWithSeedIsReturnedUnchanged) {
    auto store = fixture_store();
    auto m = testsupport::mocked_file(fixture("airline_mock.json"));
    NodeBuilder nb(store, m.gw());
    const auto seed = store.get_page("Japan Airlines");
    const auto set = nb.build(seed);
    EXPECT_EQ(titles_of(set), (std::vector<std::string>{"Boeing 777", "Shingo Katori", "Saiyūki (TV series)", "Oneworld"}));
    const auto& katori = set.accepted[1];
    EXPECT_EQ(katori.evidence.paragraph_index, 1);
    EXPECT_EQ(katori.evidence.text, seed.paragraphs[1].text);
    EXPECT_EQ(katori.evidence.source_title, "Japan Airlines");
    // Oneworld's paragraph names the seed only through its alias JAL.
    EXPECT_EQ(set.accepted[3].evidence.paragraph_index, 2);
}

TEST(Evidence, NoSeedMentionIsRejected) {
    auto store = fixture_store();
    auto m = testsupport::mocked_file(fixture("airline_mock.json"));
    NodeBuilder nb(store, m.gw());
    const auto set = nb.build(store.get_page("Physics Notes"));
    EXPECT_TRUE(set.accepted.empty());
    for (const char* t : {"Albert Einstein", "Pacific Ocean", "Bytedance Inc", "World War II"}) {
        ASSERT_NE(rejection_for(set, t), nullptr);
        EXPECT_EQ(rejection_for(set, t)->reason, "no co-occurrence");
    }
}

TEST(Evidence, CoreferenceReplacesTheAmbiguousMention) {
    json links = {{{"anchor", "Tokyo"}, {"target", "Tokyo"}, {"paragraph", 1}}};
    auto store = testsupport::store_of(
        {testsupport::page_doc("Japan Airlines", {"Japan Airlines is a carrier.", "The airline is based in Tokyo."}, links),
         testsupport::page_doc("Tokyo", {"Capital."})});
    json script = {{"rules",
                    {{{"op", "ner"}, {"gazetteer", {{"Tokyo", "location"}}}},
                     testsupport::chat_rule(prompts::kCoreference, {"The airline is based"},
                                            {{"text", "Japan Airlines is based in Tokyo."}})}}};
    auto m = testsupport::mocked(script);
    NodeBuilderConfig cfg;
    cfg.coreference = true;
    NodeBuilder nb(store, m.gw(), cfg);
    const auto set = nb.build(store.get_page("Japan Airlines"));
    ASSERT_EQ(set.accepted.size(), 1u);
    EXPECT_EQ(set.accepted[0].evidence.text, "Japan Airlines is based in Tokyo.");

    cfg.coreference = false;
    NodeBuilder plain(store, m.gw(), cfg);
    EXPECT_EQ(plain.build(store.get_page("Japan Airlines")).rejected.at(0).reason, "no co-occurrence");
}

TEST(Evidence, CoreferenceFailureFallsBackToRawParagraph) {
    json links = {{{"anchor", "Tokyo"}, {"target", "Tokyo"}, {"paragraph", 0}}};
    auto store = testsupport::store_of({testsupport::page_doc("JAL", {"JAL flies to Tokyo."}, links),
                                        testsupport::page_doc("Tokyo", {"Capital."})});
    json script = {{"rules", {{{"op", "ner"}, {"gazetteer", {{"Tokyo", "location"}}}}, {{"op", "chat"}, {"status", 503}}}}};
    auto m = testsupport::mocked(script);
    NodeBuilderConfig cfg;
    cfg.coreference = true;
    NodeBuilder nb(store, m.gw(), cfg);
    const auto set = nb.build(store.get_page("JAL"));
    ASSERT_EQ(set.accepted.size(), 1u);
    EXPECT_EQ(set.accepted[0].evidence.text, "JAL flies to Tokyo.");
}

TEST(Enrich, AttributesEmptyAndUnknown) {
    auto store = fixture_store();
    auto m = testsupport::mocked({{"default_policy", "echo"}});
    NodeBuilder nb(store, m.gw());
    const auto attrs = nb.enrich_entity("Japan Airlines");
    EXPECT_EQ(attrs.at("founding year"), "1951");
    EXPECT_EQ(attrs.at("alliance"), "Oneworld");
    EXPECT_TRUE(nb.enrich_entity("Physics Notes").empty());
    try {
        (void)nb.enrich_entity("Atlantis");
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::NotFound);
    }
}

TEST(CandidateJson, RoundTrips) {
    CandidateEntity c;
    c.title = "Saiyūki (TV series)";
    c.anchor_text = "Saiyūki";
    c.label = EntityLabel::EventMisc;
    c.ner_score = 0.9;
    c.mention_frequency = 2;
    c.evidence = {"Japan Airlines", 1, "text"};
    c.paragraph_indices = {1, 4};
    c.attributes = {{"network", "Fuji TV"}};
    EXPECT_EQ(candidate_from_json(to_json(c)), c);
}
