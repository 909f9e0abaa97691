#include <hopforge/json_schema.hpp>

#include <gtest/gtest.h>

using namespace hopforge;
using nlohmann::json;

namespace {
const json kAnswer = {{"type", "object"},
                      {"required", {"answer"}},
                      {"properties", {{"answer", {{"type", "string"}}}}}};
}

TEST(Schema, AcceptsConformingObject) { EXPECT_FALSE(schema_violation({{"answer", "Tokyo"}}, kAnswer)); }

TEST(Schema, ReportsMissingRequiredKey) {
    auto v = schema_violation({{"reply", "Tokyo"}}, kAnswer);
    ASSERT_TRUE(v);
    EXPECT_NE(v->find("answer"), std::string::npos);
}

TEST(Schema, ChecksTypesEnumsAndBounds) {
    const json s = {{"type", "object"},
                    {"additionalProperties", false},
                    {"properties",
                     {{"v", {{"type", "string"}, {"enum", {"Y", "N"}}}},
                      {"c", {{"type", "number"}, {"minimum", 0}, {"maximum", 1}}},
                      {"xs", {{"type", "array"}, {"minItems", 1}, {"items", {{"type", "integer"}}}}}}}};
    EXPECT_FALSE(schema_violation({{"v", "Y"}, {"c", 0.5}, {"xs", {1, 2}}}, s));
    EXPECT_TRUE(schema_violation({{"v", "Q"}}, s));
    EXPECT_TRUE(schema_violation({{"c", 1.5}}, s));
    EXPECT_TRUE(schema_violation({{"xs", json::array()}}, s));
    EXPECT_TRUE(schema_violation({{"xs", {1.5}}}, s));
    EXPECT_TRUE(schema_violation({{"extra", 1}}, s));
}

TEST(Schema, TypeUnions) {
    const json s = {{"type", {"string", "null"}}};
    EXPECT_FALSE(schema_violation(nullptr, s));
    EXPECT_FALSE(schema_violation("x", s));
    EXPECT_TRUE(schema_violation(3, s));
}
