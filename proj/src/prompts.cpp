#include <hopforge/prompts.hpp>

#include <hopforge/error.hpp>

#include <map>
#include <string>

namespace hopforge::prompts {

using nlohmann::json;

namespace {

struct Task {
    std::string instructions;
    json schema;
};

json string_field(const char* name) {
    return {{"type", "object"},
            {"required", {name}},
            {"properties", {{name, {{"type", "string"}, {"minLength", 1}}}}}};
}

const std::map<std::string, Task, std::less<>>& tasks() {
    static const std::map<std::string, Task, std::less<>> kTasks = [] {
        std::map<std::string, Task, std::less<>> t;
        t["coreference"] = {
            "Rewrite the paragraph in 'text' so that every pronoun or descriptive phrase that refers to "
            "'entity' is replaced with the explicit name 'entity'. Change nothing else. "
            "Reply with JSON {\"text\": string}.",
            string_field("text")};
        t["clue"] = {
            "Turn the evidence passage into one descriptive but oblique clue about 'node'. The clue must "
            "describe the node by category, relation and event, never by name. It must not contain any "
            "string listed in 'banned'. Use 'relation' and 'attributes' as context. "
            "Reply with JSON {\"clue\": string, \"attributes_used\": [string]}.",
            {{"type", "object"},
             {"required", {"clue"}},
             {"properties",
              {{"clue", {{"type", "string"}, {"minLength", 1}}},
               {"attributes_used", {{"type", "array"}, {"items", {{"type", "string"}}}}}}}}};
        t["compose"] = {
            "Nest the clues, deepest first, into one question whose single answer is the entity described "
            "by 'seed_attributes'. Never name the answer or any string in 'banned'. At most 'max_words' "
            "words. Reply with JSON {\"question\": string}.",
            string_field("question")};
        t["paraphrase"] = {
            "Paraphrase 'question' without changing its meaning or answer. Keep generalized descriptors "
            "general. Reply with JSON {\"question\": string}.",
            string_field("question")};
        t["answer"] = {
            "Answer the question with the name of a single entity. Reply with JSON {\"answer\": string}.",
            string_field("answer")};
        t["rewrite"] = {
            "Rewrite 'question' so it is harder to search while keeping the same unique answer. Use only "
            "the clues given, phrase them implicitly, and do not use any string in 'banned'. Keep at most "
            "'max_words' words. Reply with JSON {\"question\": string}.",
            string_field("question")};
        t["structure"] = {
            "Extract the subject, object and attribute elements of 'question' and link them with the "
            "relations causes, part_of, is_a, has_attribute, requires, used_for. Reply with JSON "
            "{\"nodes\": [{\"id\": string, \"label\": string, \"kind\": \"subject\"|\"object\"|\"attribute\"}], "
            "\"edges\": [{\"from\": string, \"to\": string, \"relation\": string}]}.",
            {{"type", "object"},
             {"required", {"nodes", "edges"}},
             {"properties",
              {{"nodes",
                {{"type", "array"},
                 {"items",
                  {{"type", "object"},
                   {"required", {"id", "label", "kind"}},
                   {"properties",
                    {{"id", {{"type", "string"}}},
                     {"label", {{"type", "string"}}},
                     {"kind", {{"type", "string"}, {"enum", {"subject", "object", "attribute"}}}}}}}}}},
               {"edges",
                {{"type", "array"},
                 {"items",
                  {{"type", "object"},
                   {"required", {"from", "to", "relation"}},
                   {"properties",
                    {{"from", {{"type", "string"}}},
                     {"to", {{"type", "string"}}},
                     {"relation",
                      {{"type", "string"},
                       {"enum", {"causes", "part_of", "is_a", "has_attribute", "requires", "used_for"}}}}}}}}}}}}}};
        t["decompose"] = {
            "Decompose 'question' into atomic, verifiable constraints. For each give the field (time, "
            "location, entity_type, or an attribute name), operator (equals, within, contains, category), "
            "the raw value phrase, its [start, end) character span in the question, and a confidence. "
            "Reply with JSON {\"predicates\": [{\"field\", \"operator\", \"value\", \"span\", \"confidence\", "
            "\"attribute\"?}]}.",
            {{"type", "object"},
             {"required", {"predicates"}},
             {"properties",
              {{"predicates",
                {{"type", "array"},
                 {"items",
                  {{"type", "object"},
                   {"required", {"field", "operator", "value", "confidence"}},
                   {"properties",
                    {{"field", {{"type", "string"}, {"minLength", 1}}},
                     {"operator", {{"type", "string"}, {"enum", {"equals", "within", "contains", "category"}}}},
                     {"value", {{"type", "string"}}},
                     {"span", {{"type", "array"}, {"minItems", 2}, {"maxItems", 2}, {"items", {{"type", "integer"}}}}},
                     {"confidence", {{"type", "number"}, {"minimum", 0}, {"maximum", 1}}},
                     {"attribute", {{"type", "string"}}}}}}}}}}}}};
        t["verify"] = {
            "Judge each predicate against the evidence passages for 'candidate'. Verdict Y (match), P "
            "(partial), U (unknown) or N (contradiction). Y and N must cite the evidence ref they rely on. "
            "Reply with JSON {\"verdicts\": [{\"index\": int, \"verdict\": \"Y\"|\"P\"|\"U\"|\"N\", "
            "\"evidence_ref\": string, \"justification\": string}]}.",
            {{"type", "object"},
             {"required", {"verdicts"}},
             {"properties",
              {{"verdicts",
                {{"type", "array"},
                 {"items",
                  {{"type", "object"},
                   {"required", {"index", "verdict"}},
                   {"properties",
                    {{"index", {{"type", "integer"}, {"minimum", 0}}},
                     {"verdict", {{"type", "string"}, {"enum", {"Y", "P", "U", "N"}}}},
                     {"evidence_ref", {{"type", "string"}}},
                     {"justification", {{"type", "string"}}}}}}}}}}}}};
        return t;
    }();
    return kTasks;
}

const Task& task(std::string_view name) {
    auto it = tasks().find(name);
    if (it == tasks().end()) fail(ErrorCode::Usage, "unknown prompt task '" + std::string(name) + "'");
    return it->second;
}

}  // namespace

std::string_view instructions(std::string_view name) { return task(name).instructions; }

const json& response_schema(std::string_view name) { return task(name).schema; }

std::vector<ChatMessage> messages(std::string_view name, const json& payload) {
    std::string system = "TASK: " + std::string(name) + " (" + std::string(kVersion) + ")\n";
    system += task(name).instructions;
    return {{"system", std::move(system)}, {"user", payload.dump()}};
}

}  // namespace hopforge::prompts
