#pragma once

#include <optional>
#include <string>

#include <nlohmann/json.hpp>

namespace hopforge {

/// Validates `value` against the JSON-schema subset used by the prompt
/// contracts: type, enum, properties, required, additionalProperties (bool),
/// items, minItems, maxItems, minLength, minimum, maximum.
/// Returns a description of the first violation, or nullopt when valid.
std::optional<std::string> schema_violation(const nlohmann::json& value, const nlohmann::json& schema);

}  // namespace hopforge
