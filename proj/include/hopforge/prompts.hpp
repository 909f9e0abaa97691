#pragma once

#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include <hopforge/model_gateway.hpp>

namespace hopforge::prompts {

inline constexpr std::string_view kVersion = "v1";

/// Task identifiers. Each task has a fixed contract: the JSON payload sent
/// as the user message and the JSON schema the reply must satisfy.
inline constexpr std::string_view kCoreference = "coreference";
inline constexpr std::string_view kClue = "clue";
inline constexpr std::string_view kCompose = "compose";
inline constexpr std::string_view kParaphrase = "paraphrase";
inline constexpr std::string_view kAnswer = "answer";
inline constexpr std::string_view kRewrite = "rewrite";
inline constexpr std::string_view kStructure = "structure";
inline constexpr std::string_view kDecompose = "decompose";
inline constexpr std::string_view kVerify = "verify";

/// System instructions for a task; the first line is "TASK: <name> (<version>)".
std::string_view instructions(std::string_view task);

/// Response schema for a task.
const nlohmann::json& response_schema(std::string_view task);

/// [system instructions, user payload serialized as JSON].
std::vector<ChatMessage> messages(std::string_view task, const nlohmann::json& payload);

}  // namespace hopforge::prompts
