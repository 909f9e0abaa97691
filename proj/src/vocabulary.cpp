#include <hopforge/vocabulary.hpp>

#include <hopforge/error.hpp>

namespace hopforge {

std::string_view to_string(ErrorCode code) noexcept {
    switch (code) {
        case ErrorCode::NotFound: return "not_found";
        case ErrorCode::Io: return "io";
        case ErrorCode::InvalidInput: return "invalid_input";
        case ErrorCode::Precondition: return "precondition";
        case ErrorCode::Gateway: return "gateway";
        case ErrorCode::CallerError: return "caller_error";
        case ErrorCode::SchemaViolation: return "schema_violation";
        case ErrorCode::Generation: return "generation";
        case ErrorCode::Config: return "config";
        case ErrorCode::Usage: return "usage";
    }
    return "unknown";
}

std::string_view to_string(EntityLabel label) noexcept {
    switch (label) {
        case EntityLabel::Person: return "person";
        case EntityLabel::Location: return "location";
        case EntityLabel::Organization: return "organization";
        case EntityLabel::EventMisc: return "event_misc";
    }
    return "event_misc";
}

std::optional<EntityLabel> parse_entity_label(std::string_view name) noexcept {
    for (auto l : kEntityLabels) {
        if (to_string(l) == name) return l;
    }
    return std::nullopt;
}

std::string_view to_string(RelationType r) noexcept {
    switch (r) {
        case RelationType::Causes: return "causes";
        case RelationType::PartOf: return "part_of";
        case RelationType::IsA: return "is_a";
        case RelationType::HasAttribute: return "has_attribute";
        case RelationType::Requires: return "requires";
        case RelationType::UsedFor: return "used_for";
    }
    return "causes";
}

std::optional<RelationType> parse_relation(std::string_view name) noexcept {
    for (auto r : kRelationTypes) {
        if (to_string(r) == name) return r;
    }
    return std::nullopt;
}

std::string_view to_string(Direction d) noexcept {
    return d == Direction::Forward ? "forward" : "backward";
}

std::optional<Direction> parse_direction(std::string_view name) noexcept {
    if (name == "forward") return Direction::Forward;
    if (name == "backward") return Direction::Backward;
    return std::nullopt;
}

}  // namespace hopforge
