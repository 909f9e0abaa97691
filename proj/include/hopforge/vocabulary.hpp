#pragma once

#include <array>
#include <optional>
#include <string_view>

namespace hopforge {

enum class EntityLabel { Person, Location, Organization, EventMisc };

inline constexpr std::array<EntityLabel, 4> kEntityLabels = {
    EntityLabel::Person, EntityLabel::Location, EntityLabel::Organization, EntityLabel::EventMisc};

std::string_view to_string(EntityLabel label) noexcept;
/// Accepts the four canonical names only.
std::optional<EntityLabel> parse_entity_label(std::string_view name) noexcept;

/// The six logical relation types, in template-table order. The order is
/// significant: it is the first tie-breaker in relation classification.
enum class RelationType { Causes, PartOf, IsA, HasAttribute, Requires, UsedFor };

inline constexpr std::array<RelationType, 6> kRelationTypes = {
    RelationType::Causes,        RelationType::PartOf,  RelationType::IsA,
    RelationType::HasAttribute, RelationType::Requires, RelationType::UsedFor};

std::string_view to_string(RelationType r) noexcept;
std::optional<RelationType> parse_relation(std::string_view name) noexcept;

/// forward: parent (U) -> candidate (V); backward: V -> U.
enum class Direction { Forward, Backward };

std::string_view to_string(Direction d) noexcept;
std::optional<Direction> parse_direction(std::string_view name) noexcept;

}  // namespace hopforge
