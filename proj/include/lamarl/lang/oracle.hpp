#pragma once

#include "lamarl/env/grid_world.hpp"
#include "lamarl/lang/vocabulary.hpp"

#include <optional>
#include <span>
#include <vector>

namespace lamarl::lang {

/// Absolute map zone from a 3x3 partition into equal bands.
struct Zone {
  enum class Vertical { North, Middle, South };
  enum class Horizontal { West, Middle, East };
  Vertical vertical = Vertical::Middle;
  Horizontal horizontal = Horizontal::Middle;
  bool operator==(const Zone&) const = default;
};

/// Band index in {0, 1, 2} for a coordinate on an axis of `extent` cells.
int band(int index, int extent);
Zone zone_of(env::Cell cell, int grid_size);
/// "North"/"South" then "East"/"West", or "Center" for the middle zone.
std::vector<TokenId> zone_tokens(const Zone& zone, const Vocabulary& vocab);

/// A task-relevant entity as seen by one agent.
struct VisibleEntity {
  env::Cell pos;
  /// Entity word ("Prey", "Gem") or none for landmarks.
  std::optional<TokenId> kind;
  /// Color word for gems and landmarks.
  std::optional<TokenId> color;
};

/// Describes entities in row-major order: [kind] [color] zone..., then EOS.
/// Whole entities are dropped once the description would exceed `max_length`
/// tokens including EOS.
Description describe_entities(std::span<const VisibleEntity> entities, int grid_size, const Vocabulary& vocab,
                              int max_length = kMaxDescriptionLength);

/// Entities the oracle reports for `agent`: uncaptured preys or unforaged
/// resources in the 5x5 window, or the landmark under the agent.
std::vector<VisibleEntity> visible_entities(const env::GridState& state, int agent, const Vocabulary& vocab);

/// Rule-based oracle description of one agent's current observation.
Description describe(const env::GridState& state, int agent, const Vocabulary& vocab);

}  // namespace lamarl::lang
