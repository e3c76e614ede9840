#pragma once

#include <nlohmann/json.hpp>

#include <array>
#include <compare>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace lamarl::env {

enum class Task { PredatorPrey, Foraging, CoordinatedPlacement };

enum class Action : int { Noop = 0, Up = 1, Down = 2, Left = 3, Right = 4 };
inline constexpr int kNumActions = 5;

std::string_view to_string(Task t);
Task task_from_string(std::string_view name);
std::string_view to_string(Action a);

struct Cell {
  int row = 0;
  int col = 0;
  auto operator<=>(const Cell&) const = default;
};

/// Landmark palette for coordinated placement (six colors).
enum class LandmarkColor { Red, Green, Blue, Yellow, Cyan, Purple };
inline constexpr int kNumLandmarkColors = 6;
std::string_view to_string(LandmarkColor c);

using Rgb = std::array<double, 3>;

/// Fixed RGB palette shared by observations and the live console.
namespace palette {
inline constexpr Rgb kBackground{1.0, 1.0, 1.0};
inline constexpr Rgb kWall{0.0, 0.0, 0.0};
inline constexpr Rgb kAgent{0.0, 0.0, 1.0};
inline constexpr Rgb kPrey{1.0, 0.0, 0.0};
inline constexpr Rgb kYellow{1.0, 1.0, 0.0};
inline constexpr Rgb kGreen{0.0, 1.0, 0.0};
inline constexpr Rgb kPurple{0.5, 0.0, 0.5};
Rgb resource(int level);
Rgb landmark(LandmarkColor c);
}  // namespace palette

struct GridConfig {
  int width = 18;
  int height = 18;
  int n_agents = 4;
  Task task = Task::PredatorPrey;
  int episode_limit = 100;
  std::uint64_t seed = 0;
  /// Predator-prey only.
  int n_preys = 2;

  /// Throws std::invalid_argument when an invariant is broken.
  void validate() const;
  int size() const { return width; }
  bool operator==(const GridConfig&) const = default;

  static GridConfig predator_prey(int size = 18);
  static GridConfig foraging(int size = 18);
  static GridConfig coordinated_placement(int size = 18);
};

struct Prey {
  Cell pos;
  bool captured = false;
};

struct Resource {
  Cell pos;
  int level = 1;  // agents required: 1 yellow, 2 green, 3 purple
  bool foraged = false;
};

/// 2x2 colored area anchored at its top-left cell.
struct Landmark {
  Cell top_left;
  LandmarkColor color = LandmarkColor::Red;
  bool covers(Cell c) const;
};

struct GridState {
  GridConfig config;
  std::vector<Cell> agents;
  std::vector<Prey> preys;
  std::vector<Resource> resources;
  std::vector<Landmark> landmarks;
  int step = 0;
  bool done = false;
  bool success = false;
  std::mt19937_64 rng;

  bool in_bounds(Cell c) const;
  /// Index of the agent at `c`, or -1.
  int agent_at(Cell c) const;
  /// True if an uncaptured prey or unforaged resource occupies `c`.
  bool blocked_by_entity(Cell c) const;
  /// Landmark covering `c`, or nullptr.
  const Landmark* landmark_at(Cell c) const;
};

/// Per-agent view: normalized absolute position plus a square RGB patch.
///
/// The patch is 5x5 centred on the agent (row-major, 3 channels per cell)
/// for predator-prey and foraging, and 1x1 (the current cell) for
/// coordinated placement. Its size never depends on the grid size.
struct Observation {
  double row = 0;
  double col = 0;
  int patch_size = 5;
  std::vector<double> patch;

  Rgb cell(int r, int c) const;
  std::vector<double> flatten() const;
  static int flat_dim(Task task);
};

using JointObservation = std::vector<Observation>;

struct StepResult {
  JointObservation observations;
  double reward = 0;
  bool done = false;
  bool success = false;
};

struct Event {
  enum class Kind { Capture, Forage, Placement };
  Kind kind = Kind::Capture;
  int entity = -1;  // prey/resource index; -1 for placement
  double bonus = 0;
};

inline constexpr double kStepPenalty = -1.0;
inline constexpr double kCaptureBonus = 50.0;
inline constexpr double kForageBonusPerLevel = 10.0;
inline constexpr int kViewRadius = 2;

struct ResetResult {
  GridState state;
  JointObservation observations;
};

ResetResult reset(const GridConfig& config, std::uint64_t seed);
StepResult step(GridState& state, std::span<const Action> joint_action);
Observation observe(const GridState& state, int agent_index);
JointObservation observe_all(const GridState& state);
/// Events currently satisfied by the state (ignores already captured/foraged entities).
std::vector<Event> event_rules(const GridState& state);
/// Largest total bonus obtainable in one step.
double max_event_bonus(const GridConfig& config);

/// Whether `target` lies inside the 5x5 window centred on `agent`.
bool in_view(Cell agent, Cell target);

nlohmann::json to_json(const GridState& state);
GridState state_from_json(const nlohmann::json& j);
nlohmann::json to_json(const GridConfig& config);
GridConfig config_from_json(const nlohmann::json& j);

}  // namespace lamarl::env
