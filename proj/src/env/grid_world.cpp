#include "lamarl/env/grid_world.hpp"

#include <algorithm>
#include <cstdlib>
#include <stdexcept>

namespace lamarl::env {

using nlohmann::json;

std::string_view to_string(Task t) {
  switch (t) {
    case Task::PredatorPrey: return "PredatorPrey";
    case Task::Foraging: return "Foraging";
    case Task::CoordinatedPlacement: return "CoordinatedPlacement";
  }
  return "?";
}

Task task_from_string(std::string_view name) {
  if (name == "PredatorPrey") return Task::PredatorPrey;
  if (name == "Foraging") return Task::Foraging;
  if (name == "CoordinatedPlacement") return Task::CoordinatedPlacement;
  throw std::invalid_argument("unknown task '" + std::string(name) + "'");
}

std::string_view to_string(Action a) {
  switch (a) {
    case Action::Noop: return "Noop";
    case Action::Up: return "Up";
    case Action::Down: return "Down";
    case Action::Left: return "Left";
    case Action::Right: return "Right";
  }
  return "?";
}

std::string_view to_string(LandmarkColor c) {
  static constexpr std::array<std::string_view, kNumLandmarkColors> names{"Red",    "Green", "Blue",
                                                                          "Yellow", "Cyan",  "Purple"};
  return names[static_cast<std::size_t>(c)];
}

namespace {
LandmarkColor landmark_color_from_string(std::string_view s) {
  for (int i = 0; i < kNumLandmarkColors; ++i)
    if (to_string(static_cast<LandmarkColor>(i)) == s) return static_cast<LandmarkColor>(i);
  throw std::invalid_argument("unknown landmark color '" + std::string(s) + "'");
}
}  // namespace

namespace palette {
Rgb resource(int level) {
  switch (level) {
    case 1: return kYellow;
    case 2: return kGreen;
    case 3: return kPurple;
    default: throw std::invalid_argument("resource level must be 1..3");
  }
}

Rgb landmark(LandmarkColor c) {
  switch (c) {
    case LandmarkColor::Red: return {1.0, 0.0, 0.0};
    case LandmarkColor::Green: return kGreen;
    case LandmarkColor::Blue: return {0.0, 0.0, 1.0};
    case LandmarkColor::Yellow: return kYellow;
    case LandmarkColor::Cyan: return {0.0, 1.0, 1.0};
    case LandmarkColor::Purple: return kPurple;
  }
  return kBackground;
}
}  // namespace palette

// ---- config ----------------------------------------------------------------

void GridConfig::validate() const {
  if (width != height) throw std::invalid_argument("GridConfig: width must equal height");
  if (width < 3) throw std::invalid_argument("GridConfig: grid must be at least 3x3");
  if (n_agents < 1) throw std::invalid_argument("GridConfig: n_agents must be >= 1");
  if (episode_limit < 1) throw std::invalid_argument("GridConfig: episode_limit must be >= 1");
  if (task == Task::PredatorPrey && n_preys < 1) throw std::invalid_argument("GridConfig: n_preys must be >= 1");
  int needed = n_agents;
  if (task == Task::PredatorPrey) needed += n_preys;
  if (task == Task::Foraging) needed += 6;
  if (task == Task::CoordinatedPlacement) needed += 16;
  if (needed > width * height) throw std::invalid_argument("GridConfig: grid too small for the entities");
}

GridConfig GridConfig::predator_prey(int size) {
  GridConfig c;
  c.width = c.height = size;
  c.task = Task::PredatorPrey;
  return c;
}

GridConfig GridConfig::foraging(int size) {
  GridConfig c;
  c.width = c.height = size;
  c.task = Task::Foraging;
  return c;
}

GridConfig GridConfig::coordinated_placement(int size) {
  GridConfig c;
  c.width = c.height = size;
  c.task = Task::CoordinatedPlacement;
  c.n_agents = 2;
  return c;
}

// ---- state queries ---------------------------------------------------------

bool Landmark::covers(Cell c) const {
  return c.row >= top_left.row && c.row <= top_left.row + 1 && c.col >= top_left.col && c.col <= top_left.col + 1;
}

bool GridState::in_bounds(Cell c) const {
  return c.row >= 0 && c.col >= 0 && c.row < config.height && c.col < config.width;
}

int GridState::agent_at(Cell c) const {
  for (std::size_t i = 0; i < agents.size(); ++i)
    if (agents[i] == c) return static_cast<int>(i);
  return -1;
}

bool GridState::blocked_by_entity(Cell c) const {
  for (const Prey& p : preys)
    if (!p.captured && p.pos == c) return true;
  for (const Resource& r : resources)
    if (!r.foraged && r.pos == c) return true;
  return false;
}

const Landmark* GridState::landmark_at(Cell c) const {
  for (const Landmark& l : landmarks)
    if (l.covers(c)) return &l;
  return nullptr;
}

bool in_view(Cell agent, Cell target) {
  return std::abs(agent.row - target.row) <= kViewRadius && std::abs(agent.col - target.col) <= kViewRadius;
}

// ---- observation -----------------------------------------------------------

Rgb Observation::cell(int r, int c) const {
  const std::size_t k = static_cast<std::size_t>((r * patch_size + c) * 3);
  return {patch.at(k), patch.at(k + 1), patch.at(k + 2)};
}

std::vector<double> Observation::flatten() const {
  std::vector<double> out;
  out.reserve(2 + patch.size());
  out.push_back(row);
  out.push_back(col);
  out.insert(out.end(), patch.begin(), patch.end());
  return out;
}

int Observation::flat_dim(Task task) {
  const int p = task == Task::CoordinatedPlacement ? 1 : 2 * kViewRadius + 1;
  return 2 + p * p * 3;
}

namespace {

Rgb color_at(const GridState& s, Cell c) {
  if (!s.in_bounds(c)) return palette::kWall;
  if (s.agent_at(c) >= 0) return palette::kAgent;
  for (const Prey& p : s.preys)
    if (!p.captured && p.pos == c) return palette::kPrey;
  for (const Resource& r : s.resources)
    if (!r.foraged && r.pos == c) return palette::resource(r.level);
  if (const Landmark* l = s.landmark_at(c)) return palette::landmark(l->color);
  return palette::kBackground;
}

}  // namespace

Observation observe(const GridState& s, int agent_index) {
  if (agent_index < 0 || agent_index >= static_cast<int>(s.agents.size()))
    throw std::out_of_range("observe: agent index out of range");
  const Cell me = s.agents[static_cast<std::size_t>(agent_index)];
  Observation o;
  o.row = s.config.height > 1 ? static_cast<double>(me.row) / (s.config.height - 1) : 0.0;
  o.col = s.config.width > 1 ? static_cast<double>(me.col) / (s.config.width - 1) : 0.0;
  if (s.config.task == Task::CoordinatedPlacement) {
    // Only the floor under the agent is visible, so agents themselves are not drawn.
    o.patch_size = 1;
    const Landmark* l = s.landmark_at(me);
    const Rgb c = l ? palette::landmark(l->color) : palette::kBackground;
    o.patch.assign(c.begin(), c.end());
    return o;
  }
  o.patch_size = 2 * kViewRadius + 1;
  o.patch.reserve(static_cast<std::size_t>(o.patch_size * o.patch_size * 3));
  for (int dr = -kViewRadius; dr <= kViewRadius; ++dr) {
    for (int dc = -kViewRadius; dc <= kViewRadius; ++dc) {
      const Rgb c = color_at(s, {me.row + dr, me.col + dc});
      o.patch.insert(o.patch.end(), c.begin(), c.end());
    }
  }
  return o;
}

JointObservation observe_all(const GridState& s) {
  JointObservation out;
  out.reserve(s.agents.size());
  for (std::size_t i = 0; i < s.agents.size(); ++i) out.push_back(observe(s, static_cast<int>(i)));
  return out;
}

// ---- events ----------------------------------------------------------------

namespace {

int adjacent_agents(const GridState& s, Cell c) {
  int n = 0;
  for (const Cell& a : s.agents)
    if (std::abs(a.row - c.row) + std::abs(a.col - c.col) == 1) ++n;
  return n;
}

}  // namespace

std::vector<Event> event_rules(const GridState& s) {
  std::vector<Event> events;
  switch (s.config.task) {
    case Task::PredatorPrey:
      for (std::size_t i = 0; i < s.preys.size(); ++i)
        if (!s.preys[i].captured && adjacent_agents(s, s.preys[i].pos) >= 2)
          events.push_back({Event::Kind::Capture, static_cast<int>(i), kCaptureBonus});
      break;
    case Task::Foraging:
      for (std::size_t i = 0; i < s.resources.size(); ++i) {
        const Resource& r = s.resources[i];
        if (!r.foraged && adjacent_agents(s, r.pos) >= r.level)
          events.push_back({Event::Kind::Forage, static_cast<int>(i), kForageBonusPerLevel * r.level});
      }
      break;
    case Task::CoordinatedPlacement: {
      if (s.agents.empty()) break;
      const Landmark* first = s.landmark_at(s.agents.front());
      if (first == nullptr) break;
      bool all = true;
      for (const Cell& a : s.agents) {
        const Landmark* l = s.landmark_at(a);
        all = all && l != nullptr && l->color == first->color;
      }
      if (all) events.push_back({Event::Kind::Placement, -1, 0.0});
      break;
    }
  }
  return events;
}

double max_event_bonus(const GridConfig& c) {
  switch (c.task) {
    case Task::PredatorPrey: return kCaptureBonus * c.n_preys;
    case Task::Foraging: return kForageBonusPerLevel * (3 * 1 + 2 * 2 + 1 * 3);
    case Task::CoordinatedPlacement: return 0.0;
  }
  return 0.0;
}

// ---- reset -----------------------------------------------------------------

namespace {

Cell take_random(std::vector<Cell>& pool, std::mt19937_64& rng) {
  if (pool.empty()) throw std::runtime_error("reset: no free cell left");
  std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
  const std::size_t k = pick(rng);
  const Cell c = pool[k];
  pool.erase(pool.begin() + static_cast<std::ptrdiff_t>(k));
  return c;
}

}  // namespace

ResetResult reset(const GridConfig& config, std::uint64_t seed) {
  config.validate();
  GridState s;
  s.config = config;
  s.config.seed = seed;
  s.rng.seed(seed);

  if (config.task == Task::CoordinatedPlacement) {
    std::vector<Cell> anchors;
    for (int r = 0; r + 1 < config.height; ++r)
      for (int c = 0; c + 1 < config.width; ++c) anchors.push_back({r, c});
    std::vector<int> palette_idx(kNumLandmarkColors);
    for (int i = 0; i < kNumLandmarkColors; ++i) palette_idx[static_cast<std::size_t>(i)] = i;
    std::shuffle(palette_idx.begin(), palette_idx.end(), s.rng);
    std::array<LandmarkColor, 4> colors{static_cast<LandmarkColor>(palette_idx[0]),
                                        static_cast<LandmarkColor>(palette_idx[0]),
                                        static_cast<LandmarkColor>(palette_idx[1]),
                                        static_cast<LandmarkColor>(palette_idx[1])};
    std::shuffle(colors.begin(), colors.end(), s.rng);
    for (LandmarkColor color : colors) {
      const Cell a = take_random(anchors, s.rng);
      s.landmarks.push_back({a, color});
      const Landmark placed{a, color};
      std::erase_if(anchors, [&placed](Cell b) {
        // Drop anchors whose 2x2 footprint would overlap the new landmark.
        return std::abs(b.row - placed.top_left.row) <= 1 && std::abs(b.col - placed.top_left.col) <= 1;
      });
    }
  }

  std::vector<Cell> free;
  for (int r = 0; r < config.height; ++r)
    for (int c = 0; c < config.width; ++c)
      if (s.landmark_at({r, c}) == nullptr) free.push_back({r, c});

  for (int i = 0; i < config.n_agents; ++i) s.agents.push_back(take_random(free, s.rng));
  if (config.task == Task::PredatorPrey) {
    for (int i = 0; i < config.n_preys; ++i) s.preys.push_back({take_random(free, s.rng), false});
  } else if (config.task == Task::Foraging) {
    for (int level : {1, 1, 1, 2, 2, 3}) s.resources.push_back({take_random(free, s.rng), level, false});
  }
  ResetResult out{std::move(s), {}};
  out.observations = observe_all(out.state);
  return out;
}

// ---- step ------------------------------------------------------------------

namespace {

Cell moved(Cell c, Action a) {
  switch (a) {
    case Action::Up: return {c.row - 1, c.col};
    case Action::Down: return {c.row + 1, c.col};
    case Action::Left: return {c.row, c.col - 1};
    case Action::Right: return {c.row, c.col + 1};
    case Action::Noop: return c;
  }
  return c;
}

}  // namespace

StepResult step(GridState& s, std::span<const Action> joint_action) {
  if (s.done) throw std::logic_error("step: episode already finished");
  if (joint_action.size() != s.agents.size()) throw std::invalid_argument("step: one action per agent required");
  ++s.step;

  // Agents move in index order; blocked moves are no-ops.
  for (std::size_t i = 0; i < s.agents.size(); ++i) {
    const Cell target = moved(s.agents[i], joint_action[i]);
    if (target == s.agents[i]) continue;
    if (!s.in_bounds(target) || s.agent_at(target) >= 0 || s.blocked_by_entity(target)) continue;
    s.agents[i] = target;
  }

  double reward = kStepPenalty;
  bool placement = false;
  for (const Event& e : event_rules(s)) {
    reward += e.bonus;
    if (e.kind == Event::Kind::Capture) s.preys[static_cast<std::size_t>(e.entity)].captured = true;
    if (e.kind == Event::Kind::Forage) s.resources[static_cast<std::size_t>(e.entity)].foraged = true;
    if (e.kind == Event::Kind::Placement) placement = true;
  }

  // Surviving preys wander: uniform over the legal moves, staying included.
  for (Prey& p : s.preys) {
    if (p.captured) continue;
    std::vector<Cell> options{p.pos};
    for (Action a : {Action::Up, Action::Down, Action::Left, Action::Right}) {
      const Cell t = moved(p.pos, a);
      if (s.in_bounds(t) && s.agent_at(t) < 0 && !s.blocked_by_entity(t)) options.push_back(t);
    }
    std::uniform_int_distribution<std::size_t> pick(0, options.size() - 1);
    p.pos = options[pick(s.rng)];
  }

  switch (s.config.task) {
    case Task::PredatorPrey:
      s.success = std::all_of(s.preys.begin(), s.preys.end(), [](const Prey& p) { return p.captured; });
      break;
    case Task::Foraging:
      s.success = std::all_of(s.resources.begin(), s.resources.end(), [](const Resource& r) { return r.foraged; });
      break;
    case Task::CoordinatedPlacement: s.success = placement; break;
  }
  s.done = s.success || s.step >= s.config.episode_limit;
  return StepResult{observe_all(s), reward, s.done, s.success};
}

// ---- json ------------------------------------------------------------------

json to_json(const GridConfig& c) {
  return {{"width", c.width},       {"height", c.height},
          {"n_agents", c.n_agents}, {"task", std::string(to_string(c.task))},
          {"episode_limit", c.episode_limit}, {"seed", c.seed},
          {"n_preys", c.n_preys}};
}

GridConfig config_from_json(const json& j) {
  GridConfig c;
  c.task = task_from_string(j.value("task", std::string("PredatorPrey")));
  if (c.task == Task::CoordinatedPlacement) c.n_agents = 2;
  if (j.contains("size")) c.width = c.height = j.at("size").get<int>();
  c.width = j.value("width", c.width);
  c.height = j.value("height", c.height);
  c.n_agents = j.value("n_agents", c.n_agents);
  c.episode_limit = j.value("episode_limit", c.episode_limit);
  c.seed = j.value("seed", c.seed);
  c.n_preys = j.value("n_preys", c.n_preys);
  c.validate();
  return c;
}

namespace {
json cell_json(Cell c) { return json::array({c.row, c.col}); }
Cell cell_from(const json& j) { return {j.at(0).get<int>(), j.at(1).get<int>()}; }
}  // namespace

json to_json(const GridState& s) {
  json agents = json::array();
  for (const Cell& a : s.agents) agents.push_back(cell_json(a));
  json preys = json::array();
  for (const Prey& p : s.preys) preys.push_back({{"pos", cell_json(p.pos)}, {"captured", p.captured}});
  json resources = json::array();
  for (const Resource& r : s.resources)
    resources.push_back({{"pos", cell_json(r.pos)}, {"level", r.level}, {"foraged", r.foraged}});
  json landmarks = json::array();
  for (const Landmark& l : s.landmarks)
    landmarks.push_back({{"pos", cell_json(l.top_left)}, {"color", std::string(to_string(l.color))}});
  return {{"schema", "lamarl.grid"}, {"version", 1},       {"config", to_json(s.config)},
          {"step", s.step},          {"done", s.done},     {"success", s.success},
          {"agents", agents},        {"preys", preys},     {"resources", resources},
          {"landmarks", landmarks}};
}

GridState state_from_json(const json& j) {
  if (j.value("schema", "") != "lamarl.grid") throw std::invalid_argument("state_from_json: not a grid snapshot");
  GridState s;
  s.config = config_from_json(j.at("config"));
  s.rng.seed(s.config.seed);
  s.step = j.at("step").get<int>();
  s.done = j.at("done").get<bool>();
  s.success = j.at("success").get<bool>();
  for (const json& a : j.at("agents")) s.agents.push_back(cell_from(a));
  for (const json& p : j.at("preys")) s.preys.push_back({cell_from(p.at("pos")), p.at("captured").get<bool>()});
  for (const json& r : j.at("resources"))
    s.resources.push_back({cell_from(r.at("pos")), r.at("level").get<int>(), r.at("foraged").get<bool>()});
  for (const json& l : j.at("landmarks"))
    s.landmarks.push_back({cell_from(l.at("pos")), landmark_color_from_string(l.at("color").get<std::string>())});
  return s;
}

}  // namespace lamarl::env
