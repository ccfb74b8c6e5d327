#include "acw/agents.hpp"

#include <algorithm>
#include <deque>
#include <functional>
#include <optional>

#include "acw/errors.hpp"

namespace acw {

namespace {

using Policy = Action (*)(const AgentSpec&, MemoryState&, const Observation&, Rng&);

struct AgentRegistration {
  std::string_view id;
  std::string_view env;
  Policy policy;
  nlohmann::json defaults;
};

constexpr double kDefaultSlip = 0.005;

Action random_move(Rng& rng) { return kMoves[rng.below(4)]; }

bool passable(TileKind k, bool has_key) {
  switch (k) {
    case TileKind::wall:
    case TileKind::out_of_bounds:
      return false;
    case TileKind::gate_closed:
      return has_key;
    default:
      return true;
  }
}

// First action of a shortest path to any cell satisfying `goal`. Ties resolve in
// kMoves order. Pill and terminal tiles are only entered as goals.
std::optional<Action> first_step(const Grid& g, Position from,
                                 const std::function<bool(Position)>& goal, bool has_key) {
  if (goal(from)) return std::nullopt;
  std::vector<int> seen(static_cast<std::size_t>(g.rows() * g.cols()), -1);
  auto index = [&](Position p) { return static_cast<std::size_t>(p.row * g.cols() + p.col); };
  std::deque<Position> queue;
  seen[index(from)] = 4;
  queue.push_back(from);
  while (!queue.empty()) {
    const Position p = queue.front();
    queue.pop_front();
    for (Action a : kMoves) {
      const Position q = moved(p, a);
      if (!g.in_bounds(q) || seen[index(q)] != -1) continue;
      const TileKind k = g.at(q);
      const bool is_goal = goal(q);
      if (!passable(k, has_key)) continue;
      if (!is_goal && (is_pill(k) || k == TileKind::terminal)) continue;
      seen[index(q)] = p == from ? static_cast<int>(a) : seen[index(p)];
      if (is_goal) return static_cast<Action>(seen[index(q)]);
      queue.push_back(q);
    }
  }
  return std::nullopt;
}

int path_length(const Grid& g, Position from, Position to, bool has_key) {
  if (from == to) return 0;
  std::vector<int> dist(static_cast<std::size_t>(g.rows() * g.cols()), -1);
  auto index = [&](Position p) { return static_cast<std::size_t>(p.row * g.cols() + p.col); };
  std::deque<Position> queue{from};
  dist[index(from)] = 0;
  while (!queue.empty()) {
    const Position p = queue.front();
    queue.pop_front();
    for (Action a : kMoves) {
      const Position q = moved(p, a);
      if (!g.in_bounds(q) || dist[index(q)] != -1 || !passable(g.at(q), has_key)) continue;
      dist[index(q)] = dist[index(p)] + 1;
      if (q == to) return dist[index(q)];
      if (is_pill(g.at(q)) || g.at(q) == TileKind::terminal) continue;
      queue.push_back(q);
    }
  }
  return -1;
}

std::optional<Position> find_tile(const Grid& g, const std::function<bool(TileKind)>& pred) {
  for (int r = 0; r < g.rows(); ++r)
    for (int c = 0; c < g.cols(); ++c)
      if (pred(g.at({r, c}))) return Position{r, c};
  return std::nullopt;
}

Action go_or_wander(std::optional<Action> step, Rng& rng) {
  return step ? *step : random_move(rng);
}

// ---- grass-sand ------------------------------------------------------------

// Floor-driven: the arm is chosen from the floor kind under the agent.
Action grass_sand_a(const AgentSpec& spec, MemoryState&, const Observation& obs, Rng& rng) {
  const GridView v = view_from_window(obs.window);
  const TileKind floor = v.grid.at(v.self);
  if (floor != TileKind::grass && floor != TileKind::sand) return random_move(rng);
  const bool grass_left = spec.noise_params.value("grass_side", std::string("left")) == "left";
  const bool go_left = (floor == TileKind::grass) == grass_left;
  const auto geo = tmaze_geometry("grass-sand");
  const Position target = go_left ? geo.left_end : geo.right_end;
  return go_or_wander(first_step(v.grid, v.self, [&](Position p) { return p == target; }, false),
                      rng);
}

// Reward-driven: shortest path to the pill.
Action shortest_to_pill(const AgentSpec&, MemoryState&, const Observation& obs, Rng& rng) {
  const GridView v = view_from_window(obs.window);
  return go_or_wander(
      first_step(v.grid, v.self, [&](Position p) { return is_pill(v.grid.at(p)); }, false), rng);
}

// ---- floor-memory ------------------------------------------------------------
// 3x3 window; center (1,1) is the agent's own tile.

Action side_of_cue(TileKind cue) { return cue == TileKind::grass ? Action::left : Action::right; }

bool is_cue(TileKind k) { return k == TileKind::grass || k == TileKind::sand; }

Action floor_memory_a(const AgentSpec&, MemoryState& m, const Observation& obs, Rng& rng) {
  const Grid& w = obs.window;
  const TileKind here = w.at({1, 1});
  if (is_cue(here) && m.slots["cue"] == "none") m.slots["cue"] = std::string(tile_name(here));
  if (is_cue(here)) return side_of_cue(here);
  if (w.at({0, 1}) != TileKind::wall) return Action::up;
  const std::string& cue = m.slots["cue"];
  if (cue == "grass") return Action::left;
  if (cue == "sand") return Action::right;
  return rng.uniform() < 0.5 ? Action::left : Action::right;
}

// Memoryless: reads only the current window.
Action floor_memory_b(const AgentSpec&, MemoryState&, const Observation& obs, Rng& rng) {
  const Grid& w = obs.window;
  const TileKind here = w.at({1, 1});
  if (is_cue(here)) return side_of_cue(here);
  if (w.at({0, 1}) != TileKind::wall) return Action::up;
  // In the arm row: keep to the side whose lower diagonal is wall (the hugged wall).
  const bool lower_left_wall = w.at({2, 0}) == TileKind::wall;
  const bool lower_right_wall = w.at({2, 2}) == TileKind::wall;
  if (lower_left_wall && !lower_right_wall) return Action::left;
  if (lower_right_wall && !lower_left_wall) return Action::right;
  return rng.uniform() < 0.5 ? Action::left : Action::right;
}

// ---- pick-up -----------------------------------------------------------------

constexpr Position kSouthCentroid{5, 3};

// Southern specialist: walks to the southern centroid, then random-walks the southern
// quadrant and pursues the reward only once it is within Chebyshev distance 1.
Action pick_up_b(const AgentSpec& spec, MemoryState& m, const Observation& obs, Rng& rng) {
  const GridView v = view_from_window(obs.window);
  const auto reward = find_tile(v.grid, is_pill);
  if (m.step_phase == 0 && v.self == kSouthCentroid) m.step_phase = 1;
  if (m.step_phase == 0) {
    return go_or_wander(
        first_step(v.grid, v.self, [&](Position p) { return p == kSouthCentroid; }, false), rng);
  }
  const int radius = spec.noise_params.value("search_radius", 1);
  if (reward && std::max(std::abs(reward->row - v.self.row), std::abs(reward->col - v.self.col)) <=
                    radius) {
    return go_or_wander(first_step(v.grid, v.self, [&](Position p) { return p == *reward; }, false),
                        rng);
  }
  std::vector<Action> options;
  for (Action a : kMoves)
    if (pickup_quadrant(moved(v.self, a)) == 's') options.push_back(a);
  if (options.empty()) {
    return go_or_wander(
        first_step(v.grid, v.self, [&](Position p) { return p == kSouthCentroid; }, false), rng);
  }
  return options[rng.below(options.size())];
}

// ---- gated-room --------------------------------------------------------------

Action pill_lover(TileKind color, const Observation& obs, Rng& rng) {
  const GridView v = view_from_window(obs.window);
  return go_or_wander(first_step(v.grid, v.self, [&](Position p) { return v.grid.at(p) == color; },
                                 false),
                      rng);
}

Action red_lover(const AgentSpec&, MemoryState&, const Observation& obs, Rng& rng) {
  return pill_lover(TileKind::pill_red, obs, rng);
}

Action green_lover(const AgentSpec&, MemoryState&, const Observation& obs, Rng& rng) {
  return pill_lover(TileKind::pill_green, obs, rng);
}

// ---- mimic -------------------------------------------------------------------

Action mimic_leader(const AgentSpec&, MemoryState& m, const Observation&, Rng& rng) {
  m.step_phase += 1;
  return rng.uniform() < 0.5 ? Action::left : Action::right;
}

// Copies the leader's committed action with probability `match`, otherwise takes the
// opposite one.
Action mimic_imitator(const AgentSpec& spec, MemoryState& m, const Observation& obs, Rng& rng) {
  m.step_phase += 1;
  const double match = spec.noise_params.value("match", 0.9);
  if (obs.peer_actions.empty()) return rng.uniform() < 0.5 ? Action::left : Action::right;
  const Action lead = obs.peer_actions.begin()->second;
  return rng.uniform() < match ? lead : opposite(lead);
}

// ---- key-door ----------------------------------------------------------------

constexpr int kKeyDetour = 2;

Action key_door_a(const AgentSpec&, MemoryState&, const Observation& obs, Rng& rng) {
  const GridView v = view_from_window(obs.window);
  const bool has_key = obs.held.count("key") > 0;
  const auto key = find_tile(v.grid, [](TileKind k) { return k == TileKind::key; });
  const auto pill = find_tile(v.grid, is_pill);
  const auto door = find_tile(v.grid, [](TileKind k) { return k == TileKind::gate_closed; });
  auto to = [&](Position target, bool key_in_hand) {
    return go_or_wander(
        first_step(v.grid, v.self, [&](Position p) { return p == target; }, key_in_hand), rng);
  };
  if (!pill) return random_move(rng);
  if (has_key) return to(*pill, true);
  if (door) return key ? to(*key, false) : random_move(rng);
  if (key) {
    const int via_key = path_length(v.grid, v.self, *key, false) + path_length(v.grid, *key, *pill, false);
    const int direct = path_length(v.grid, v.self, *pill, false);
    if (direct >= 0 && via_key - direct <= kKeyDetour) return to(*key, false);
  }
  return to(*pill, false);
}

Action key_door_b(const AgentSpec&, MemoryState&, const Observation& obs, Rng& rng) {
  const GridView v = view_from_window(obs.window);
  const bool has_key = obs.held.count("key") > 0;
  const auto key = find_tile(v.grid, [](TileKind k) { return k == TileKind::key; });
  const auto pill = find_tile(v.grid, is_pill);
  if (!has_key && key) {
    return go_or_wander(first_step(v.grid, v.self, [&](Position p) { return p == *key; }, false),
                        rng);
  }
  if (!pill) return random_move(rng);
  return go_or_wander(first_step(v.grid, v.self, [&](Position p) { return p == *pill; }, has_key),
                      rng);
}

const std::vector<AgentRegistration>& registry() {
  static const std::vector<AgentRegistration> regs = {
      {"grass-sand/A", "grass-sand", &grass_sand_a, {{"slip", kDefaultSlip}, {"grass_side", "left"}}},
      {"grass-sand/B", "grass-sand", &shortest_to_pill, {{"slip", kDefaultSlip}}},
      {"floor-memory/a", "floor-memory", &floor_memory_a, {{"slip", kDefaultSlip}}},
      {"floor-memory/b", "floor-memory", &floor_memory_b, {{"slip", kDefaultSlip}}},
      {"pick-up/A", "pick-up", &shortest_to_pill, {{"slip", kDefaultSlip}}},
      {"pick-up/B", "pick-up", &pick_up_b, {{"slip", kDefaultSlip}, {"search_radius", 1}}},
      {"gated-room/red-lover", "gated-room", &red_lover, {{"slip", kDefaultSlip}}},
      {"gated-room/green-lover", "gated-room", &green_lover, {{"slip", kDefaultSlip}}},
      {"mimic/leader", "mimic", &mimic_leader, {{"slip", 0.0}}},
      {"mimic/imitator", "mimic", &mimic_imitator, {{"slip", 0.0}, {"match", 0.9}}},
      {"key-door/A", "key-door", &key_door_a, {{"slip", kDefaultSlip}}},
      {"key-door/B", "key-door", &key_door_b, {{"slip", kDefaultSlip}}},
  };
  return regs;
}

const AgentRegistration& find_agent(std::string_view id) {
  for (const auto& r : registry())
    if (r.id == id) return r;
  throw ConfigError("unknown agent-id: " + std::string(id));
}

}  // namespace

std::string AgentSpec::env_id() const { return std::string(find_agent(agent_id).env); }

nlohmann::json memory_to_json(const MemoryState& m) {
  return {{"slots", m.slots}, {"step_phase", m.step_phase}};
}

MemoryState memory_from_json(const nlohmann::json& j) {
  MemoryState m;
  m.slots = j.at("slots").get<std::map<std::string, std::string>>();
  m.step_phase = j.at("step_phase").get<int>();
  return m;
}

const std::vector<std::string>& agent_ids() {
  static const std::vector<std::string> ids = [] {
    std::vector<std::string> out;
    for (const auto& r : registry()) out.emplace_back(r.id);
    return out;
  }();
  return ids;
}

AgentSpec make_agent_spec(std::string_view agent_id, const nlohmann::json& noise_overrides) {
  const auto& reg = find_agent(agent_id);
  AgentSpec spec{std::string(reg.id), reg.defaults};
  if (noise_overrides.is_object()) spec.noise_params.update(noise_overrides);
  return spec;
}

nlohmann::json agent_spec_to_json(const AgentSpec& spec) {
  return {{"agent_id", spec.agent_id}, {"noise_params", spec.noise_params}};
}

AgentSpec agent_spec_from_json(const nlohmann::json& j) {
  if (j.is_string()) return make_agent_spec(j.get<std::string>());
  return make_agent_spec(j.at("agent_id").get<std::string>(),
                         j.value("noise_params", nlohmann::json::object()));
}

MemoryState agent_init(const AgentSpec& spec, const Seed&) {
  MemoryState m;
  if (spec.agent_id == "floor-memory/a") m.slots["cue"] = "none";
  find_agent(spec.agent_id);
  return m;
}

std::pair<MemoryState, Action> agent_act(const AgentSpec& spec, const MemoryState& memory,
                                         const Observation& obs, const Seed& seed) {
  const auto& reg = find_agent(spec.agent_id);
  const int expected = 2 * make_env_spec(reg.env).visibility_radius + 1;
  if (obs.window.rows() != expected || obs.window.cols() != expected) {
    throw ObservationError("agent " + spec.agent_id + " expects a " + std::to_string(expected) +
                           "x" + std::to_string(expected) + " window");
  }
  Rng rng(seed);
  MemoryState next = memory;
  Action a = reg.policy(spec, next, obs, rng);
  if (rng.uniform() < spec.noise_params.value("slip", 0.0)) a = random_move(rng);
  return {std::move(next), a};
}

GridView view_from_window(const Grid& window) {
  const int radius = window.rows() / 2;
  int top = -1;
  int left = -1;
  int bottom = -1;
  int right = -1;
  for (int r = 0; r < window.rows(); ++r)
    for (int c = 0; c < window.cols(); ++c) {
      if (window.at({r, c}) == TileKind::out_of_bounds) continue;
      if (top < 0) top = r;
      bottom = r;
      if (left < 0 || c < left) left = c;
      right = std::max(right, c);
    }
  if (top < 0) throw ObservationError("window contains no in-bounds cells");
  GridView v;
  v.grid = Grid(bottom - top + 1, right - left + 1, TileKind::wall);
  for (int r = top; r <= bottom; ++r)
    for (int c = left; c <= right; ++c) v.grid.set({r - top, c - left}, window.at({r, c}));
  v.self = {radius - top, radius - left};
  return v;
}

}  // namespace acw
