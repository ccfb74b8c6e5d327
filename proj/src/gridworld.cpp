#include "acw/gridworld.hpp"

#include <algorithm>
#include <array>
#include <charconv>

#include "acw/errors.hpp"

namespace acw {

namespace {

constexpr std::array<std::string_view, 12> kTileNames = {
    "wall", "floor",    "grass",      "sand",       "gate_open", "gate_closed",
    "key",  "pill_red", "pill_green", "pill_plain", "terminal",  "out_of_bounds"};

constexpr std::array<std::string_view, 5> kActionNames = {"up", "down", "left", "right", "noop"};

int to_int(std::string_view s) {
  int v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    throw InterventionError("bad integer in edit path: " + std::string(s));
  }
  return v;
}

std::vector<std::string_view> split_path(std::string_view path) {
  std::vector<std::string_view> parts;
  if (path.empty() || path.front() != '/') throw InterventionError("edit path must start with '/'");
  path.remove_prefix(1);
  while (!path.empty()) {
    auto slash = path.find('/');
    parts.push_back(path.substr(0, slash));
    if (slash == std::string_view::npos) break;
    path.remove_prefix(slash + 1);
  }
  return parts;
}

bool walkable(TileKind k) {
  return k != TileKind::wall && k != TileKind::out_of_bounds;
}

// Draws a cell uniformly from `cells`.
Position pick(Rng& rng, const std::vector<Position>& cells) {
  return cells[rng.below(cells.size())];
}

std::vector<Position> room_cells(int r0, int c0, int r1, int c1) {
  std::vector<Position> out;
  for (int r = r0; r <= r1; ++r)
    for (int c = c0; c <= c1; ++c) out.push_back({r, c});
  return out;
}

// ---- layouts -------------------------------------------------------------

// T-maze: arm row 1, arms of 3 tiles either side of the junction, stem of 4.
WorldState init_grass_sand(const EnvSpec& spec, Rng& rng) {
  WorldState w;
  w.env_id = spec.env_id;
  w.grid = Grid(7, 9, TileKind::wall);
  const bool pill_left = rng.uniform() < 0.5;  // latent coin C
  const std::string grass_side = spec.init_params.value("grass_side", std::string("left"));
  const bool grass = (grass_side == "left") == pill_left;
  const TileKind floor = grass ? TileKind::grass : TileKind::sand;
  for (int c = 1; c <= 7; ++c) w.grid.set({1, c}, floor);
  for (int r = 2; r <= 5; ++r) w.grid.set({r, 4}, floor);
  w.grid.set({1, 1}, pill_left ? TileKind::pill_plain : TileKind::terminal);
  w.grid.set({1, 7}, pill_left ? TileKind::terminal : TileKind::pill_plain);
  w.entities["agent"] = {5, 4};
  return w;
}

// Corridor 3 wide x 6 long, cue on the start tile, arms of 2 tiles.
WorldState init_floor_memory(const EnvSpec& spec, Rng& rng) {
  WorldState w;
  w.env_id = spec.env_id;
  w.grid = Grid(9, 9, TileKind::wall);
  for (int c = 1; c <= 7; ++c) w.grid.set({1, c}, TileKind::floor);
  for (int r = 2; r <= 7; ++r)
    for (int c = 3; c <= 5; ++c) w.grid.set({r, c}, TileKind::floor);
  const bool grass = rng.uniform() < 0.5;  // grass cue: reward on the left
  w.grid.set({7, 4}, grass ? TileKind::grass : TileKind::sand);
  w.grid.set({1, 1}, grass ? TileKind::pill_plain : TileKind::terminal);
  w.grid.set({1, 7}, grass ? TileKind::terminal : TileKind::pill_plain);
  w.entities["agent"] = {7, 4};
  return w;
}

// 5x5 room; test distribution puts the reward in the southern quadrant.
WorldState init_pick_up(const EnvSpec& spec, Rng& rng) {
  WorldState w;
  w.env_id = spec.env_id;
  w.grid = Grid(7, 7, TileKind::wall);
  for (auto p : room_cells(1, 1, 5, 5)) w.grid.set(p, TileKind::floor);
  const std::string q = spec.init_params.value("reward_quadrant", std::string("s"));
  const Position reward = pick(rng, pickup_quadrant_cells(q.at(0)));
  w.grid.set(reward, TileKind::pill_plain);
  std::vector<Position> starts;
  for (auto p : room_cells(1, 1, 5, 5))
    if (p != reward) starts.push_back(p);
  w.entities["agent"] = pick(rng, starts);
  return w;
}

// Two 3x3 rooms above a hallway; exactly one gate opens.
WorldState init_gated_room(const EnvSpec& spec, Rng& rng) {
  WorldState w;
  w.env_id = spec.env_id;
  w.grid = Grid(7, 9, TileKind::wall);
  for (auto p : room_cells(1, 1, 3, 3)) w.grid.set(p, TileKind::floor);
  for (auto p : room_cells(1, 5, 3, 7)) w.grid.set(p, TileKind::floor);
  for (int c = 1; c <= 7; ++c) w.grid.set({5, c}, TileKind::floor);
  w.grid.set({1, 1}, TileKind::pill_red);
  w.grid.set({1, 3}, TileKind::pill_green);
  w.grid.set({1, 5}, TileKind::pill_red);
  w.grid.set({1, 7}, TileKind::pill_green);
  const bool left_open = rng.uniform() < 0.5;
  w.grid.set({4, 2}, left_open ? TileKind::gate_open : TileKind::gate_closed);
  w.grid.set({4, 6}, left_open ? TileKind::gate_closed : TileKind::gate_open);
  w.entities["agent"] = {5, 4};
  return w;
}

// 1x7 corridor with two entities starting on the middle tile.
WorldState init_mimic(const EnvSpec& spec, Rng&) {
  WorldState w;
  w.env_id = spec.env_id;
  w.grid = Grid(3, 9, TileKind::wall);
  for (int c = 1; c <= 7; ++c) w.grid.set({1, c}, TileKind::floor);
  w.entities["blue"] = {1, 4};
  w.entities["red"] = {1, 4};
  return w;
}

// 5x5 room, door in the east wall, reward at the end of a 1x2 annex.
WorldState init_key_door(const EnvSpec& spec, Rng& rng) {
  WorldState w;
  w.env_id = spec.env_id;
  w.grid = Grid(7, 10, TileKind::wall);
  const auto room = room_cells(1, 1, 5, 5);
  for (auto p : room) w.grid.set(p, TileKind::floor);
  const bool open = rng.uniform() < 0.5;
  w.grid.set({3, 6}, open ? TileKind::gate_open : TileKind::gate_closed);
  w.grid.set({3, 7}, TileKind::floor);
  w.grid.set({3, 8}, TileKind::pill_plain);
  const Position agent = pick(rng, room);
  std::vector<Position> rest;
  for (auto p : room)
    if (p != agent) rest.push_back(p);
  w.grid.set(pick(rng, rest), TileKind::key);
  w.entities["agent"] = agent;
  return w;
}

struct Registration {
  std::string_view id;
  int rows;
  int cols;
  int radius;  // 0 means full observability
  std::vector<std::string> entities;
  WorldState (*init)(const EnvSpec&, Rng&);
};

const std::vector<Registration>& registry() {
  static const std::vector<Registration> regs = {
      {"grass-sand", 7, 9, 0, {"agent"}, &init_grass_sand},
      {"floor-memory", 9, 9, 1, {"agent"}, &init_floor_memory},
      {"pick-up", 7, 7, 0, {"agent"}, &init_pick_up},
      {"gated-room", 7, 9, 0, {"agent"}, &init_gated_room},
      {"mimic", 3, 9, 0, {"blue", "red"}, &init_mimic},
      {"key-door", 7, 10, 0, {"agent"}, &init_key_door},
  };
  return regs;
}

const Registration& find_registration(std::string_view id) {
  for (const auto& r : registry())
    if (r.id == id) return r;
  throw ConfigError("unknown env-id: " + std::string(id));
}

std::string pill_item(TileKind k) { return "pill:" + std::string(tile_name(k)).substr(5); }

}  // namespace

// ---- names -----------------------------------------------------------------

std::string_view tile_name(TileKind kind) { return kTileNames.at(static_cast<std::size_t>(kind)); }

TileKind tile_from_name(std::string_view name) {
  for (std::size_t i = 0; i < kTileNames.size(); ++i)
    if (kTileNames[i] == name) return static_cast<TileKind>(i);
  throw ConfigError("unknown tile kind: " + std::string(name));
}

bool is_pill(TileKind k) {
  return k == TileKind::pill_red || k == TileKind::pill_green || k == TileKind::pill_plain;
}

std::string_view action_name(Action a) { return kActionNames.at(static_cast<std::size_t>(a)); }

Action action_from_name(std::string_view name) {
  for (std::size_t i = 0; i < kActionNames.size(); ++i)
    if (kActionNames[i] == name) return static_cast<Action>(i);
  throw ConfigError("unknown action: " + std::string(name));
}

Action opposite(Action a) {
  switch (a) {
    case Action::up: return Action::down;
    case Action::down: return Action::up;
    case Action::left: return Action::right;
    case Action::right: return Action::left;
    case Action::noop: return Action::noop;
  }
  return Action::noop;
}

void to_json(nlohmann::json& j, Action a) { j = std::string(action_name(a)); }
void from_json(const nlohmann::json& j, Action& a) { a = action_from_name(j.get<std::string>()); }

Position moved(Position p, Action a) {
  switch (a) {
    case Action::up: return {p.row - 1, p.col};
    case Action::down: return {p.row + 1, p.col};
    case Action::left: return {p.row, p.col - 1};
    case Action::right: return {p.row, p.col + 1};
    case Action::noop: return p;
  }
  return p;
}

// ---- grid ------------------------------------------------------------------

Grid::Grid(int rows, int cols, TileKind fill)
    : rows_(rows), cols_(cols), cells_(static_cast<std::size_t>(rows * cols), fill) {}

TileKind Grid::at(Position p) const {
  if (!in_bounds(p)) return TileKind::out_of_bounds;
  return cells_[static_cast<std::size_t>(p.row * cols_ + p.col)];
}

void Grid::set(Position p, TileKind kind) {
  if (!in_bounds(p)) throw InterventionError("grid position out of bounds");
  cells_[static_cast<std::size_t>(p.row * cols_ + p.col)] = kind;
}

namespace {

nlohmann::json grid_to_json(const Grid& g) {
  auto rows = nlohmann::json::array();
  for (int r = 0; r < g.rows(); ++r) {
    auto row = nlohmann::json::array();
    for (int c = 0; c < g.cols(); ++c) row.push_back(static_cast<int>(g.at({r, c})));
    rows.push_back(std::move(row));
  }
  return rows;
}

Grid grid_from_json(const nlohmann::json& j) {
  const int rows = static_cast<int>(j.size());
  const int cols = rows == 0 ? 0 : static_cast<int>(j.at(0).size());
  Grid g(rows, cols, TileKind::wall);
  for (int r = 0; r < rows; ++r) {
    if (static_cast<int>(j.at(r).size()) != cols) throw ConfigError("ragged grid");
    for (int c = 0; c < cols; ++c) {
      const int v = j.at(r).at(c).get<int>();
      if (v < 0 || v > static_cast<int>(TileKind::out_of_bounds)) throw ConfigError("bad tile kind");
      g.set({r, c}, static_cast<TileKind>(v));
    }
  }
  return g;
}

}  // namespace

nlohmann::json world_to_json(const WorldState& w) {
  nlohmann::json j;
  j["env_id"] = w.env_id;
  j["grid"] = grid_to_json(w.grid);
  j["entities"] = nlohmann::json::object();
  for (const auto& [id, p] : w.entities) j["entities"][id] = {p.row, p.col};
  j["inventory"] = nlohmann::json::object();
  for (const auto& [id, items] : w.inventory) j["inventory"][id] = items;
  j["last_reward"] = nlohmann::json::object();
  for (const auto& [id, r] : w.last_reward) j["last_reward"][id] = r;
  j["step_count"] = w.step_count;
  j["terminated"] = w.terminated;
  j["timed_out"] = w.timed_out;
  return j;
}

WorldState world_from_json(const nlohmann::json& j) {
  WorldState w;
  w.env_id = j.at("env_id").get<std::string>();
  w.grid = grid_from_json(j.at("grid"));
  for (const auto& [id, p] : j.at("entities").items()) w.entities[id] = {p.at(0), p.at(1)};
  for (const auto& [id, items] : j.at("inventory").items())
    w.inventory[id] = items.get<std::set<std::string>>();
  for (const auto& [id, r] : j.at("last_reward").items()) w.last_reward[id] = r.get<double>();
  w.step_count = j.at("step_count").get<int>();
  w.terminated = j.at("terminated").get<bool>();
  w.timed_out = j.at("timed_out").get<bool>();
  return w;
}

nlohmann::json observation_to_json(const Observation& o) {
  nlohmann::json j;
  j["window"] = grid_to_json(o.window);
  j["reward"] = o.reward;
  j["terminal"] = o.terminal;
  j["held"] = o.held;
  j["peer_actions"] = nlohmann::json::object();
  for (const auto& [id, a] : o.peer_actions) j["peer_actions"][id] = a;
  return j;
}

Observation observation_from_json(const nlohmann::json& j) {
  Observation o;
  o.window = grid_from_json(j.at("window"));
  o.reward = j.at("reward").get<double>();
  o.terminal = j.at("terminal").get<bool>();
  o.held = j.value("held", std::set<std::string>{});
  for (const auto& [id, a] : j.at("peer_actions").items()) o.peer_actions[id] = a.get<Action>();
  return o;
}

// ---- specs -----------------------------------------------------------------

int EnvSpec::step_budget() const {
  const auto& reg = find_registration(env_id);
  return 4 * reg.rows * reg.cols;
}

const std::vector<std::string>& env_ids() {
  static const std::vector<std::string> ids = [] {
    std::vector<std::string> out;
    for (const auto& r : registry()) out.emplace_back(r.id);
    return out;
  }();
  return ids;
}

EnvSpec make_env_spec(std::string_view env_id, const nlohmann::json& overrides) {
  const auto& reg = find_registration(env_id);
  EnvSpec spec;
  spec.env_id = std::string(reg.id);
  spec.visibility_radius = reg.radius > 0 ? reg.radius : std::max(reg.rows, reg.cols);
  spec.entity_ids = reg.entities;
  if (overrides.contains("layout_params")) spec.layout_params.update(overrides["layout_params"]);
  if (overrides.contains("init_params")) spec.init_params.update(overrides["init_params"]);
  return spec;
}

nlohmann::json env_spec_to_json(const EnvSpec& spec) {
  return {{"env_id", spec.env_id},
          {"layout_params", spec.layout_params},
          {"init_params", spec.init_params},
          {"visibility_radius", spec.visibility_radius},
          {"entity_ids", spec.entity_ids}};
}

EnvSpec env_spec_from_json(const nlohmann::json& j) {
  if (j.is_string()) return make_env_spec(j.get<std::string>());
  EnvSpec spec = make_env_spec(j.at("env_id").get<std::string>(), j);
  if (j.contains("visibility_radius")) spec.visibility_radius = j["visibility_radius"].get<int>();
  return spec;
}

// ---- dynamics --------------------------------------------------------------

WorldState env_init(const EnvSpec& spec, const Seed& seed) {
  const auto& reg = find_registration(spec.env_id);
  Rng rng(seed);
  WorldState w = reg.init(spec, rng);
  for (const auto& id : reg.entities) {
    w.inventory[id];
    w.last_reward[id] = 0.0;
  }
  return w;
}

WorldState env_step(const EnvSpec& spec, const WorldState& world, const JointAction& actions,
                    const Seed& /*seed*/) {
  if (world.terminated) throw EpisodeOverError("episode is over for env " + world.env_id);
  WorldState next = world;
  for (auto& [id, r] : next.last_reward) r = 0.0;

  // Moves resolve independently; entities may share a tile.
  for (auto& [id, pos] : next.entities) {
    auto it = actions.find(id);
    const Action a = it == actions.end() ? Action::noop : it->second;
    const Position target = moved(pos, a);
    const TileKind kind = next.grid.at(target);
    if (!walkable(kind)) continue;
    if (kind == TileKind::gate_closed) {
      if (spec.env_id == "key-door" && next.inventory[id].count("key") > 0) {
        next.grid.set(target, TileKind::gate_open);
      } else {
        continue;
      }
    }
    pos = target;
  }

  for (auto& [id, pos] : next.entities) {
    const TileKind kind = next.grid.at(pos);
    if (kind == TileKind::key) {
      next.inventory[id].insert("key");
      next.grid.set(pos, TileKind::floor);
    } else if (is_pill(kind)) {
      next.inventory[id].insert(pill_item(kind));
      next.grid.set(pos, TileKind::floor);
      next.last_reward[id] = 1.0;
      next.terminated = true;
    } else if (kind == TileKind::terminal) {
      next.terminated = true;
    }
  }

  next.step_count += 1;
  if (!next.terminated && next.step_count >= spec.step_budget()) {
    next.terminated = true;
    next.timed_out = true;
  }
  return next;
}

std::pair<WorldState, Observation> env_step(const EnvSpec& spec, const WorldState& world,
                                            Action action, const Seed& seed) {
  const std::string& id = spec.entity_ids.at(0);
  WorldState next = env_step(spec, world, JointAction{{id, action}}, seed);
  Observation obs = observe(spec, next, id);
  return {std::move(next), std::move(obs)};
}

Observation observe(const EnvSpec& spec, const WorldState& world, const std::string& entity) {
  auto it = world.entities.find(entity);
  if (it == world.entities.end()) throw ConfigError("unknown entity: " + entity);
  const int r = spec.visibility_radius;
  Observation o;
  o.window = Grid(2 * r + 1, 2 * r + 1, TileKind::out_of_bounds);
  for (int dr = -r; dr <= r; ++dr)
    for (int dc = -r; dc <= r; ++dc)
      o.window.set({dr + r, dc + r}, world.grid.at({it->second.row + dr, it->second.col + dc}));
  auto rew = world.last_reward.find(entity);
  o.reward = rew == world.last_reward.end() ? 0.0 : rew->second;
  o.terminal = world.terminated;
  if (auto inv = world.inventory.find(entity); inv != world.inventory.end()) o.held = inv->second;
  return o;
}

void apply_world_edit(WorldState& world, std::string_view path, const nlohmann::json& value) {
  const auto parts = split_path(path);
  if (parts.empty()) throw InterventionError("empty edit path");
  try {
    if (parts[0] == "entities" && parts.size() == 2) {
      const std::string id(parts[1]);
      auto it = world.entities.find(id);
      if (it == world.entities.end()) throw InterventionError("unknown entity: " + id);
      const Position p{value.at(0).get<int>(), value.at(1).get<int>()};
      if (!walkable(world.grid.at(p)))
        throw InterventionError("entity must be placed on a non-wall tile inside the grid");
      it->second = p;
    } else if (parts[0] == "grid" && parts.size() == 3) {
      const Position p{to_int(parts[1]), to_int(parts[2])};
      if (!world.grid.in_bounds(p)) throw InterventionError("grid edit out of bounds");
      const TileKind kind = value.is_string() ? tile_from_name(value.get<std::string>())
                                              : static_cast<TileKind>(value.get<int>());
      if (kind == TileKind::out_of_bounds || static_cast<int>(kind) < 0 ||
          static_cast<int>(kind) > static_cast<int>(TileKind::out_of_bounds))
        throw InterventionError("illegal tile kind");
      for (const auto& [id, pos] : world.entities)
        if (pos == p && kind == TileKind::wall)
          throw InterventionError("cannot wall over entity " + id);
      world.grid.set(p, kind);
    } else if (parts[0] == "inventory" && parts.size() == 2) {
      const std::string id(parts[1]);
      if (!world.entities.count(id)) throw InterventionError("unknown entity: " + id);
      world.inventory[id] = value.get<std::set<std::string>>();
    } else if (parts[0] == "floor" && parts.size() == 1) {
      const TileKind kind = tile_from_name(value.get<std::string>());
      if (kind != TileKind::grass && kind != TileKind::sand)
        throw InterventionError("floor edits accept grass or sand");
      for (int r = 0; r < world.grid.rows(); ++r)
        for (int c = 0; c < world.grid.cols(); ++c) {
          const TileKind k = world.grid.at({r, c});
          if (k == TileKind::grass || k == TileKind::sand) world.grid.set({r, c}, kind);
        }
    } else {
      throw InterventionError("path is not editable: " + std::string(path));
    }
  } catch (const nlohmann::json::exception& e) {
    throw InterventionError(std::string("bad edit value: ") + e.what());
  } catch (const ConfigError& e) {
    throw InterventionError(e.what());
  }
}

// ---- layout helpers ----------------------------------------------------------

std::optional<char> pickup_quadrant(Position p) {
  const int di = p.row - 3;
  const int dj = p.col - 3;
  if (std::abs(di) > 2 || std::abs(dj) > 2) return std::nullopt;
  if (di < 0 && dj >= di && dj < -di) return 'n';
  if (dj > 0 && di >= -dj && di < dj) return 'e';
  if (di > 0 && dj > -di && dj <= di) return 's';
  if (dj < 0 && di > dj && di <= -dj) return 'w';
  return std::nullopt;
}

std::vector<Position> pickup_quadrant_cells(char quadrant) {
  if (quadrant != 'n' && quadrant != 'e' && quadrant != 's' && quadrant != 'w')
    throw ConfigError(std::string("unknown quadrant: ") + quadrant);
  std::vector<Position> out;
  for (auto p : room_cells(1, 1, 5, 5))
    if (pickup_quadrant(p) == quadrant) out.push_back(p);
  return out;
}

TMazeGeometry tmaze_geometry(std::string_view env_id) {
  if (env_id == "grass-sand" || env_id == "floor-memory") return {{1, 1}, {1, 7}, 1, 4};
  throw ConfigError("not a T-maze: " + std::string(env_id));
}

}  // namespace acw
