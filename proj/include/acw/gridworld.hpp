#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

#include "acw/seed.hpp"

namespace acw {

// Integer values are part of the serialized format; append only.
enum class TileKind : int {
  wall = 0,
  floor = 1,
  grass = 2,
  sand = 3,
  gate_open = 4,
  gate_closed = 5,
  key = 6,
  pill_red = 7,
  pill_green = 8,
  pill_plain = 9,
  terminal = 10,
  out_of_bounds = 11,
};

std::string_view tile_name(TileKind kind);
TileKind tile_from_name(std::string_view name);
bool is_pill(TileKind kind);

enum class Action : int { up = 0, down = 1, left = 2, right = 3, noop = 4 };

inline constexpr Action kMoves[] = {Action::up, Action::down, Action::left, Action::right};

std::string_view action_name(Action a);
Action action_from_name(std::string_view name);
Action opposite(Action a);

void to_json(nlohmann::json& j, Action a);
void from_json(const nlohmann::json& j, Action& a);

struct Position {
  int row = 0;
  int col = 0;
  bool operator==(const Position&) const = default;
  auto operator<=>(const Position&) const = default;
};

Position moved(Position p, Action a);

class Grid {
 public:
  Grid() = default;
  Grid(int rows, int cols, TileKind fill);

  [[nodiscard]] int rows() const { return rows_; }
  [[nodiscard]] int cols() const { return cols_; }
  [[nodiscard]] bool in_bounds(Position p) const {
    return p.row >= 0 && p.col >= 0 && p.row < rows_ && p.col < cols_;
  }
  /// Out-of-bounds reads return TileKind::out_of_bounds.
  [[nodiscard]] TileKind at(Position p) const;
  void set(Position p, TileKind kind);

  bool operator==(const Grid&) const = default;

 private:
  int rows_ = 0;
  int cols_ = 0;
  std::vector<TileKind> cells_;
};

using JointAction = std::map<std::string, Action>;

struct WorldState {
  std::string env_id;
  Grid grid;
  std::map<std::string, Position> entities;
  std::map<std::string, std::set<std::string>> inventory;
  std::map<std::string, double> last_reward;
  int step_count = 0;
  bool terminated = false;
  bool timed_out = false;

  bool operator==(const WorldState&) const = default;
};

/// Canonical JSON (sorted keys, integer tile kinds).
nlohmann::json world_to_json(const WorldState& w);
WorldState world_from_json(const nlohmann::json& j);

struct Observation {
  Grid window;  // (2r+1)x(2r+1), centered on the observing entity
  double reward = 0.0;
  bool terminal = false;
  /// Items the observing entity carries.
  std::set<std::string> held;
  /// Actions already committed this step by entities acting earlier (mimic only).
  std::map<std::string, Action> peer_actions;

  bool operator==(const Observation&) const = default;
};

nlohmann::json observation_to_json(const Observation& o);
Observation observation_from_json(const nlohmann::json& j);

struct EnvSpec {
  std::string env_id;
  nlohmann::json layout_params = nlohmann::json::object();
  nlohmann::json init_params = nlohmann::json::object();
  int visibility_radius = 1;
  std::vector<std::string> entity_ids;

  /// 4 x grid area.
  [[nodiscard]] int step_budget() const;
};

/// The six registered environments.
const std::vector<std::string>& env_ids();
/// Throws ConfigError for unknown ids. `overrides` is merged into layout/init params.
EnvSpec make_env_spec(std::string_view env_id,
                      const nlohmann::json& overrides = nlohmann::json::object());

nlohmann::json env_spec_to_json(const EnvSpec& spec);
EnvSpec env_spec_from_json(const nlohmann::json& j);

WorldState env_init(const EnvSpec& spec, const Seed& seed);

/// Multi-entity step. Entities missing from `actions` take no-op.
WorldState env_step(const EnvSpec& spec, const WorldState& world, const JointAction& actions,
                    const Seed& seed);
/// Single-agent convenience form over the spec's first entity.
std::pair<WorldState, Observation> env_step(const EnvSpec& spec, const WorldState& world,
                                            Action action, const Seed& seed);

Observation observe(const EnvSpec& spec, const WorldState& world, const std::string& entity);

/// Applies a declarative edit. Paths: /entities/<id>, /grid/<r>/<c>, /inventory/<id>, /floor.
/// Throws InterventionError on unknown paths or illegal values.
void apply_world_edit(WorldState& world, std::string_view path, const nlohmann::json& value);

// Layout helpers shared by agents, extractors and tests.

/// Pick-up room quadrant of an interior cell ('n','e','s','w'); nullopt for the center.
/// Pinwheel split along the diagonals so each quadrant owns 6 of the 24 cells; the
/// west quadrant takes the south-west diagonal and the east one the north-east.
std::optional<char> pickup_quadrant(Position p);
std::vector<Position> pickup_quadrant_cells(char quadrant);

/// Columns of the left/right arm ends of the two T-mazes.
struct TMazeGeometry {
  Position left_end;
  Position right_end;
  int junction_row;
  int center_col;
};
TMazeGeometry tmaze_geometry(std::string_view env_id);

}  // namespace acw
