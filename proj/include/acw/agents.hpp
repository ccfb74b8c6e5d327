#pragma once

#include <map>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

#include "acw/gridworld.hpp"
#include "acw/seed.hpp"

namespace acw {

struct AgentSpec {
  std::string agent_id;
  /// Recognised keys: "slip" (per-step random-move probability), "match" (mimic imitation
  /// rate), "grass_side" (grass-sand/A learned pairing).
  nlohmann::json noise_params = nlohmann::json::object();

  [[nodiscard]] std::string env_id() const;
};

struct MemoryState {
  std::map<std::string, std::string> slots;
  int step_phase = 0;

  bool operator==(const MemoryState&) const = default;
};

nlohmann::json memory_to_json(const MemoryState& m);
MemoryState memory_from_json(const nlohmann::json& j);

const std::vector<std::string>& agent_ids();
/// Throws ConfigError for unknown ids; `noise_overrides` is merged over the defaults.
AgentSpec make_agent_spec(std::string_view agent_id,
                          const nlohmann::json& noise_overrides = nlohmann::json::object());

nlohmann::json agent_spec_to_json(const AgentSpec& spec);
AgentSpec agent_spec_from_json(const nlohmann::json& j);

MemoryState agent_init(const AgentSpec& spec, const Seed& seed);

/// One perception-action tick: m_t = M(m_{t-1}, o_t), a_t = A(m_t). Deterministic in its
/// arguments. Throws ObservationError if the window does not match the agent's environment.
std::pair<MemoryState, Action> agent_act(const AgentSpec& spec, const MemoryState& memory,
                                         const Observation& obs, const Seed& seed);

/// Absolute view reconstructed from a full-observability window.
struct GridView {
  Grid grid;
  Position self;
};
GridView view_from_window(const Grid& window);

}  // namespace acw
