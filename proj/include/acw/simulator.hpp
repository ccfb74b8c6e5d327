#pragma once

#include <map>
#include <memory>
#include <optional>
#include <shared_mutex>
#include <string>
#include <vector>

#include <json.hpp>

#include "acw/agents.hpp"
#include "acw/gridworld.hpp"
#include "acw/seed.hpp"

namespace acw {

/// An environment coupled with one agent per acting entity. Entities act in binding order;
/// later entities see earlier entities' committed actions in `Observation::peer_actions`.
struct System {
  EnvSpec env;
  std::vector<std::pair<std::string, AgentSpec>> bindings;
};

/// Single-agent systems bind the agent to the environment's only entity. For mimic, the
/// leader is bound first so the imitator can see its committed move.
System make_system(const EnvSpec& env, const std::vector<AgentSpec>& agents);
System make_system(const EnvSpec& env, const AgentSpec& agent);

nlohmann::json system_to_json(const System& s);
System system_from_json(const nlohmann::json& j);

struct InterventionSpec {
  enum class Kind { reseed, world_edit, agent_edit, force_action };

  Kind kind = Kind::world_edit;
  int time = 1;
  Seed new_seed;              // reseed
  std::string path;           // world_edit
  nlohmann::json value;       // world_edit value, agent_edit slot value
  std::string entity;         // agent_edit / force_action; empty means the first binding
  std::string slot;           // agent_edit
  Action action = Action::noop;  // force_action

  static InterventionSpec reseed(int time, Seed seed);
  static InterventionSpec world_edit(int time, std::string path, nlohmann::json value);
  static InterventionSpec agent_edit(int time, std::string slot, std::string value,
                                     std::string entity = {});
  static InterventionSpec force_action(int time, Action action, std::string entity = {});

  bool operator==(const InterventionSpec&) const = default;
};

nlohmann::json intervention_to_json(const InterventionSpec& s);
/// Throws InterventionError on malformed specs.
InterventionSpec intervention_from_json(const nlohmann::json& j);

struct StepRecord {
  int t = 1;
  WorldState world;
  std::map<std::string, MemoryState> memory;
  std::map<std::string, Observation> observation;
  JointAction action;  // empty on the terminal step

  bool operator==(const StepRecord&) const = default;
};

struct Lineage {
  std::string trace_id;
  int branch_time = 1;
  InterventionSpec spec;

  bool operator==(const Lineage&) const = default;
};

struct Trace {
  std::string id;
  System system;
  Seed seed;
  /// Every intervention the trace was generated under, in application order.
  std::vector<InterventionSpec> interventions;
  std::optional<Lineage> parent;
  std::vector<StepRecord> steps;

  [[nodiscard]] int length() const { return static_cast<int>(steps.size()); }
  [[nodiscard]] bool terminated() const {
    return !steps.empty() && steps.back().world.terminated;
  }
  [[nodiscard]] const StepRecord& at(int t) const { return steps.at(static_cast<std::size_t>(t - 1)); }
};

bool same_content(const Trace& a, const Trace& b);

/// Full trace of length min(T, termination time). Requires T >= 1.
Trace rollout(const System& system, const Seed& seed, int T,
              const std::vector<InterventionSpec>& interventions = {});
Trace rollout(const EnvSpec& env, const AgentSpec& agent, const Seed& seed, int T);

/// Rewind (T' <= |trace|) or continue deterministically (T' > |trace|).
Trace extend(const Trace& trace, int T);

/// Branches `trace` at spec.time: prefix kept, suffix regenerated up to the parent's length.
/// Throws InterventionError for times outside [1, |trace|] or illegal edits.
Trace intervene(const Trace& trace, const InterventionSpec& spec);

/// Re-simulates a trace from its seed and intervention lineage alone.
Trace replay(const Trace& trace);

/// Produces step t given the previous record (nullptr for t = 1).
StepRecord produce_step(const System& system, const Seed& seed,
                        const std::vector<InterventionSpec>& interventions,
                        const StepRecord* previous, int t);

// JSON-lines trace files: a header line followed by one StepRecord per line.
std::string trace_to_jsonl(const Trace& trace);
Trace trace_from_jsonl(const std::string& text);
nlohmann::json trace_header_json(const Trace& trace);
nlohmann::json step_to_json(const StepRecord& s);
StepRecord step_from_json(const nlohmann::json& j);

/// Trace storage keeping full snapshots every `kCheckpointEvery` steps; the steps in
/// between are re-simulated on read. Concurrent readers, serialized writers.
class TraceStore {
 public:
  static constexpr int kCheckpointEvery = 8;

  void put(const Trace& trace);
  [[nodiscard]] std::optional<Trace> get(const std::string& id) const;
  [[nodiscard]] bool contains(const std::string& id) const;
  [[nodiscard]] std::vector<std::string> ids() const;
  [[nodiscard]] std::size_t stored_snapshots(const std::string& id) const;

 private:
  struct Entry {
    Trace skeleton;  // everything but steps
    int length = 0;
    std::map<int, StepRecord> checkpoints;
  };
  mutable std::shared_mutex mutex_;
  std::map<std::string, Entry> entries_;
  std::vector<std::string> order_;
};

}  // namespace acw
