#include "acw/simulator.hpp"

#include <algorithm>
#include <cstdio>
#include <mutex>
#include <sstream>

#include "acw/errors.hpp"

namespace acw {

namespace {

// Stream roles inside a step seed.
enum : std::uint64_t { kRoleInit = 1, kRoleEnv = 2, kRoleAgentInit = 3, kRoleAgent = 4 };

std::string kind_name(InterventionSpec::Kind k) {
  switch (k) {
    case InterventionSpec::Kind::reseed: return "reseed";
    case InterventionSpec::Kind::world_edit: return "world-edit";
    case InterventionSpec::Kind::agent_edit: return "agent-edit";
    case InterventionSpec::Kind::force_action: return "force-action";
  }
  return "";
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

// Content-derived id so identical recipes yield identical traces.
std::string make_trace_id(const Trace& t) {
  nlohmann::json recipe = trace_header_json(t);
  recipe.erase("trace_id");
  recipe["length"] = t.length();
  return "tr-" + hex64(fnv1a(recipe.dump()));
}

Seed seed_at(const Seed& base, const std::vector<InterventionSpec>& ivs, int t) {
  Seed s = base;
  int best = 0;
  for (const auto& iv : ivs)
    if (iv.kind == InterventionSpec::Kind::reseed && iv.time <= t && iv.time >= best) {
      s = iv.new_seed;
      best = iv.time;
    }
  return s;
}

std::size_t binding_index(const System& sys, const std::string& entity) {
  if (entity.empty()) return 0;
  for (std::size_t i = 0; i < sys.bindings.size(); ++i)
    if (sys.bindings[i].first == entity) return i;
  throw InterventionError("no agent bound to entity: " + entity);
}

Trace finish(Trace t) {
  t.id = make_trace_id(t);
  return t;
}

Trace continue_to(Trace t, int T) {
  while (t.length() < T && !t.terminated()) {
    const StepRecord* prev = t.steps.empty() ? nullptr : &t.steps.back();
    t.steps.push_back(produce_step(t.system, t.seed, t.interventions, prev, t.length() + 1));
  }
  return t;
}

}  // namespace

// ---- systems -------------------------------------------------------------------

System make_system(const EnvSpec& env, const std::vector<AgentSpec>& agents) {
  System s{env, {}};
  if (agents.size() != env.entity_ids.size()) {
    throw ConfigError("env " + env.env_id + " needs " + std::to_string(env.entity_ids.size()) +
                      " agent(s)");
  }
  for (std::size_t i = 0; i < agents.size(); ++i) {
    if (agents[i].env_id() != env.env_id)
      throw ConfigError("agent " + agents[i].agent_id + " does not belong to env " + env.env_id);
    s.bindings.emplace_back(env.entity_ids[i], agents[i]);
  }
  if (env.env_id == "mimic") {
    std::stable_sort(s.bindings.begin(), s.bindings.end(), [](const auto& a, const auto& b) {
      return a.second.agent_id == "mimic/leader" && b.second.agent_id != "mimic/leader";
    });
  }
  return s;
}

System make_system(const EnvSpec& env, const AgentSpec& agent) {
  if (env.env_id == "mimic") {
    // The other mimic role is implied.
    const bool leader = agent.agent_id == "mimic/leader";
    const AgentSpec other = make_agent_spec(leader ? "mimic/imitator" : "mimic/leader");
    return make_system(env, leader ? std::vector{agent, other} : std::vector{other, agent});
  }
  return make_system(env, std::vector{agent});
}

nlohmann::json system_to_json(const System& s) {
  nlohmann::json bindings = nlohmann::json::array();
  for (const auto& [entity, agent] : s.bindings)
    bindings.push_back({{"entity", entity}, {"agent", agent_spec_to_json(agent)}});
  return {{"env", env_spec_to_json(s.env)}, {"bindings", bindings}};
}

System system_from_json(const nlohmann::json& j) {
  System s;
  s.env = env_spec_from_json(j.at("env"));
  for (const auto& b : j.at("bindings"))
    s.bindings.emplace_back(b.at("entity").get<std::string>(), agent_spec_from_json(b.at("agent")));
  return s;
}

// ---- interventions ---------------------------------------------------------------

InterventionSpec InterventionSpec::reseed(int time, Seed seed) {
  InterventionSpec s;
  s.kind = Kind::reseed;
  s.time = time;
  s.new_seed = std::move(seed);
  return s;
}

InterventionSpec InterventionSpec::world_edit(int time, std::string path, nlohmann::json value) {
  InterventionSpec s;
  s.kind = Kind::world_edit;
  s.time = time;
  s.path = std::move(path);
  s.value = std::move(value);
  return s;
}

InterventionSpec InterventionSpec::agent_edit(int time, std::string slot, std::string value,
                                              std::string entity) {
  InterventionSpec s;
  s.kind = Kind::agent_edit;
  s.time = time;
  s.slot = std::move(slot);
  s.value = std::move(value);
  s.entity = std::move(entity);
  return s;
}

InterventionSpec InterventionSpec::force_action(int time, Action action, std::string entity) {
  InterventionSpec s;
  s.kind = Kind::force_action;
  s.time = time;
  s.action = action;
  s.entity = std::move(entity);
  return s;
}

nlohmann::json intervention_to_json(const InterventionSpec& s) {
  nlohmann::json j{{"kind", kind_name(s.kind)}, {"time", s.time}};
  switch (s.kind) {
    case InterventionSpec::Kind::reseed: j["seed"] = s.new_seed; break;
    case InterventionSpec::Kind::world_edit:
      j["path"] = s.path;
      j["value"] = s.value;
      break;
    case InterventionSpec::Kind::agent_edit:
      j["entity"] = s.entity;
      j["slot"] = s.slot;
      j["value"] = s.value;
      break;
    case InterventionSpec::Kind::force_action:
      j["entity"] = s.entity;
      j["action"] = s.action;
      break;
  }
  return j;
}

InterventionSpec intervention_from_json(const nlohmann::json& j) {
  try {
    const std::string kind = j.at("kind").get<std::string>();
    const int time = j.at("time").get<int>();
    if (kind == "reseed") return InterventionSpec::reseed(time, j.at("seed").get<Seed>());
    if (kind == "world-edit")
      return InterventionSpec::world_edit(time, j.at("path").get<std::string>(), j.at("value"));
    if (kind == "agent-edit")
      return InterventionSpec::agent_edit(time, j.at("slot").get<std::string>(),
                                          j.at("value").get<std::string>(),
                                          j.value("entity", std::string()));
    if (kind == "force-action")
      return InterventionSpec::force_action(time, j.at("action").get<Action>(),
                                            j.value("entity", std::string()));
    throw InterventionError("unknown intervention kind: " + kind);
  } catch (const nlohmann::json::exception& e) {
    throw InterventionError(std::string("malformed intervention: ") + e.what());
  } catch (const ConfigError& e) {
    throw InterventionError(e.what());
  }
}

// ---- simulation ------------------------------------------------------------------

StepRecord produce_step(const System& sys, const Seed& base,
                        const std::vector<InterventionSpec>& ivs, const StepRecord* prev, int t) {
  const Seed seed = seed_at(base, ivs, t);
  StepRecord rec;
  rec.t = t;

  if (prev == nullptr) {
    rec.world = env_init(sys.env, seed.child({kRoleInit}));
    for (std::size_t i = 0; i < sys.bindings.size(); ++i)
      rec.memory[sys.bindings[i].first] =
          agent_init(sys.bindings[i].second, seed.child({kRoleAgentInit, i}));
  } else {
    rec.world = env_step(sys.env, prev->world, prev->action,
                         seed.child({kRoleEnv, static_cast<std::uint64_t>(t)}));
    rec.memory = prev->memory;
  }

  for (const auto& iv : ivs) {
    if (iv.time != t) continue;
    if (iv.kind == InterventionSpec::Kind::world_edit) {
      apply_world_edit(rec.world, iv.path, iv.value);
    } else if (iv.kind == InterventionSpec::Kind::agent_edit) {
      const auto& entity = sys.bindings[binding_index(sys, iv.entity)].first;
      if (!iv.value.is_string()) throw InterventionError("agent-edit values are strings");
      rec.memory[entity].slots[iv.slot] = iv.value.get<std::string>();
    }
  }

  if (rec.world.terminated) {
    for (const auto& [entity, agent] : sys.bindings)
      rec.observation[entity] = observe(sys.env, rec.world, entity);
    return rec;
  }

  JointAction committed;
  for (std::size_t i = 0; i < sys.bindings.size(); ++i) {
    const auto& [entity, agent] = sys.bindings[i];
    Observation obs = observe(sys.env, rec.world, entity);
    obs.peer_actions = committed;
    auto [memory, action] = agent_act(agent, rec.memory[entity], obs,
                                      seed.child({kRoleAgent, i, static_cast<std::uint64_t>(t)}));
    for (const auto& iv : ivs)
      if (iv.time == t && iv.kind == InterventionSpec::Kind::force_action &&
          binding_index(sys, iv.entity) == i)
        action = iv.action;
    rec.memory[entity] = std::move(memory);
    rec.observation[entity] = std::move(obs);
    committed[entity] = action;
  }
  rec.action = std::move(committed);
  return rec;
}

bool same_content(const Trace& a, const Trace& b) {
  return a.id == b.id && a.seed == b.seed && a.interventions == b.interventions &&
         a.parent == b.parent && a.steps == b.steps &&
         system_to_json(a.system) == system_to_json(b.system);
}

Trace rollout(const System& system, const Seed& seed, int T,
              const std::vector<InterventionSpec>& interventions) {
  if (T < 1) throw ConfigError("rollout length must be >= 1");
  Trace t;
  t.system = system;
  t.seed = seed;
  t.interventions = interventions;
  return finish(continue_to(std::move(t), T));
}

Trace rollout(const EnvSpec& env, const AgentSpec& agent, const Seed& seed, int T) {
  return rollout(make_system(env, agent), seed, T);
}

Trace extend(const Trace& trace, int T) {
  if (T < 1) throw ConfigError("extend length must be >= 1");
  Trace t = trace;
  if (T <= t.length()) {
    t.steps.resize(static_cast<std::size_t>(T));
  } else {
    t = continue_to(std::move(t), T);
  }
  return finish(std::move(t));
}

Trace intervene(const Trace& trace, const InterventionSpec& spec) {
  if (spec.time < 1 || spec.time > trace.length())
    throw InterventionError("intervention time " + std::to_string(spec.time) +
                            " outside trace of length " + std::to_string(trace.length()));
  Trace t;
  t.system = trace.system;
  t.seed = trace.seed;
  for (const auto& iv : trace.interventions)
    if (iv.time <= spec.time) t.interventions.push_back(iv);
  t.interventions.push_back(spec);
  t.parent = Lineage{trace.id, spec.time, spec};
  t.steps.assign(trace.steps.begin(), trace.steps.begin() + (spec.time - 1));
  return finish(continue_to(std::move(t), trace.length()));
}

Trace replay(const Trace& trace) {
  Trace t = trace;
  const int length = t.length();
  t.steps.clear();
  t = continue_to(std::move(t), length);
  t.id = make_trace_id(t);
  return t;
}

// ---- files -----------------------------------------------------------------------

nlohmann::json trace_header_json(const Trace& trace) {
  nlohmann::json ivs = nlohmann::json::array();
  for (const auto& iv : trace.interventions) ivs.push_back(intervention_to_json(iv));
  nlohmann::json parent = nullptr;
  if (trace.parent) {
    parent = {{"trace_id", trace.parent->trace_id},
              {"branch_time", trace.parent->branch_time},
              {"spec", intervention_to_json(trace.parent->spec)}};
  }
  return {{"trace_id", trace.id},
          {"system", system_to_json(trace.system)},
          {"seed", trace.seed},
          {"interventions", ivs},
          {"parent", parent},
          {"length", trace.length()}};
}

nlohmann::json step_to_json(const StepRecord& s) {
  nlohmann::json j{{"t", s.t}, {"world", world_to_json(s.world)}};
  j["memory"] = nlohmann::json::object();
  for (const auto& [id, m] : s.memory) j["memory"][id] = memory_to_json(m);
  j["observation"] = nlohmann::json::object();
  for (const auto& [id, o] : s.observation) j["observation"][id] = observation_to_json(o);
  j["action"] = nlohmann::json::object();
  for (const auto& [id, a] : s.action) j["action"][id] = a;
  return j;
}

StepRecord step_from_json(const nlohmann::json& j) {
  StepRecord s;
  s.t = j.at("t").get<int>();
  s.world = world_from_json(j.at("world"));
  for (const auto& [id, m] : j.at("memory").items()) s.memory[id] = memory_from_json(m);
  for (const auto& [id, o] : j.at("observation").items())
    s.observation[id] = observation_from_json(o);
  for (const auto& [id, a] : j.at("action").items()) s.action[id] = a.get<Action>();
  return s;
}

std::string trace_to_jsonl(const Trace& trace) {
  std::string out = trace_header_json(trace).dump();
  out += '\n';
  for (const auto& s : trace.steps) {
    out += step_to_json(s).dump();
    out += '\n';
  }
  return out;
}

Trace trace_from_jsonl(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw ConfigError("empty trace file");
  const auto header = nlohmann::json::parse(line);
  Trace t;
  t.id = header.at("trace_id").get<std::string>();
  t.system = system_from_json(header.at("system"));
  t.seed = header.at("seed").get<Seed>();
  for (const auto& iv : header.at("interventions"))
    t.interventions.push_back(intervention_from_json(iv));
  if (!header.at("parent").is_null()) {
    const auto& p = header["parent"];
    t.parent = Lineage{p.at("trace_id").get<std::string>(), p.at("branch_time").get<int>(),
                       intervention_from_json(p.at("spec"))};
  }
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    t.steps.push_back(step_from_json(nlohmann::json::parse(line)));
  }
  if (t.length() != header.at("length").get<int>())
    throw ConfigError("trace file length does not match its header");
  return t;
}

// ---- store -----------------------------------------------------------------------

void TraceStore::put(const Trace& trace) {
  Entry e;
  e.skeleton = trace;
  e.skeleton.steps.clear();
  e.length = trace.length();
  for (const auto& s : trace.steps)
    if ((s.t - 1) % kCheckpointEvery == 0) e.checkpoints.emplace(s.t, s);
  std::unique_lock lock(mutex_);
  if (!entries_.count(trace.id)) order_.push_back(trace.id);
  entries_[trace.id] = std::move(e);
}

std::optional<Trace> TraceStore::get(const std::string& id) const {
  std::shared_lock lock(mutex_);
  auto it = entries_.find(id);
  if (it == entries_.end()) return std::nullopt;
  const Entry& e = it->second;
  Trace t = e.skeleton;
  t.steps.reserve(static_cast<std::size_t>(e.length));
  for (int step = 1; step <= e.length; ++step) {
    if (auto cp = e.checkpoints.find(step); cp != e.checkpoints.end()) {
      t.steps.push_back(cp->second);
    } else {
      t.steps.push_back(produce_step(t.system, t.seed, t.interventions, &t.steps.back(), step));
    }
  }
  return t;
}

bool TraceStore::contains(const std::string& id) const {
  std::shared_lock lock(mutex_);
  return entries_.count(id) > 0;
}

std::vector<std::string> TraceStore::ids() const {
  std::shared_lock lock(mutex_);
  return order_;
}

std::size_t TraceStore::stored_snapshots(const std::string& id) const {
  std::shared_lock lock(mutex_);
  auto it = entries_.find(id);
  return it == entries_.end() ? 0 : it->second.checkpoints.size();
}

}  // namespace acw
