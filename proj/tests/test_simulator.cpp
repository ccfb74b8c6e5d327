#include <doctest.h>

#include "acw/errors.hpp"
#include "acw/simulator.hpp"
#include "oracle.hpp"

using namespace acw;

namespace {

System sys(const std::string& agent) {
  auto a = make_agent_spec(agent);
  return make_system(make_env_spec(a.env_id()), a);
}

}  // namespace

TEST_CASE("rollout basics") {
  auto s = sys("grass-sand/B");
  auto t = rollout(s, Seed(1), 200);
  CHECK(t.terminated());
  CHECK(t.length() < 200);
  CHECK(t.at(1).t == 1);
  CHECK(t.steps.back().action.empty());
  CHECK(rollout(s, Seed(1), 3).length() == 3);
  CHECK_THROWS_AS(rollout(s, Seed(1), 0), ConfigError);
  CHECK(rollout(s, Seed(1), 200).id == t.id);
  CHECK(rollout(s, Seed(2), 200).id != t.id);
}

TEST_CASE("mimic binds the leader first") {
  auto s = make_system(make_env_spec("mimic"), {make_agent_spec("mimic/imitator"), make_agent_spec("mimic/leader")});
  CHECK(s.bindings.front().second.agent_id == "mimic/leader");
  auto t = rollout(s, Seed(3), 4);
  auto leader = s.bindings[0].first, follower = s.bindings[1].first;
  CHECK(t.at(1).observation.at(follower).peer_actions.at(leader) == t.at(1).action.at(leader));
  CHECK(t.at(1).observation.at(leader).peer_actions.empty());
  CHECK_THROWS_AS(make_system(make_env_spec("mimic"), make_agent_spec("key-door/A")), ConfigError);
  CHECK_THROWS_AS(make_system(make_env_spec("key-door"), std::vector<AgentSpec>{}), ConfigError);
}

TEST_CASE("determinism, prefix and rewind invariants") {
  CHECK(oracle::determinism_failures(150, 1) == 0);
  CHECK(oracle::branch_prefix_failures(150, 2) == 0);
  CHECK(oracle::rewind_replay_failures(150, 3) == 0);
}

TEST_CASE("jsonl round trip") {
  auto t = rollout(sys("key-door/B"), Seed(4), 300);
  auto text = trace_to_jsonl(t);
  auto back = trace_from_jsonl(text);
  CHECK(same_content(t, back));
  CHECK(trace_to_jsonl(back) == text);
  CHECK_THROWS_AS(trace_from_jsonl(""), ConfigError);
  auto cut = text.substr(0, text.rfind('\n', text.size() - 2) + 1);
  CHECK_THROWS_AS(trace_from_jsonl(cut), ConfigError);
}

TEST_CASE("extend to the same length is the identity") {
  auto t = rollout(sys("floor-memory/a"), Seed(5), 6);
  auto same = extend(t, 6);
  CHECK(same.id == t.id);
  CHECK(same.steps == t.steps);
  auto longer = extend(t, 400);
  CHECK(longer.terminated());
  CHECK(same_content(longer, rollout(t.system, t.seed, 400)));
  CHECK_THROWS_AS(extend(t, 0), ConfigError);
}

TEST_CASE("floor-memory push keeps the prefix") {
  auto t = rollout(sys("floor-memory/b"), Seed(6), 400);
  auto pos = t.at(3).world.entities.at("agent");
  auto pushed = intervene(t, InterventionSpec::world_edit(3, "/entities/agent", nlohmann::json::array({pos.row, 8 - pos.col})));
  CHECK(pushed.parent->trace_id == t.id);
  CHECK(pushed.parent->branch_time == 3);
  for (int k = 1; k < 3; ++k) CHECK(pushed.at(k) == t.at(k));
  CHECK(pushed.at(3).world.entities.at("agent").col == 8 - pos.col);
  CHECK(pushed.id != t.id);
}

TEST_CASE("branch keeps earlier interventions only") {
  auto t = rollout(sys("grass-sand/A"), Seed(7), 400);
  auto b1 = intervene(t, InterventionSpec::force_action(2, Action::up));
  auto b2 = intervene(b1, InterventionSpec::reseed(4, Seed(99)));
  CHECK(b2.interventions.size() == 2);
  auto b3 = intervene(b2, InterventionSpec::force_action(1, Action::down));
  CHECK(b3.interventions.size() == 1);
  CHECK(b3.at(1).action.at("agent") == Action::down);
}

TEST_CASE("intervention errors") {
  auto t = rollout(sys("pick-up/A"), Seed(8), 5);
  CHECK_THROWS_AS(intervene(t, InterventionSpec::force_action(0, Action::up)), InterventionError);
  CHECK_THROWS_AS(intervene(t, InterventionSpec::force_action(6, Action::up)), InterventionError);
  CHECK_THROWS_AS(intervene(t, InterventionSpec::world_edit(2, "/entities/agent", nlohmann::json::array({0, 0}))), InterventionError);
  CHECK_THROWS_AS(intervene(t, InterventionSpec::agent_edit(2, "x", "y", "nobody")), InterventionError);
  CHECK_THROWS_AS(intervention_from_json({{"kind", "teleport"}, {"time", 1}}), InterventionError);
  CHECK_THROWS_AS(intervention_from_json({{"kind", "world-edit"}}), InterventionError);
  auto spec = InterventionSpec::world_edit(2, "/grid/1/1", "floor");
  CHECK(intervention_from_json(intervention_to_json(spec)) == spec);
}

TEST_CASE("trace store reconstructs from checkpoints") {
  TraceStore store;
  auto t = rollout(sys("mimic/leader"), Seed(9), 20);
  REQUIRE(t.length() == 20);
  store.put(t);
  CHECK(store.contains(t.id));
  CHECK(store.stored_snapshots(t.id) == 3);
  auto back = store.get(t.id);
  REQUIRE(back.has_value());
  CHECK(same_content(*back, t));
  auto b = intervene(t, InterventionSpec::force_action(10, Action::left));
  store.put(b);
  CHECK(same_content(*store.get(b.id), b));
  CHECK(store.ids() == std::vector<std::string>{t.id, b.id});
  CHECK_FALSE(store.get("tr-none").has_value());
}

TEST_CASE("system json round trip") {
  for (const auto& id : agent_ids()) {
    auto s = sys(id);
    CHECK(system_to_json(system_from_json(system_to_json(s))) == system_to_json(s));
  }
}
