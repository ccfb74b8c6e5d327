#include <doctest.h>

#include "acw/agents.hpp"
#include "acw/errors.hpp"
#include "oracle.hpp"

using namespace acw;

namespace {

// Runs one agent to termination outside the simulator.
WorldState run(const EnvSpec& env, const AgentSpec& agent, WorldState w, std::uint64_t seed, int max_steps = 200) {
  auto m = agent_init(agent, Seed(seed));
  const std::string id = env.entity_ids.front();
  auto obs = observe(env, w, id);
  for (int t = 1; t <= max_steps && !w.terminated; ++t) {
    auto [next, a] = agent_act(agent, m, obs, Seed(seed).child({static_cast<std::uint64_t>(t)}));
    m = next;
    auto stepped = env_step(env, w, a, Seed(0));
    w = stepped.first;
    obs = stepped.second;
  }
  return w;
}

AgentSpec noiseless(const std::string& id) { return make_agent_spec(id, {{"slip", 0.0}}); }

}  // namespace

TEST_CASE("registry") {
  CHECK(agent_ids().size() == 12);
  for (const auto& id : agent_ids()) {
    auto spec = make_agent_spec(id);
    CHECK(agent_spec_from_json(agent_spec_to_json(spec)).agent_id == id);
  }
  CHECK_THROWS_AS(make_agent_spec("grass-sand/Z"), ConfigError);
  CHECK(make_agent_spec("pick-up/B").env_id() == "pick-up");
}

TEST_CASE("window size mismatch") {
  auto fm = make_env_spec("floor-memory");
  auto gs = make_env_spec("grass-sand");
  auto w = env_init(gs, Seed(1));
  auto o = observe(gs, w, "agent");
  CHECK_THROWS_AS(agent_act(make_agent_spec("floor-memory/a"), {}, o, Seed(1)), ObservationError);
  auto ok = observe(fm, env_init(fm, Seed(1)), "agent");
  CHECK_NOTHROW(agent_act(make_agent_spec("floor-memory/a"), agent_init(make_agent_spec("floor-memory/a"), Seed(1)), ok, Seed(1)));
}

TEST_CASE("agents act deterministically") {
  for (const auto& id : agent_ids()) {
    auto spec = make_agent_spec(id);
    auto env = make_env_spec(spec.env_id());
    auto w = env_init(env, Seed(4));
    auto o = observe(env, w, env.entity_ids.front());
    auto m = agent_init(spec, Seed(4));
    CHECK(agent_act(spec, m, o, Seed(9)) == agent_act(spec, m, o, Seed(9)));
  }
}

TEST_CASE("grass-sand policies") {
  auto env = make_env_spec("grass-sand");
  for (std::uint64_t s = 0; s < 40; ++s) {
    auto w = env_init(env, Seed(s));
    auto b = run(env, noiseless("grass-sand/B"), w, s);
    CHECK(b.last_reward["agent"] == 1.0);
    auto a = run(env, noiseless("grass-sand/A"), w, s);
    CHECK(a.last_reward["agent"] == 1.0);
    // Flip the floor: A follows it, B does not.
    auto flipped = w;
    apply_world_edit(flipped, "/floor", flipped.grid.at({5, 4}) == TileKind::grass ? "sand" : "grass");
    CHECK(run(env, noiseless("grass-sand/A"), flipped, s).last_reward["agent"] == 0.0);
    CHECK(run(env, noiseless("grass-sand/B"), flipped, s).last_reward["agent"] == 1.0);
  }
  auto right = noiseless("grass-sand/A");
  right.noise_params["grass_side"] = "right";
  auto env_r = make_env_spec("grass-sand", {{"init_params", {{"grass_side", "right"}}}});
  for (std::uint64_t s = 0; s < 20; ++s)
    CHECK(run(env_r, right, env_init(env_r, Seed(s)), s).last_reward["agent"] == 1.0);
}

TEST_CASE("floor-memory policies") {
  auto env = make_env_spec("floor-memory");
  for (std::uint64_t s = 0; s < 20; ++s) {
    auto w = env_init(env, Seed(s));
    CHECK(run(env, noiseless("floor-memory/a"), w, s).last_reward["agent"] == 1.0);
    CHECK(run(env, noiseless("floor-memory/b"), w, s).last_reward["agent"] == 1.0);
  }
}

TEST_CASE("pick-up A always reaches the reward") {
  auto env = make_env_spec("pick-up");
  for (std::uint64_t s = 0; s < 40; ++s) {
    auto w = env_init(env, Seed(s));
    CHECK(run(env, noiseless("pick-up/A"), w, s).last_reward["agent"] == 1.0);
  }
}

TEST_CASE("gated-room lovers") {
  auto env = make_env_spec("gated-room");
  for (std::uint64_t s = 0; s < 20; ++s) {
    auto w = env_init(env, Seed(s));
    auto red = run(env, noiseless("gated-room/red-lover"), w, s);
    CHECK(red.inventory["agent"].count("pill:red") == 1);
    auto green = run(env, noiseless("gated-room/green-lover"), w, s);
    CHECK(green.inventory["agent"].count("pill:green") == 1);
  }
}

TEST_CASE("mimic imitator copies at the match rate") {
  auto leader = make_agent_spec("mimic/leader");
  auto imitator = make_agent_spec("mimic/imitator");
  auto env = make_env_spec("mimic");
  auto o = observe(env, env_init(env, Seed(0)), "red");
  int same = 0, left = 0;
  const int n = 20000;
  for (int i = 0; i < n; ++i) {
    auto [ml, la] = agent_act(leader, {}, o, Seed(static_cast<std::uint64_t>(i)));
    left += la == Action::left;
    Observation oi = o;
    oi.peer_actions["blue"] = la;
    auto [mi, ia] = agent_act(imitator, {}, oi, Seed(static_cast<std::uint64_t>(i)).child({1}));
    same += ia == la;
  }
  CHECK(static_cast<double>(same) / n == doctest::Approx(0.9).epsilon(0.01));
  CHECK(static_cast<double>(left) / n == doctest::Approx(0.5).epsilon(0.03));
}

TEST_CASE("key-door A matches the layout oracle") {
  auto env = make_env_spec("key-door");
  auto a = noiseless("key-door/A");
  int total = 0, keys = 0;
  for (int ar = 1; ar <= 5; ++ar)
    for (int ac = 1; ac <= 5; ++ac)
      for (int kr = 1; kr <= 5; ++kr)
        for (int kc = 1; kc <= 5; ++kc) {
          if (ar == kr && ac == kc) continue;
          auto w = env_init(env, Seed(1));
          for (int r = 1; r <= 5; ++r)
            for (int c = 1; c <= 5; ++c) w.grid.set({r, c}, TileKind::floor);
          w.grid.set({3, 6}, TileKind::gate_open);
          w.grid.set({kr, kc}, TileKind::key);
          w.entities["agent"] = {ar, ac};
          auto end = run(env, a, w, 0);
          REQUIRE(end.last_reward["agent"] == 1.0);
          keys += end.inventory["agent"].count("key") > 0;
          ++total;
        }
  CHECK(total == 600);
  CHECK(static_cast<double>(keys) / total == doctest::Approx(oracle::key_door_a_key_rate()).epsilon(1e-12));
}

TEST_CASE("key-door B fetches the key first") {
  auto env = make_env_spec("key-door");
  for (std::uint64_t s = 0; s < 30; ++s) {
    auto end = run(env, noiseless("key-door/B"), env_init(env, Seed(s)), s);
    CHECK(end.last_reward["agent"] == 1.0);
    CHECK(end.inventory["agent"].count("key") == 1);
  }
}

TEST_CASE("memory json round trip") {
  MemoryState m;
  m.slots["cue"] = "grass";
  m.step_phase = 3;
  CHECK(memory_from_json(memory_to_json(m)) == m);
}
