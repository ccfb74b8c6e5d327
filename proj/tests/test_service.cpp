#include <doctest.h>

#include <chrono>
#include <filesystem>
#include <random>
#include <thread>

#include <httplib.h>

#include "acw/experiments.hpp"
#include "acw/service.hpp"

using namespace acw;
using nlohmann::json;

namespace {

Response post(Service& s, const std::string& path, const json& body, const std::string& key = {}) {
  return s.handle("POST", path, body.dump(), key);
}

Response get(Service& s, const std::string& path) { return s.handle("GET", path, ""); }

std::filesystem::path scratch_dir(const std::string& tag) {
  auto p = std::filesystem::temp_directory_path() /
           ("acw-" + tag + "-" + std::to_string(std::random_device{}()));
  std::filesystem::remove_all(p);
  return p;
}

json wait_job(Service& s, const std::string& id) {
  for (int i = 0; i < 600; ++i) {
    auto r = get(s, "/jobs/" + id);
    if (r.body["status"] != "running") return r.body;
    std::this_thread::sleep_for(std::chrono::milliseconds(20));
  }
  return {};
}

json mimic_plan(bool leader_blue) {
  std::string root = leader_blue ? "B" : "R", child = leader_blue ? "R" : "B";
  return {{"structure", {{root, json::array()}, {child, {root}}}},
          {"cpts", json::array({{{"child", root}, {"regimes", {"observational"}}},
                                {{"child", child}, {"parents", {root}}, {"regimes", {"observational"}}}})}};
}

json mimic_extractors() {
  return json::array(
      {{{"name", "B"}, {"variable", {{"name", "B"}, {"domain", {"l", "r"}}}}, {"rule", {{"rule", "move-direction"}, {"entity", "blue"}, {"t", 1}}}},
       {{"name", "R"}, {"variable", {{"name", "R"}, {"domain", {"l", "r"}}}}, {"rule", {{"rule", "move-direction"}, {"entity", "red"}, {"t", 1}}}}});
}

}  // namespace

TEST_CASE("sessions and traces") {
  Service s;
  CHECK(get(s, "/").status == 200);
  auto created = post(s, "/sessions", {{"env", "floor-memory"}, {"agent", "floor-memory/b"}, {"seed", 4}});
  REQUIRE(created.status == 201);
  auto sid = created.body["session_id"].get<std::string>();
  auto root = created.body["root_trace_id"].get<std::string>();
  CHECK(created.body["trace"]["terminated"] == true);

  auto full = get(s, "/sessions/" + sid + "/traces/" + root);
  REQUIRE(full.status == 200);
  auto len = full.body["length"].get<int>();
  CHECK(full.body["steps"].size() == static_cast<std::size_t>(len));
  auto pos = full.body["steps"][2]["world"]["entities"]["agent"];

  // The step-3 push: mirror the agent across the corridor.
  json spec = {{"kind", "world-edit"}, {"time", 3}, {"path", "/entities/agent"},
               {"value", {pos[0], 8 - pos[1].get<int>()}}};
  auto pushed = post(s, "/sessions/" + sid + "/traces/" + root + "/intervene", {{"spec", spec}});
  REQUIRE(pushed.status == 200);
  CHECK(pushed.body["parent"]["trace_id"] == root);
  auto child = get(s, "/sessions/" + sid + "/traces/" + pushed.body["trace_id"].get<std::string>());
  for (int k = 0; k < 2; ++k) CHECK(child.body["steps"][k] == full.body["steps"][k]);

  auto same = post(s, "/sessions/" + sid + "/traces/" + root + "/extend", {{"T", len}});
  CHECK(same.body["trace_id"] == root);
  auto shorter = post(s, "/sessions/" + sid + "/traces/" + root + "/extend", {{"T", 2}});
  CHECK(shorter.body["length"] == 2);
  auto list = get(s, "/sessions/" + sid + "/traces");
  CHECK(list.body["traces"].size() == 3);
  CHECK(get(s, "/sessions").body["sessions"].size() == 1);
  CHECK(get(s, "/sessions/" + sid).body["root_trace_id"] == root);
}

TEST_CASE("error statuses") {
  Service s;
  auto sid = post(s, "/sessions", {{"env", "mimic"}, {"agent", "mimic/leader"}, {"T", 5}}).body["session_id"].get<std::string>();
  auto root = get(s, "/sessions/" + sid).body["root_trace_id"].get<std::string>();
  CHECK(get(s, "/sessions/s-99").status == 404);
  CHECK(get(s, "/sessions/" + sid + "/traces/tr-0").status == 404);
  CHECK(get(s, "/nowhere").status == 404);
  CHECK(get(s, "/models/m-1").status == 404);
  CHECK(post(s, "/experiments/chess/run", json::object()).status == 404);

  auto late = post(s, "/sessions/" + sid + "/traces/" + root + "/intervene",
                   {{"kind", "force-action"}, {"time", 9}, {"action", "left"}});
  CHECK(late.status == 409);
  CHECK(late.body["code"] == "illegal_intervention");
  auto wall = post(s, "/sessions/" + sid + "/traces/" + root + "/intervene",
                   {{"kind", "world-edit"}, {"time", 2}, {"path", "/entities/blue"}, {"value", {0, 0}}});
  CHECK(wall.status == 409);

  auto bad = post(s, "/sessions/" + sid + "/traces/" + root + "/intervene", {{"kind", "teleport"}, {"time", 1}});
  CHECK(bad.status == 422);
  CHECK(s.handle("POST", "/sessions", "{not json").status == 422);
  CHECK(post(s, "/sessions", {{"agent", "mimic/leader"}}).status == 422);
  CHECK(post(s, "/sessions", {{"env", "mimic"}, {"agent", "key-door/A"}}).status == 422);
  CHECK(post(s, "/sessions/" + sid + "/traces/" + root + "/extend", {{"T", "ten"}}).status == 422);
  CHECK(post(s, "/sessions/" + sid + "/collect", {{"n", 5}}).status == 422);

  // A tree whose job is still queued or running is not ready; an unknown one is missing.
  CHECK(get(s, "/trees/tree-77").status == 404);
}

TEST_CASE("collect, build and query a hypothesis set") {
  Service s;
  auto sid = post(s, "/sessions", {{"env", "mimic"}, {"agent", "mimic/leader"}, {"T", 2}}).body["session_id"].get<std::string>();
  auto job = post(s, "/sessions/" + sid + "/collect",
                  {{"extractors", mimic_extractors()}, {"n", 3000}, {"horizon", 2}, {"seed", 7}});
  REQUIRE(job.status == 202);
  auto done = wait_job(s, job.body["job_id"].get<std::string>());
  REQUIRE(done["status"] == "done");
  auto tree = get(s, "/trees/" + job.body["tree_id"].get<std::string>());
  REQUIRE(tree.status == 200);

  json entries = json::array();
  auto b = mimic_plan(true), r = mimic_plan(false);
  b["label"] = "b";
  b["prior"] = 0.5;
  r["label"] = "r";
  r["prior"] = 0.5;
  entries.push_back(b);
  entries.push_back(r);
  auto model = post(s, "/sessions/" + sid + "/models",
                    {{"tree_id", job.body["tree_id"]}, {"hypotheses", {{"variable", "L"}, {"entries", entries}}}});
  REQUIRE(model.status == 201);
  auto mid = model.body["model_id"].get<std::string>();
  CHECK(get(s, "/models/" + mid).status == 200);

  auto q = post(s, "/models/" + mid + "/query",
                {{"level", "hypothesis-posterior"}, {"target", {{"L", "b"}}}, {"do", {{"R", "l"}}}, {"evidence", {{"B", "r"}}}});
  REQUIRE(q.status == 200);
  CHECK(std::abs(q.body["probability"].get<double>() - 0.25 / 0.30) < 0.03);
  CHECK(q.body["method"] == "bayes");

  auto single = post(s, "/sessions/" + sid + "/models", [&] {
    auto p = mimic_plan(true);
    p["tree_id"] = job.body["tree_id"];
    return p;
  }());
  REQUIRE(single.status == 201);
  auto sm = single.body["model_id"].get<std::string>();
  auto unknown = post(s, "/models/" + sm + "/query",
                      {{"level", "associational"}, {"target", {{"R", "l"}}}, {"evidence", {{"B", "x"}}}});
  CHECK(unknown.status == 422);
  CHECK(unknown.body["code"] == "invalid_model");

  auto X = VariableDef("X", {"0", "1"}), Y = VariableDef("Y", {"0", "1"});
  ScmModel copy({Cpt::prior(X, {.5, .5}), Cpt::deterministic(Y, {X}, {"0", "1"})});
  auto literal = post(s, "/sessions/" + sid + "/models", {{"model", model_to_json(copy)}});
  REQUIRE(literal.status == 201);
  auto zero = post(s, "/models/" + literal.body["model_id"].get<std::string>() + "/query",
                   {{"level", "associational"}, {"target", {{"Y", "0"}}}, {"evidence", {{"X", "1"}, {"Y", "0"}}}});
  CHECK(zero.status == 422);
  CHECK(zero.body["code"] == "zero_probability_evidence");
  auto cond = post(s, "/models/" + sm + "/query", {{"level", "associational"}, {"target", {{"R", "l"}}}, {"evidence", {{"B", "l"}}}});
  CHECK(std::abs(cond.body["probability"].get<double>() - 0.9) < 0.03);
  CHECK(post(s, "/sessions/" + sid + "/models", {{"structure", {{"B", json::array()}}}, {"cpts", json::array({{{"child", "B"}}})}}).status ==
        422);
}

TEST_CASE("idempotency keys") {
  Service s;
  auto a = post(s, "/sessions", {{"env", "pick-up"}, {"agent", "pick-up/A"}, {"seed", 1}}, "k1");
  auto b = post(s, "/sessions", {{"env", "pick-up"}, {"agent", "pick-up/A"}, {"seed", 1}}, "k1");
  CHECK(a.body == b.body);
  CHECK(get(s, "/sessions").body["sessions"].size() == 1);
  auto c = post(s, "/sessions", {{"env", "pick-up"}, {"agent", "pick-up/A"}, {"seed", 1}}, "k2");
  CHECK(c.body["session_id"] != a.body["session_id"]);
  CHECK(c.body["root_trace_id"] == a.body["root_trace_id"]);
}

TEST_CASE("request log replay restores state") {
  auto dir = scratch_dir("replay");
  json first_trace, tree;
  std::string sid, branch, tree_id;
  {
    Service s(dir);
    sid = post(s, "/sessions", {{"env", "key-door"}, {"agent", "key-door/A"}, {"seed", 3}}, "a").body["session_id"].get<std::string>();
    auto root = get(s, "/sessions/" + sid).body["root_trace_id"].get<std::string>();
    branch = post(s, "/sessions/" + sid + "/traces/" + root + "/intervene",
                  {{"kind", "force-action"}, {"time", 1}, {"action", "up"}}, "b")
                 .body["trace_id"].get<std::string>();
    auto job = post(s, "/sessions/" + sid + "/collect",
                    {{"extractors", json::array({{{"name", "K"}, {"variable", {{"name", "K"}, {"domain", {"y", "n"}}}},
                                                  {"rule", {{"rule", "picked-up"}, {"item", "key"}}}}})},
                     {"n", 50}},
                    "c");
    tree_id = job.body["tree_id"].get<std::string>();
    wait_job(s, job.body["job_id"].get<std::string>());
    s.wait_idle();
    first_trace = get(s, "/sessions/" + sid + "/traces/" + branch).body;
    tree = get(s, "/trees/" + tree_id).body;
  }
  {
    Service s(dir);
    CHECK(get(s, "/sessions/" + sid + "/traces/" + branch).body == first_trace);
    CHECK(get(s, "/trees/" + tree_id).body == tree);
    auto again = post(s, "/sessions", {{"env", "key-door"}, {"agent", "key-door/A"}, {"seed", 3}}, "a");
    CHECK(again.body["session_id"] == sid);
    CHECK(get(s, "/sessions").body["sessions"].size() == 1);
  }
  std::filesystem::remove_all(dir);
}

TEST_CASE("http transport") {
  Service s;
  HttpServer server(s);
  int port = server.start("127.0.0.1", 0);
  REQUIRE(port > 0);
  httplib::Client cli("127.0.0.1", port);
  cli.set_read_timeout(120, 0);
  auto res = cli.Get("/experiments");
  REQUIRE(res);
  CHECK(res->status == 200);
  CHECK(json::parse(res->body)["experiments"].size() == 6);

  auto created = cli.Post("/sessions", json{{"env", "grass-sand"}, {"agent", "grass-sand/A"}}.dump(), "application/json");
  REQUIRE(created);
  CHECK(created->status == 201);
  auto missing = cli.Get("/sessions/s-42");
  REQUIRE(missing);
  CHECK(missing->status == 404);

  httplib::Headers keyed{{Service::kRequestKeyHeader, "same"}};
  auto k1 = cli.Post("/sessions", keyed, json{{"env", "mimic"}, {"agent", "mimic/leader"}}.dump(), "application/json");
  auto k2 = cli.Post("/sessions", keyed, json{{"env", "mimic"}, {"agent", "mimic/leader"}}.dump(), "application/json");
  REQUIRE(k1);
  REQUIRE(k2);
  CHECK(k1->body == k2->body);

  auto run = cli.Post("/experiments/mimic/run", json{{"rollouts", 200}, {"seed", 7}}.dump(), "application/json");
  REQUIRE(run);
  REQUIRE(run->status == 200);
  CHECK(json::parse(run->body) == table_to_json(run_experiment("mimic", 200, 7)));
  server.stop();
}
