#include <doctest.h>

#include <cmath>

#include "acw/errors.hpp"
#include "acw/experiments.hpp"

using namespace acw;
using nlohmann::json;

namespace {

QueryTable small(const std::string& name, std::vector<double> a) {
  QueryTable t;
  t.experiment = name;
  t.columns = {"A"};
  for (std::size_t i = 0; i < a.size(); ++i) {
    t.labels.push_back("row" + std::to_string(i));
    t.values.push_back({a[i]});
  }
  return t;
}

}  // namespace

TEST_CASE("registered experiments") {
  CHECK(experiment_names() == std::vector<std::string>{"grass-sand", "floor-memory", "pick-up", "gated-room", "mimic", "key-door"});
  for (const auto& n : experiment_names()) {
    auto spec = make_experiment(n);
    CHECK(spec.name == n);
    CHECK(spec.rollouts == 1000);
    auto back = experiment_from_json(experiment_to_json(spec));
    CHECK(experiment_to_json(back) == experiment_to_json(spec));
  }
  CHECK_THROWS_AS(make_experiment("tic-tac-toe"), ConfigError);
}

TEST_CASE("zero rollouts give prior means everywhere") {
  for (const auto& n : experiment_names()) {
    auto t = run_experiment(n, 0, 7);
    for (std::size_t r = 0; r < t.labels.size(); ++r)
      for (double v : t.values[r]) {
        double expected = 0.5;
        if (t.labels[r].rfind("P(P=", 0) == 0) expected = 1.0 / 3.0;
        if (t.labels[r] == "f(D=c) - f(D=o)") expected = 0.0;
        CHECK_MESSAGE(std::abs(v - expected) < 1e-12, n << " / " << t.labels[r]);
      }
  }
}

TEST_CASE("tables reproduce byte for byte") {
  auto a = run_experiment("mimic", 300, 7);
  auto b = run_experiment("mimic", 300, 7);
  CHECK(table_to_json(a).dump() == table_to_json(b).dump());
  CHECK(table_to_text(a) == table_to_text(b));
  auto c = run_experiment("mimic", 300, 8);
  CHECK(table_to_json(a).dump() != table_to_json(c).dump());
  CHECK(a.metadata["n"] == 300);
  CHECK(a.metadata.contains("config_hash"));
}

TEST_CASE("table json round trip") {
  auto t = run_experiment("key-door", 50, 3);
  auto back = table_from_json(table_to_json(t));
  CHECK(table_to_json(back) == table_to_json(t));
  CHECK(back.at("f(D=c)", "B") == t.at("f(D=c)", "B"));
  CHECK_FALSE(t.row("nope").has_value());
  auto j = table_to_json(t);
  j["rows"][0]["values"][0] = nullptr;
  CHECK(std::isnan(table_from_json(j).values[0][0]));
}

TEST_CASE("every value is a probability and labels are unique") {
  auto t = run_experiment("gated-room", 200, 7);
  std::set<std::string> seen(t.labels.begin(), t.labels.end());
  CHECK(seen.size() == t.labels.size());
  for (const auto& row : t.values)
    for (double v : row) {
      CHECK(v >= 0.0);
      CHECK(v <= 1.0);
    }
}

TEST_CASE("diff tables") {
  auto ref = small("x", {0.361, 0.2338});
  CHECK(diff_tables(ref, ref, json::object()).pass());

  json tol = {{"default", 0.03}};
  CHECK(diff_tables(small("x", {0.357, 0.2338}), ref, tol).pass());

  json tight = {{"default", 0.05}};
  auto rep = diff_tables(small("x", {0.361, 0.2338 + 0.08}), ref, tight);
  CHECK_FALSE(rep.pass());
  CHECK(rep.to_text().find("FAIL") != std::string::npos);

  json skip = {{"default", 0.01}, {"experiments", {{"x", {{"cells", {{"row1", {{"A", "skip"}}}}}}}}}};
  CHECK(diff_tables(small("x", {0.361, 0.9}), ref, skip).pass());

  json order = {{"default", 1.0},
                {"experiments", {{"x", {{"orderings", json::array({{{"column", "A"}, {"increasing", {"row1", "row0"}}}})}}}}}};
  CHECK(diff_tables(small("x", {0.5, 0.2}), ref, order).pass());
  auto bad = diff_tables(small("x", {0.2, 0.5}), ref, order);
  CHECK_FALSE(bad.pass());
  CHECK(bad.ordering_failures.size() == 1);

  auto renamed = ref;
  renamed.labels[1] = "other";
  CHECK_THROWS_AS(diff_tables(renamed, ref, tol), ConfigError);
  auto nan_ref = small("x", {std::nan(""), 0.2338});
  CHECK(diff_tables(small("x", {0.7, 0.2338}), nan_ref, tol).pass());
}

TEST_CASE("model plans") {
  auto spec = make_experiment("grass-sand");
  REQUIRE_FALSE(spec.models.empty());
  auto plan = spec.models.front();
  auto j = model_plan_to_json(plan);
  CHECK(model_plan_to_json(model_plan_from_json(j)) == j);
  auto cols = build_column(spec, 0, Seed(7));
  CHECK(cols.models.count(plan.name) == 1);
  auto m = build_model(plan, cols.tree);
  CHECK(model_to_json(m) == model_to_json(cols.models.at(plan.name)));
  auto c = Cpt::prior(VariableDef("X", {"a", "b"}), {.3, .7});
  CHECK(cpt_from_json(cpt_to_json(c)) == c);
}
