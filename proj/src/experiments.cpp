#include "acw/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <set>
#include <sstream>

#include "acw/errors.hpp"

namespace acw {

namespace {

using json = nlohmann::json;

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

}  // namespace

json cpt_to_json(const Cpt& c) { return {{"child", c.child}, {"parents", c.parents}, {"table", c.table}}; }

Cpt cpt_from_json(const json& j) {
  return Cpt(j.at("child").get<VariableDef>(), j.at("parents").get<std::vector<VariableDef>>(),
             j.at("table").get<std::vector<double>>());
}

namespace {

// ---- spec building helpers ----

VariableDef var(std::string name, std::vector<std::string> domain, std::optional<std::string> undef = {}) {
  return VariableDef(std::move(name), std::move(domain), std::move(undef));
}

FeatureExtractor feature(const VariableDef& v, json rule) { return {v.name, v, std::move(rule)}; }

json edit(int t, const std::string& path, json value) {
  return intervention_to_json(InterventionSpec::world_edit(t, path, std::move(value)));
}

Query q_assoc(Assignment target, Assignment evidence = {}) {
  Query q;
  q.level = Query::Level::associational;
  q.target = std::move(target);
  q.evidence = std::move(evidence);
  return q;
}

Query q_do(Assignment target, Assignment intervention, Assignment evidence = {}) {
  Query q;
  q.level = Query::Level::interventional;
  q.target = std::move(target);
  q.intervention = std::move(intervention);
  q.evidence = std::move(evidence);
  return q;
}

Query q_cf(Assignment target, Assignment antecedent, Assignment evidence) {
  Query q;
  q.level = Query::Level::counterfactual;
  q.target = std::move(target);
  q.intervention = std::move(antecedent);
  q.evidence = std::move(evidence);
  return q;
}

Query q_path(std::vector<std::string> path, Assignment setting, Assignment target) {
  Query q;
  q.level = Query::Level::path_response;
  q.path = std::move(path);
  q.intervention = std::move(setting);
  q.target = std::move(target);
  return q;
}

Query q_hyp(Assignment target, Assignment intervention, Assignment evidence) {
  Query q;
  q.level = Query::Level::hypothesis_posterior;
  q.target = std::move(target);
  q.intervention = std::move(intervention);
  q.evidence = std::move(evidence);
  return q;
}

Column single(const std::string& label, const std::string& agent) {
  return {label, {DataSource{{make_agent_spec(agent)}, {}}}};
}

ExperimentSpec grass_sand() {
  ExperimentSpec s;
  s.name = "grass-sand";
  s.env = make_env_spec("grass-sand");
  s.columns = {single("A", "grass-sand/A"), single("B", "grass-sand/B")};
  auto T = var("T", {"l", "r"}), R = var("R", {"l", "r"}), F = var("F", {"g", "s"}), C = var("C", {"c0", "c1"});
  s.extractors = {feature(T, {{"rule", "terminal-side"}}), feature(R, {{"rule", "pill-side"}, {"t", 1}}),
                  feature(F, {{"rule", "floor-kind"}, {"t", 1}})};
  s.regimes = {
      {"observational", json::array()},
      {"do(R=l)", json::array({edit(1, "/grid/1/1", "pill_plain"), edit(1, "/grid/1/7", "terminal")})},
      {"do(R=r)", json::array({edit(1, "/grid/1/1", "terminal"), edit(1, "/grid/1/7", "pill_plain")})},
      {"do(F=g)", json::array({edit(1, "/floor", "grass")})},
      {"do(F=s)", json::array({edit(1, "/floor", "sand")})},
  };
  std::vector<std::string> all = {"observational", "do(R=l)", "do(R=r)", "do(F=g)", "do(F=s)"};
  ModelPlan m;
  m.name = "M";
  m.structure = {{"C", {}}, {"F", {"C"}}, {"R", {"C"}}, {"T", {"F", "R"}}};
  m.latents = {{C, {0.5, 0.5}}};
  m.cpts = {{"F", {"C"}, {}, Cpt::deterministic(F, {C}, {"g", "s"})},
            {"R", {"C"}, {}, Cpt::deterministic(R, {C}, {"l", "r"})},
            {"T", {"F", "R"}, all, std::nullopt}};
  s.models = {m};
  s.queries = {
      {"P(T=l | R=l)", "M", q_assoc({{"T", "l"}}, {{"R", "l"}}), {}},
      {"P(T=r | R=r)", "M", q_assoc({{"T", "r"}}, {{"R", "r"}}), {}},
      {"P(T=l | do(R=l))", "M", q_do({{"T", "l"}}, {{"R", "l"}}), {}},
      {"P(T=r | do(R=r))", "M", q_do({{"T", "r"}}, {{"R", "r"}}), {}},
      {"P(T=l | do(F=g))", "M", q_do({{"T", "l"}}, {{"F", "g"}}), {}},
      {"P(T=r | do(F=s))", "M", q_do({{"T", "r"}}, {{"F", "s"}}), {}},
  };
  return s;
}

ExperimentSpec floor_memory() {
  ExperimentSpec s;
  s.name = "floor-memory";
  s.env = make_env_spec("floor-memory");
  s.columns = {single("a", "floor-memory/a"), single("b", "floor-memory/b")};
  auto F = var("F", {"g", "s"}), P = var("P", {"l", "r", "?"}, "?"), T = var("T", {"l", "r"});
  s.extractors = {feature(F, {{"rule", "floor-kind"}, {"t", 1}}),
                  feature(P, {{"rule", "midpoint-side"}, {"t", 3}}),
                  feature(T, {{"rule", "terminal-side"}})};
  s.regimes = {
      {"observational", json::array()},
      {"push", json::array({{{"kind", "mirror-entity"}, {"time", 3}, {"entity", "agent"}}})},
  };
  ModelPlan m;
  m.name = "M";
  m.structure = {{"F", {}}, {"P", {"F"}}, {"T", {"F", "P"}}};
  m.cpts = {{"F", {}, {"observational"}, std::nullopt},
            {"P", {"F"}, {"observational"}, std::nullopt},
            {"T", {"F", "P"}, {"observational", "push"}, std::nullopt}};
  s.models = {m};
  s.queries = {
      {"P(T=l | F=g)", "M", q_assoc({{"T", "l"}}, {{"F", "g"}}), {}},
      {"P(T=r | F=s)", "M", q_assoc({{"T", "r"}}, {{"F", "s"}}), {}},
      {"P(P=l | F=g)", "M", q_assoc({{"P", "l"}}, {{"F", "g"}}), {}},
      {"P(P=r | F=s)", "M", q_assoc({{"P", "r"}}, {{"F", "s"}}), {}},
      {"P(T=l | do(P=r), F=g)", "M", q_do({{"T", "l"}}, {{"P", "r"}}, {{"F", "g"}}), {}},
      {"P(T=r | do(P=l), F=s)", "M", q_do({{"T", "r"}}, {{"P", "l"}}, {{"F", "s"}}), {}},
  };
  return s;
}

ExperimentSpec pick_up() {
  ExperimentSpec s;
  s.name = "pick-up";
  s.env = make_env_spec("pick-up");
  s.columns = {single("A", "pick-up/A"), single("B", "pick-up/B")};
  auto G = var("G", {"n", "e", "s", "w"}), R = var("R", {"0", "1"});
  s.extractors = {feature(G, {{"rule", "quadrant-of"}, {"tile", "pill_plain"}, {"t", 1}}),
                  feature(R, {{"rule", "reward-collected"}})};
  s.regimes = {{"observational", json::array()}};
  std::vector<std::string> all = {"observational"};
  for (std::string q : {"n", "e", "w", "s"}) {
    s.regimes.push_back({"do(G=" + q + ")", json::array({{{"kind", "relocate-tile"},
                                                          {"time", 1},
                                                          {"tile", "pill_plain"},
                                                          {"quadrant", q}}})});
    all.push_back("do(G=" + q + ")");
  }
  ModelPlan m;
  m.name = "M";
  m.structure = {{"G", {}}, {"R", {"G"}}};
  m.cpts = {{"G", {}, {"observational"}, std::nullopt}, {"R", {"G"}, all, std::nullopt}};
  s.models = {m};
  s.queries = {{"P(R=1)", "M", q_assoc({{"R", "1"}}), {}}};
  for (std::string q : {"n", "e", "w", "s"})
    s.queries.push_back({"P(R=1 | do(G=" + q + "))", "M", q_do({{"R", "1"}}, {{"G", q}}), {}});
  return s;
}

ExperimentSpec gated_room() {
  ExperimentSpec s;
  s.name = "gated-room";
  s.env = make_env_spec("gated-room");
  s.columns = {{"P",
                {DataSource{{make_agent_spec("gated-room/red-lover")}, {{"A", "re"}}},
                 DataSource{{make_agent_spec("gated-room/green-lover")}, {{"A", "gr"}}}}}};
  auto D = var("D", {"l", "r"}), R = var("R", {"re", "gr"}), A = var("A", {"re", "gr"});
  s.extractors = {feature(D, {{"rule", "gate-side"}, {"t", 1}}), feature(R, {{"rule", "pill-color"}})};
  s.regimes = {{"observational", json::array()}};
  ModelPlan m;
  m.name = "M";
  m.structure = {{"A", {}}, {"D", {}}, {"R", {"A", "D"}}};
  m.latents = {{A, {0.5, 0.5}}};
  m.cpts = {{"D", {}, {}, Cpt::prior(D, {0.5, 0.5})}, {"R", {"A", "D"}, {"observational"}, std::nullopt}};
  s.models = {m};
  s.queries = {
      {"P(R=re)", "M", q_assoc({{"R", "re"}}), {}},
      {"P(A=re | R=re)", "M", q_assoc({{"A", "re"}}, {{"R", "re"}}), {}},
      {"P(A=re | D=l, R=re)", "M", q_assoc({{"A", "re"}}, {{"D", "l"}, {"R", "re"}}), {}},
      {"P(R_{D=r}=re | D=l, R=re)", "M", q_cf({{"R", "re"}}, {{"D", "r"}}, {{"D", "l"}, {"R", "re"}}), {}},
      {"P(R_{D=r}=gr | D=l, R=gr)", "M", q_cf({{"R", "gr"}}, {{"D", "r"}}, {{"D", "l"}, {"R", "gr"}}), {}},
  };
  return s;
}

ExperimentSpec mimic() {
  ExperimentSpec s;
  s.name = "mimic";
  s.env = make_env_spec("mimic");
  s.columns = {{"P", {DataSource{{make_agent_spec("mimic/leader"), make_agent_spec("mimic/imitator")}, {}}}}};
  s.horizon = 2;
  auto B = var("B", {"l", "r"}), R = var("R", {"l", "r"});
  s.extractors = {feature(B, {{"rule", "move-direction"}, {"entity", "blue"}, {"t", 1}}),
                  feature(R, {{"rule", "move-direction"}, {"entity", "red"}, {"t", 1}})};
  s.regimes = {{"observational", json::array()}};
  ModelPlan mb, mr;
  mb.name = "M_b";
  mb.structure = {{"B", {}}, {"R", {"B"}}};
  mb.cpts = {{"B", {}, {"observational"}, std::nullopt}, {"R", {"B"}, {"observational"}, std::nullopt}};
  mr.name = "M_r";
  mr.structure = {{"R", {}}, {"B", {"R"}}};
  mr.cpts = {{"R", {}, {"observational"}, std::nullopt}, {"B", {"R"}, {"observational"}, std::nullopt}};
  s.models = {mb, mr};
  s.hypotheses = {{"H", "L", {{"b", "M_b", 0.5}, {"r", "M_r", 0.5}}}};
  s.queries = {
      {"P(L=b)", "H", q_hyp({{"L", "b"}}, {}, {}), {}},
      {"P(L=b | R=l, B=l)", "H", q_hyp({{"L", "b"}}, {}, {{"R", "l"}, {"B", "l"}}), {}},
      {"P(L=b | R=l, B=r)", "H", q_hyp({{"L", "b"}}, {}, {{"R", "l"}, {"B", "r"}}), {}},
      {"P(L=b | do(R=l), B=l)", "H", q_hyp({{"L", "b"}}, {{"R", "l"}}, {{"B", "l"}}), {}},
      {"P(L=b | do(R=l), B=r)", "H", q_hyp({{"L", "b"}}, {{"R", "l"}}, {{"B", "r"}}), {}},
  };
  return s;
}

ExperimentSpec key_door() {
  ExperimentSpec s;
  s.name = "key-door";
  s.env = make_env_spec("key-door");
  s.columns = {single("A", "key-door/A"), single("B", "key-door/B")};
  auto D = var("D", {"o", "c"}), K = var("K", {"y", "n"}), R = var("R", {"0", "1"});
  s.extractors = {feature(D, {{"rule", "door-state"}, {"t", 1}}),
                  feature(K, {{"rule", "picked-up"}, {"item", "key"}}),
                  feature(R, {{"rule", "reward-collected"}})};
  s.regimes = {
      {"observational", json::array()},
      {"do(D=o)", json::array({edit(1, "/grid/3/6", "gate_open")})},
      {"do(D=c)", json::array({edit(1, "/grid/3/6", "gate_closed")})},
      {"do(K=y)", json::array({{{"kind", "grant-tile"}, {"time", 1}, {"tile", "key"}, {"entity", "agent"},
                                {"item", "key"}}})},
      {"do(K=n)", json::array({{{"kind", "remove-tile"}, {"time", 1}, {"tile", "key"}}})},
  };
  ModelPlan m;
  m.name = "M";
  m.structure = {{"D", {}}, {"K", {"D"}}, {"R", {"K", "D"}}};
  m.cpts = {{"D", {}, {"observational"}, std::nullopt},
            {"K", {"D"}, {"observational", "do(D=o)", "do(D=c)"}, std::nullopt},
            {"R", {"K", "D"}, {"observational", "do(D=o)", "do(D=c)", "do(K=y)", "do(K=n)"}, std::nullopt}};
  s.models = {m};
  s.queries = {
      {"P(R=1)", "M", q_assoc({{"R", "1"}}), {}},
      {"P(R=1 | K=y)", "M", q_assoc({{"R", "1"}}, {{"K", "y"}}), {}},
      {"P(R=1 | K=n)", "M", q_assoc({{"R", "1"}}, {{"K", "n"}}), {}},
      {"P(R=1 | do(K=y))", "M", q_do({{"R", "1"}}, {{"K", "y"}}), {}},
      {"P(R=1 | do(K=n))", "M", q_do({{"R", "1"}}, {{"K", "n"}}), {}},
      {"P(K=y | do(D=c))", "M", q_do({{"K", "y"}}, {{"D", "c"}}), {}},
      {"P(K=y | do(D=o))", "M", q_do({{"K", "y"}}, {{"D", "o"}}), {}},
      {"P(R=1 | D=c)", "M", q_assoc({{"R", "1"}}, {{"D", "c"}}), {}},
      {"P(R=1 | D=o)", "M", q_assoc({{"R", "1"}}, {{"D", "o"}}), {}},
      {"f(D=c)", "M", q_path({"D", "K", "R"}, {{"D", "c"}}, {{"R", "1"}}), {}},
      {"f(D=o)", "M", q_path({"D", "K", "R"}, {{"D", "o"}}, {{"R", "1"}}), {}},
      {"f(D=c) - f(D=o)", "", {}, std::make_pair(std::string("f(D=c)"), std::string("f(D=o)"))},
  };
  return s;
}

// ---- JSON ----


json source_to_json(const DataSource& d) {
  json agents = json::array();
  for (const auto& a : d.agents) agents.push_back(agent_spec_to_json(a));
  return {{"agents", agents}, {"constants", d.constants}};
}

}  // namespace

json model_plan_to_json(const ModelPlan& m) {
  json cpts = json::array();
  for (const auto& c : m.cpts) {
    json e = {{"child", c.child}, {"parents", c.parents}, {"regimes", c.regimes}};
    if (c.fixed) e["fixed"] = cpt_to_json(*c.fixed);
    cpts.push_back(e);
  }
  json latents = json::array();
  for (const auto& l : m.latents) latents.push_back({{"variable", l.variable}, {"prior", l.prior}});
  return {{"name", m.name}, {"structure", m.structure}, {"cpts", cpts}, {"latents", latents}};
}

ModelPlan model_plan_from_json(const json& j) {
  ModelPlan m;
  m.name = j.value("name", std::string("M"));
  m.structure = j.at("structure").get<std::map<std::string, std::vector<std::string>>>();
  for (const auto& c : j.at("cpts")) {
    CptPlan p;
    p.child = c.at("child").get<std::string>();
    p.parents = c.value("parents", std::vector<std::string>{});
    p.regimes = c.value("regimes", std::vector<std::string>{});
    if (c.contains("fixed")) p.fixed = cpt_from_json(c["fixed"]);
    m.cpts.push_back(std::move(p));
  }
  for (const auto& l : j.value("latents", json::array()))
    m.latents.push_back({l.at("variable").get<VariableDef>(), l.at("prior").get<std::vector<double>>()});
  return m;
}

ScmModel build_model(const ModelPlan& plan, const RolloutTree& tree) {
  std::vector<Cpt> cpts;
  for (const auto& c : plan.cpts) cpts.push_back(c.fixed ? *c.fixed : estimate_cpt(tree, c.child, c.parents, c.regimes));
  return assemble_model(cpts, plan.structure, plan.latents);
}

json experiment_to_json(const ExperimentSpec& spec) {
  json columns = json::array();
  for (const auto& c : spec.columns) {
    json sources = json::array();
    for (const auto& d : c.sources) sources.push_back(source_to_json(d));
    columns.push_back({{"label", c.label}, {"sources", sources}});
  }
  json regimes = json::array(), extractors = json::array(), models = json::array(), hyps = json::array(),
       queries = json::array();
  for (const auto& r : spec.regimes) regimes.push_back(regime_to_json(r));
  for (const auto& e : spec.extractors) extractors.push_back(extractor_to_json(e));
  for (const auto& m : spec.models) models.push_back(model_plan_to_json(m));
  for (const auto& h : spec.hypotheses) {
    json entries = json::array();
    for (const auto& e : h.entries) entries.push_back({{"label", e.label}, {"model", e.model}, {"prior", e.prior}});
    hyps.push_back({{"name", h.name}, {"variable", h.variable}, {"entries", entries}});
  }
  for (const auto& q : spec.queries) {
    json e = {{"label", q.label}};
    if (q.difference) {
      e["difference"] = {q.difference->first, q.difference->second};
    } else {
      e["model"] = q.model;
      e["query"] = query_to_json(q.query);
    }
    queries.push_back(e);
  }
  return {{"name", spec.name},         {"env", env_spec_to_json(spec.env)},
          {"columns", columns},        {"rollouts", spec.rollouts},
          {"horizon", spec.horizon},   {"alpha", spec.alpha},
          {"regimes", regimes},        {"extractors", extractors},
          {"models", models},          {"hypotheses", hyps},
          {"queries", queries}};
}

ExperimentSpec experiment_from_json(const json& j) {
  try {
    ExperimentSpec s;
    s.name = j.at("name").get<std::string>();
    s.env = env_spec_from_json(j.at("env"));
    for (const auto& c : j.at("columns")) {
      Column col{c.at("label").get<std::string>(), {}};
      for (const auto& d : c.at("sources")) {
        DataSource src;
        for (const auto& a : d.at("agents")) src.agents.push_back(agent_spec_from_json(a));
        src.constants = d.value("constants", std::map<std::string, std::string>{});
        col.sources.push_back(std::move(src));
      }
      s.columns.push_back(std::move(col));
    }
    s.rollouts = j.value("rollouts", 1000L);
    s.horizon = j.value("horizon", 0);
    s.alpha = j.value("alpha", 1.0);
    for (const auto& r : j.at("regimes")) s.regimes.push_back(regime_from_json(r));
    for (const auto& e : j.at("extractors")) s.extractors.push_back(extractor_from_json(e));
    for (const auto& m : j.at("models")) s.models.push_back(model_plan_from_json(m));
    for (const auto& h : j.value("hypotheses", json::array())) {
      HypothesisPlan p{h.at("name").get<std::string>(), h.at("variable").get<std::string>(), {}};
      for (const auto& e : h.at("entries"))
        p.entries.push_back({e.at("label").get<std::string>(), e.at("model").get<std::string>(),
                             e.at("prior").get<double>()});
      s.hypotheses.push_back(std::move(p));
    }
    for (const auto& q : j.at("queries")) {
      QueryRow row;
      row.label = q.at("label").get<std::string>();
      if (q.contains("difference")) {
        row.difference = {q["difference"].at(0).get<std::string>(), q["difference"].at(1).get<std::string>()};
      } else {
        row.model = q.at("model").get<std::string>();
        row.query = query_from_json(q.at("query"));
      }
      s.queries.push_back(std::move(row));
    }
    return s;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed experiment spec: ") + e.what());
  }
}

const std::vector<std::string>& experiment_names() {
  static const std::vector<std::string> names = {"grass-sand", "floor-memory", "pick-up",
                                                 "gated-room", "mimic",        "key-door"};
  return names;
}

ExperimentSpec make_experiment(const std::string& name) {
  if (name == "grass-sand") return grass_sand();
  if (name == "floor-memory") return floor_memory();
  if (name == "pick-up") return pick_up();
  if (name == "gated-room") return gated_room();
  if (name == "mimic") return mimic();
  if (name == "key-door") return key_door();
  throw ConfigError("unknown experiment '" + name + "'");
}

// ---- tables ----

std::optional<std::size_t> QueryTable::row(const std::string& label) const {
  auto it = std::find(labels.begin(), labels.end(), label);
  if (it == labels.end()) return std::nullopt;
  return static_cast<std::size_t>(it - labels.begin());
}

std::optional<std::size_t> QueryTable::column(const std::string& label) const {
  auto it = std::find(columns.begin(), columns.end(), label);
  if (it == columns.end()) return std::nullopt;
  return static_cast<std::size_t>(it - columns.begin());
}

double QueryTable::at(const std::string& r, const std::string& c) const {
  auto ri = row(r);
  auto ci = column(c);
  if (!ri || !ci) throw ConfigError("table " + experiment + " has no cell (" + r + ", " + c + ")");
  return values[*ri][*ci];
}

json table_to_json(const QueryTable& t) {
  json rows = json::array();
  for (std::size_t i = 0; i < t.labels.size(); ++i) rows.push_back({{"label", t.labels[i]}, {"values", t.values[i]}});
  return {{"experiment", t.experiment}, {"columns", t.columns}, {"rows", rows}, {"metadata", t.metadata}};
}

QueryTable table_from_json(const json& j) {
  try {
    QueryTable t;
    t.experiment = j.at("experiment").get<std::string>();
    t.columns = j.at("columns").get<std::vector<std::string>>();
    for (const auto& r : j.at("rows")) {
      t.labels.push_back(r.at("label").get<std::string>());
      std::vector<double> vals;
      for (const auto& v : r.at("values")) vals.push_back(v.is_null() ? std::nan("") : v.get<double>());
      if (vals.size() != t.columns.size()) throw ConfigError("row " + t.labels.back() + " has the wrong width");
      t.values.push_back(std::move(vals));
    }
    t.metadata = j.value("metadata", json::object());
    return t;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed query table: ") + e.what());
  }
}

std::string table_to_text(const QueryTable& t) {
  std::size_t w = 7;
  for (const auto& l : t.labels) w = std::max(w, l.size());
  std::ostringstream os;
  char buf[64];
  os << t.experiment << "\n";
  std::snprintf(buf, sizeof buf, "%-*s", static_cast<int>(w), "Queries");
  os << buf;
  for (const auto& c : t.columns) {
    std::snprintf(buf, sizeof buf, "  %8s", c.c_str());
    os << buf;
  }
  os << "\n" << std::string(w + 10 * t.columns.size(), '-') << "\n";
  for (std::size_t i = 0; i < t.labels.size(); ++i) {
    os << t.labels[i] << std::string(w - t.labels[i].size(), ' ');
    for (double v : t.values[i]) {
      std::snprintf(buf, sizeof buf, "  %8.4f", v);
      os << buf;
    }
    os << "\n";
  }
  if (t.metadata.contains("n")) os << "n=" << t.metadata["n"].dump() << " seed=" << t.metadata.value("seed", json()).dump()
                                   << " config=" << t.metadata.value("config_hash", std::string()) << "\n";
  return os.str();
}

// ---- running ----

ColumnModels build_column(const ExperimentSpec& spec, std::size_t column, const Seed& master) {
  const auto& col = spec.columns.at(column);
  CollectOptions opt;
  opt.n = spec.rollouts;
  opt.horizon = spec.horizon;
  opt.alpha = spec.alpha;

  ColumnModels out;
  bool first = true;
  for (std::size_t si = 0; si < col.sources.size(); ++si) {
    const auto& src = col.sources[si];
    auto extractors = spec.extractors;
    for (const auto& [name, value] : src.constants) {
      VariableDef v;
      bool found = false;
      for (const auto& m : spec.models)
        for (const auto& l : m.latents)
          if (l.variable.name == name) {
            v = l.variable;
            found = true;
          }
      if (!found) throw ConfigError("constant feature " + name + " has no declared latent variable");
      extractors.push_back({name, v, {{"rule", "constant"}, {"value", value}}});
    }
    auto system = make_system(spec.env, src.agents);
    auto tree = collect(system, spec.regimes, extractors, master.child({column, si}), opt);
    if (first) {
      out.tree = std::move(tree);
      first = false;
    } else {
      out.tree.merge(tree);
    }
  }

  for (const auto& plan : spec.models) out.models.emplace(plan.name, build_model(plan, out.tree));
  for (const auto& hp : spec.hypotheses) {
    Hypotheses h;
    h.variable = hp.variable;
    for (const auto& e : hp.entries) {
      auto it = out.models.find(e.model);
      if (it == out.models.end()) throw ConfigError("hypothesis " + e.label + " names unknown model " + e.model);
      h.entries.push_back({e.label, it->second, e.prior});
    }
    out.hypotheses.emplace(hp.name, std::move(h));
  }
  return out;
}

QueryTable run_experiment(const ExperimentSpec& spec, const Seed& master) {
  QueryTable t;
  t.experiment = spec.name;
  for (const auto& c : spec.columns) t.columns.push_back(c.label);
  std::set<std::string> seen;
  for (const auto& q : spec.queries) {
    if (!seen.insert(q.label).second) throw ConfigError("duplicate row label " + q.label);
    t.labels.push_back(q.label);
  }
  t.values.assign(spec.queries.size(), std::vector<double>(spec.columns.size(), 0.0));

  for (std::size_t c = 0; c < spec.columns.size(); ++c) {
    auto built = build_column(spec, c, master);
    for (std::size_t r = 0; r < spec.queries.size(); ++r) {
      const auto& q = spec.queries[r];
      double v;
      if (q.difference) {
        auto a = t.row(q.difference->first);
        auto b = t.row(q.difference->second);
        if (!a || !b || *a >= r || *b >= r) throw ConfigError("difference row " + q.label + " must follow its operands");
        v = t.values[*a][c] - t.values[*b][c];
      } else if (auto m = built.models.find(q.model); m != built.models.end()) {
        v = run_query(m->second, q.query).probability;
      } else if (auto h = built.hypotheses.find(q.model); h != built.hypotheses.end()) {
        v = run_query(h->second, q.query).probability;
      } else {
        throw ConfigError("row " + q.label + " names unknown model " + q.model);
      }
      t.values[r][c] = v;
    }
  }
  t.metadata = {{"n", spec.rollouts},
                {"seed", master},
                {"alpha", spec.alpha},
                {"config_hash", hex64(fnv1a(experiment_to_json(spec).dump()))}};
  return t;
}

QueryTable run_experiment(const std::string& name, long rollouts, std::uint64_t seed) {
  auto spec = make_experiment(name);
  spec.rollouts = rollouts;
  return run_experiment(spec, Seed(seed));
}

// ---- diffing ----

bool DiffReport::pass() const {
  if (!ordering_failures.empty()) return false;
  return std::all_of(cells.begin(), cells.end(), [](const DiffCell& c) { return c.pass; });
}

std::string DiffReport::to_text() const {
  std::ostringstream os;
  char buf[256];
  for (const auto& c : cells) {
    if (!c.tolerance) {
      std::snprintf(buf, sizeof buf, "SKIP  %-12s %-32s %-4s actual=%.4f\n", c.experiment.c_str(), c.row.c_str(),
                    c.column.c_str(), c.actual);
    } else {
      std::snprintf(buf, sizeof buf, "%s  %-12s %-32s %-4s actual=%.4f ref=%.4f tol=%.3f\n", c.pass ? "PASS" : "FAIL",
                    c.experiment.c_str(), c.row.c_str(), c.column.c_str(), c.actual, *c.reference, *c.tolerance);
    }
    os << buf;
  }
  for (const auto& o : orderings_checked) os << "PASS  ordering " << o << "\n";
  for (const auto& o : ordering_failures) os << "FAIL  ordering " << o << "\n";
  return os.str();
}

DiffReport diff_tables(const QueryTable& actual, const QueryTable& reference, const json& tolerances) {
  if (actual.labels != reference.labels)
    throw ConfigError("row labels of " + actual.experiment + " do not match the reference");
  if (actual.columns != reference.columns)
    throw ConfigError("columns of " + actual.experiment + " do not match the reference");
  const json none = json::object();
  const json& exp = tolerances.contains("experiments") && tolerances["experiments"].contains(reference.experiment)
                        ? tolerances["experiments"][reference.experiment]
                        : none;
  const double base = exp.value("default", tolerances.value("default", 0.05));
  const json cells = exp.value("cells", json::object());

  DiffReport rep;
  for (std::size_t r = 0; r < actual.labels.size(); ++r)
    for (std::size_t c = 0; c < actual.columns.size(); ++c) {
      DiffCell d{reference.experiment, actual.labels[r], actual.columns[c], actual.values[r][c], std::nullopt,
                 base, true};
      if (cells.contains(d.row) && cells[d.row].contains(d.column)) {
        const auto& spec = cells[d.row][d.column];
        if (spec.is_string() && spec.get<std::string>() == "skip") d.tolerance.reset();
        else d.tolerance = spec.get<double>();
      }
      double ref = reference.values[r][c];
      if (std::isnan(ref)) d.tolerance.reset();
      if (d.tolerance) {
        d.reference = ref;
        d.pass = std::abs(d.actual - ref) <= *d.tolerance + 1e-12;
      }
      rep.cells.push_back(d);
    }
  for (const auto& o : exp.value("orderings", json::array())) {
    auto col = o.at("column").get<std::string>();
    auto chain = o.at("increasing").get<std::vector<std::string>>();
    std::string desc = reference.experiment + " [" + col + "]";
    bool ok = true;
    for (std::size_t i = 0; i < chain.size(); ++i) {
      desc += (i ? " < " : " ") + chain[i];
      if (i > 0 && !(actual.at(chain[i - 1], col) < actual.at(chain[i], col))) ok = false;
    }
    (ok ? rep.orderings_checked : rep.ordering_failures).push_back(desc);
  }
  return rep;
}

}  // namespace acw
