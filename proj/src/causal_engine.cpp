#include "acw/causal_engine.hpp"

#include <cmath>
#include <functional>
#include <set>

#include "acw/errors.hpp"

namespace acw {

ScmModel::ScmModel(std::vector<Cpt> cpts, std::vector<std::string> latent) : cpts_(std::move(cpts)) {
  for (std::size_t i = 0; i < cpts_.size(); ++i) {
    const auto& v = cpts_[i].child;
    if (!index_.emplace(v.name, i).second) throw ModelError("variable " + v.name + " has more than one cpt");
    vars_.push_back(v);
  }
  parents_.resize(vars_.size());
  for (std::size_t i = 0; i < cpts_.size(); ++i) {
    const auto& c = cpts_[i];
    std::set<std::string> seen;
    for (const auto& p : c.parents) {
      auto it = index_.find(p.name);
      if (it == index_.end()) throw ModelError("parent " + p.name + " of " + c.child.name + " has no cpt");
      if (!(vars_[it->second].domain == p.domain))
        throw ModelError("parent " + p.name + " of " + c.child.name + ": domain mismatch");
      if (!seen.insert(p.name).second) throw ModelError("duplicate parent " + p.name + " of " + c.child.name);
      parents_[i].push_back(it->second);
    }
    if (!c.normalized(1e-9)) throw ModelError("cpt for " + c.child.name + " is not normalized");
  }
  latent_.assign(vars_.size(), false);
  for (const auto& l : latent) latent_[index(l)] = true;

  std::vector<int> indeg(vars_.size(), 0);
  std::vector<std::vector<std::size_t>> children(vars_.size());
  for (std::size_t i = 0; i < vars_.size(); ++i)
    for (auto p : parents_[i]) {
      ++indeg[i];
      children[p].push_back(i);
    }
  std::vector<bool> done(vars_.size(), false);
  while (topo_.size() < vars_.size()) {
    bool progressed = false;
    for (std::size_t i = 0; i < vars_.size(); ++i) {
      if (done[i] || indeg[i] != 0) continue;
      done[i] = true;
      topo_.push_back(i);
      for (auto ch : children[i]) --indeg[ch];
      progressed = true;
      break;
    }
    if (!progressed) throw ModelError("model structure is cyclic");
  }
}

std::size_t ScmModel::index(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw ModelError("unknown variable " + name);
  return it->second;
}

const VariableDef& ScmModel::variable(const std::string& name) const { return vars_[index(name)]; }
const Cpt& ScmModel::cpt(const std::string& name) const { return cpts_[index(name)]; }
bool ScmModel::is_latent(const std::string& name) const { return latent_[index(name)]; }

std::vector<std::string> ScmModel::latent_names() const {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < vars_.size(); ++i)
    if (latent_[i]) out.push_back(vars_[i].name);
  return out;
}

bool ScmModel::has_edge(const std::string& from, const std::string& to) const {
  auto f = index(from);
  for (auto p : parents_[index(to)])
    if (p == f) return true;
  return false;
}

ScmModel ScmModel::mutilate(const Assignment& interventions) const {
  auto cpts = cpts_;
  for (const auto& [name, value] : interventions) {
    auto i = index(name);
    std::vector<double> point(vars_[i].size(), 0.0);
    point[vars_[i].index_of(value)] = 1.0;
    cpts[i] = Cpt::prior(vars_[i], std::move(point));
  }
  return ScmModel(std::move(cpts), latent_names());
}

double ScmModel::joint(const std::vector<std::size_t>& values) const {
  double p = 1.0;
  std::vector<std::size_t> pv;
  for (std::size_t i = 0; i < vars_.size(); ++i) {
    pv.clear();
    for (auto q : parents_[i]) pv.push_back(values[q]);
    p *= cpts_[i].p(cpts_[i].row_of(pv), values[i]);
    if (p == 0.0) break;
  }
  return p;
}

nlohmann::json model_to_json(const ScmModel& m) {
  nlohmann::json vars = nlohmann::json::array(), dag = nlohmann::json::object(),
                 cpts = nlohmann::json::object();
  for (const auto& v : m.variables()) {
    vars.push_back(v);
    const auto& c = m.cpt(v.name);
    nlohmann::json ps = nlohmann::json::array();
    for (const auto& p : c.parents) ps.push_back(p.name);
    dag[v.name] = ps;
    nlohmann::json rows = nlohmann::json::array();
    for (std::size_t r = 0; r < c.rows(); ++r) rows.push_back(c.row(r));
    cpts[v.name] = rows;
  }
  return {{"variables", vars}, {"dag", dag}, {"cpts", cpts}, {"latent", m.latent_names()}};
}

ScmModel model_from_json(const nlohmann::json& j) {
  try {
    std::map<std::string, VariableDef> defs;
    std::vector<std::string> order;
    for (const auto& v : j.at("variables")) {
      auto d = v.get<VariableDef>();
      order.push_back(d.name);
      defs[d.name] = d;
    }
    std::vector<Cpt> cpts;
    for (const auto& name : order) {
      std::vector<VariableDef> parents;
      if (j.contains("dag") && j["dag"].contains(name))
        for (const auto& p : j["dag"][name]) {
          auto it = defs.find(p.get<std::string>());
          if (it == defs.end()) throw ModelError("unknown parent " + p.get<std::string>());
          parents.push_back(it->second);
        }
      std::vector<double> table;
      for (const auto& row : j.at("cpts").at(name))
        for (const auto& x : row) table.push_back(x.get<double>());
      cpts.emplace_back(defs[name], std::move(parents), std::move(table));
    }
    std::vector<std::string> latent;
    if (j.contains("latent")) latent = j["latent"].get<std::vector<std::string>>();
    return ScmModel(std::move(cpts), std::move(latent));
  } catch (const nlohmann::json::exception& e) {
    throw ModelError(std::string("malformed model: ") + e.what());
  }
}

namespace {

const std::map<Query::Level, std::string> kLevelNames = {
    {Query::Level::associational, "associational"},
    {Query::Level::interventional, "interventional"},
    {Query::Level::counterfactual, "counterfactual"},
    {Query::Level::path_response, "path-response"},
    {Query::Level::hypothesis_posterior, "hypothesis-posterior"},
};

Assignment assignment_from(const nlohmann::json& j, const char* key) {
  if (!j.contains(key) || j[key].is_null()) return {};
  if (!j[key].is_object()) throw ModelError(std::string("query field '") + key + "' must be an object");
  Assignment a;
  for (const auto& [k, v] : j[key].items()) {
    if (!v.is_string()) throw ModelError(std::string("query field '") + key + "' values must be strings");
    a[k] = v.get<std::string>();
  }
  return a;
}

using Indexed = std::vector<std::pair<std::size_t, std::size_t>>;

Indexed resolve(const ScmModel& m, const Assignment& a) {
  Indexed out;
  for (const auto& [k, v] : a) {
    auto i = m.index(k);
    out.emplace_back(i, m.variables()[i].index_of(v));
  }
  return out;
}

bool matches(const std::vector<std::size_t>& x, const Indexed& a) {
  for (const auto& [i, v] : a)
    if (x[i] != v) return false;
  return true;
}

void require_disjoint(const Assignment& a, const Assignment& b) {
  for (const auto& [k, _] : a)
    if (b.count(k)) throw ModelError("variable " + k + " appears in both intervention and evidence");
}

// Calls f(values, p) for every full assignment with non-zero probability.
void enumerate(const ScmModel& m, const std::function<void(const std::vector<std::size_t>&, double)>& f) {
  const auto& vars = m.variables();
  std::vector<std::size_t> x(vars.size(), 0);
  while (true) {
    double p = m.joint(x);
    if (p > 0) f(x, p);
    std::size_t i = 0;
    for (; i < x.size(); ++i) {
      if (++x[i] < vars[i].size()) break;
      x[i] = 0;
    }
    if (i == x.size()) return;
  }
}

}  // namespace

Query query_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ModelError("query must be an object");
  Query q;
  auto level = j.value("level", std::string("associational"));
  bool found = false;
  for (const auto& [l, name] : kLevelNames)
    if (name == level) {
      q.level = l;
      found = true;
    }
  if (!found) throw ModelError("unknown query level '" + level + "'");
  q.target = assignment_from(j, "target");
  q.intervention = assignment_from(j, "do");
  q.evidence = assignment_from(j, "evidence");
  if (j.contains("path")) {
    if (!j["path"].is_array()) throw ModelError("query path must be an array");
    q.path = j["path"].get<std::vector<std::string>>();
  }
  if (q.target.empty()) throw ModelError("query target must be non-empty");
  return q;
}

nlohmann::json query_to_json(const Query& q) {
  nlohmann::json j = {{"level", kLevelNames.at(q.level)},
                      {"target", q.target},
                      {"do", q.intervention},
                      {"evidence", q.evidence}};
  if (!q.path.empty()) j["path"] = q.path;
  return j;
}

nlohmann::json result_to_json(const QueryResult& r) {
  return {{"probability", r.probability}, {"method", r.method}, {"support", r.support}};
}

QueryResult query_assoc(const ScmModel& model, const Assignment& target, const Assignment& evidence) {
  auto t = resolve(model, target);
  auto e = resolve(model, evidence);
  double pe = 0, pte = 0;
  enumerate(model, [&](const std::vector<std::size_t>& x, double p) {
    if (!matches(x, e)) return;
    pe += p;
    if (matches(x, t)) pte += p;
  });
  if (pe <= 0) throw ConditioningError("evidence has zero probability under the model");
  return {std::clamp(pte / pe, 0.0, 1.0), "enumeration", "exact"};
}

QueryResult query_do(const ScmModel& model, const Assignment& target, const Assignment& intervention,
                     const Assignment& evidence) {
  require_disjoint(intervention, evidence);
  resolve(model, target);
  auto r = query_assoc(model.mutilate(intervention), target, evidence);
  return r;
}

QueryResult query_counterfactual(const ScmModel& model, const Assignment& target,
                                 const Assignment& antecedent, const Assignment& evidence) {
  auto t = resolve(model, target);
  auto e = resolve(model, evidence);
  auto a = resolve(model, antecedent);
  const auto& vars = model.variables();
  const auto& order = model.topo_order();
  std::vector<std::optional<std::size_t>> forced(vars.size());
  for (const auto& [i, v] : a) forced[i] = v;
  std::vector<std::optional<std::size_t>> observed(vars.size());
  for (const auto& [i, v] : e) observed[i] = v;

  std::vector<std::size_t> f(vars.size()), c(vars.size());
  double pe = 0, pte = 0;
  std::vector<std::size_t> fp, cp;

  std::function<void(std::size_t, double)> dfs = [&](std::size_t k, double w) {
    if (k == order.size()) {
      pe += w;
      if (matches(c, t)) pte += w;
      return;
    }
    auto i = order[k];
    const auto& cpt = model.cpt(vars[i].name);
    fp.clear();
    cp.clear();
    for (auto q : model.parents(i)) {
      fp.push_back(f[q]);
      cp.push_back(c[q]);
    }
    auto rf = cpt.row_of(fp);
    auto rc = cpt.row_of(cp);
    for (std::size_t vf = 0; vf < vars[i].size(); ++vf) {
      if (observed[i] && *observed[i] != vf) continue;
      double pf = cpt.p(rf, vf);
      if (pf == 0) continue;
      f[i] = vf;
      if (forced[i]) {
        c[i] = *forced[i];
        dfs(k + 1, w * pf);
      } else if (rf == rc) {
        c[i] = vf;
        dfs(k + 1, w * pf);
      } else {
        for (std::size_t vc = 0; vc < vars[i].size(); ++vc) {
          double pc = cpt.p(rc, vc);
          if (pc == 0) continue;
          c[i] = vc;
          dfs(k + 1, w * pf * pc);
        }
      }
    }
  };
  dfs(0, 1.0);
  if (pe <= 0) throw ConditioningError("evidence has zero probability under the model");
  return {std::clamp(pte / pe, 0.0, 1.0), "twin-world", "row-wise threshold noise; parameterization-dependent"};
}

QueryResult path_response(const ScmModel& model, const std::vector<std::string>& chain,
                          const Assignment& setting, const Assignment& target) {
  if (chain.size() < 2) throw ModelError("path needs at least two variables");
  for (std::size_t i = 0; i + 1 < chain.size(); ++i)
    if (!model.has_edge(chain[i], chain[i + 1]))
      throw ModelError("path is not directed: no edge " + chain[i] + " -> " + chain[i + 1]);
  if (setting.size() != 1 || !setting.count(chain.front()))
    throw ModelError("path setting must assign exactly the first path variable");
  if (target.size() != 1 || !target.count(chain.back()))
    throw ModelError("path target must assign exactly the last path variable");

  const auto& first = model.variable(chain.front());
  std::vector<double> dist(first.size(), 0.0);
  dist[first.index_of(setting.at(chain.front()))] = 1.0;
  for (std::size_t i = 0; i + 1 < chain.size(); ++i) {
    const auto& from = model.variable(chain[i]);
    const auto& to = model.variable(chain[i + 1]);
    std::vector<double> next(to.size(), 0.0);
    for (std::size_t u = 0; u < from.size(); ++u) {
      if (dist[u] == 0) continue;
      for (std::size_t v = 0; v < to.size(); ++v)
        next[v] += dist[u] *
                   query_do(model, {{to.name, to.domain[v]}}, {{from.name, from.domain[u]}}, {}).probability;
    }
    dist = std::move(next);
  }
  const auto& last = model.variable(chain.back());
  return {std::clamp(dist[last.index_of(target.at(chain.back()))], 0.0, 1.0), "chained-enumeration", "exact"};
}

nlohmann::json hypotheses_to_json(const Hypotheses& h) {
  nlohmann::json entries = nlohmann::json::array();
  for (const auto& e : h.entries)
    entries.push_back({{"label", e.label}, {"prior", e.prior}, {"model", model_to_json(e.model)}});
  return {{"variable", h.variable}, {"hypotheses", entries}};
}

Hypotheses hypotheses_from_json(const nlohmann::json& j) {
  try {
    Hypotheses h;
    h.variable = j.at("variable").get<std::string>();
    for (const auto& e : j.at("hypotheses"))
      h.entries.push_back({e.at("label").get<std::string>(), model_from_json(e.at("model")),
                           e.at("prior").get<double>()});
    if (h.entries.size() < 2) throw ModelError("need at least two hypotheses");
    return h;
  } catch (const nlohmann::json::exception& e) {
    throw ModelError(std::string("malformed hypotheses: ") + e.what());
  }
}

std::map<std::string, double> hypothesis_posterior(const Hypotheses& h, const Assignment& intervention,
                                                   const Assignment& evidence) {
  require_disjoint(intervention, evidence);
  double total_prior = 0;
  for (const auto& e : h.entries) {
    if (e.prior < 0) throw ModelError("negative hypothesis prior");
    total_prior += e.prior;
  }
  if (std::abs(total_prior - 1.0) > 1e-9) throw ModelError("hypothesis priors must sum to 1");

  std::vector<double> w;
  double z = 0;
  for (const auto& e : h.entries) {
    auto m = e.model.mutilate(intervention);
    auto ev = resolve(m, evidence);
    double lik = 0;
    enumerate(m, [&](const std::vector<std::size_t>& x, double p) {
      if (matches(x, ev)) lik += p;
    });
    w.push_back(e.prior * lik);
    z += w.back();
  }
  if (z <= 0) throw ConditioningError("evidence has zero likelihood under every hypothesis");
  std::map<std::string, double> out;
  for (std::size_t i = 0; i < h.entries.size(); ++i) out[h.entries[i].label] = w[i] / z;
  return out;
}

QueryResult run_query(const ScmModel& model, const Query& q) {
  switch (q.level) {
    case Query::Level::associational:
      if (!q.intervention.empty()) throw ModelError("associational query cannot carry an intervention");
      return query_assoc(model, q.target, q.evidence);
    case Query::Level::interventional:
      return query_do(model, q.target, q.intervention, q.evidence);
    case Query::Level::counterfactual:
      if (q.intervention.empty()) throw ModelError("counterfactual query needs an antecedent");
      return query_counterfactual(model, q.target, q.intervention, q.evidence);
    case Query::Level::path_response:
      if (!q.evidence.empty()) throw ModelError("path responses take no evidence");
      return path_response(model, q.path, q.intervention, q.target);
    case Query::Level::hypothesis_posterior:
      break;
  }
  throw ModelError("hypothesis-posterior queries need a hypothesis set");
}

QueryResult run_query(const Hypotheses& h, const Query& q) {
  if (q.level != Query::Level::hypothesis_posterior)
    throw ModelError("hypothesis sets only answer hypothesis-posterior queries");
  if (q.target.size() != 1 || q.target.begin()->first != h.variable)
    throw ModelError("target must name the hypothesis variable " + h.variable);
  auto post = hypothesis_posterior(h, q.intervention, q.evidence);
  auto it = post.find(q.target.begin()->second);
  if (it == post.end()) throw ModelError("unknown hypothesis '" + q.target.begin()->second + "'");
  return {std::clamp(it->second, 0.0, 1.0), "bayes", "exact"};
}

}  // namespace acw
