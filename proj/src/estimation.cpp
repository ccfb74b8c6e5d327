#include "acw/estimation.hpp"

#include <exception>
#include <set>

#include <omp.h>

#include "acw/errors.hpp"

namespace acw {

namespace {

constexpr std::uint64_t kRoleRegime = 9;

std::string side_of(int col, int center) {
  if (col < center) return "l";
  if (col > center) return "r";
  return {};
}

std::string entity_of(const nlohmann::json& rule, const Trace& trace) {
  if (rule.contains("entity")) return rule["entity"].get<std::string>();
  if (trace.system.bindings.empty()) throw EstimationError("trace has no entities");
  return trace.system.bindings.front().first;
}

const StepRecord* step_at(const nlohmann::json& rule, const Trace& trace, int fallback) {
  int t = rule.value("t", fallback);
  if (t < 1 || t > trace.length()) return nullptr;
  return &trace.at(t);
}

std::optional<Position> find_tile(const Grid& g, const std::set<TileKind>& kinds) {
  for (int r = 0; r < g.rows(); ++r)
    for (int c = 0; c < g.cols(); ++c)
      if (kinds.count(g.at({r, c}))) return Position{r, c};
  return std::nullopt;
}

std::set<TileKind> pill_kinds() {
  return {TileKind::pill_red, TileKind::pill_green, TileKind::pill_plain};
}

std::string short_action(Action a) {
  switch (a) {
    case Action::up: return "u";
    case Action::down: return "d";
    case Action::left: return "l";
    case Action::right: return "r";
    case Action::noop: return "n";
  }
  return "n";
}

}  // namespace

std::optional<std::string> evaluate_rule(const nlohmann::json& rule, const Trace& trace) {
  if (!rule.is_object() || !rule.contains("rule")) throw EstimationError("extractor rule needs a 'rule' field");
  if (trace.steps.empty()) return std::nullopt;
  const auto kind = rule["rule"].get<std::string>();
  const auto& last = trace.steps.back().world;

  if (kind == "constant") return rule.at("value").get<std::string>();

  if (kind == "terminal-side") {
    if (!last.terminated || last.timed_out) return std::nullopt;
    auto it = last.entities.find(entity_of(rule, trace));
    if (it == last.entities.end()) return std::nullopt;
    auto s = side_of(it->second.col, last.grid.cols() / 2);
    if (s.empty()) return std::nullopt;
    return s;
  }
  if (kind == "midpoint-side") {
    const auto* st = step_at(rule, trace, 3);
    if (!st) return std::nullopt;
    auto it = st->world.entities.find(entity_of(rule, trace));
    if (it == st->world.entities.end()) return std::nullopt;
    auto s = side_of(it->second.col, st->world.grid.cols() / 2);
    if (s.empty()) return std::nullopt;
    return s;
  }
  if (kind == "floor-kind") {
    const auto* st = step_at(rule, trace, 1);
    if (!st) return std::nullopt;
    auto p = find_tile(st->world.grid, {TileKind::grass, TileKind::sand});
    if (!p) return std::nullopt;
    return st->world.grid.at(*p) == TileKind::grass ? "g" : "s";
  }
  if (kind == "pill-side") {
    const auto* st = step_at(rule, trace, 1);
    if (!st) return std::nullopt;
    auto p = find_tile(st->world.grid, pill_kinds());
    if (!p) return std::nullopt;
    auto s = side_of(p->col, st->world.grid.cols() / 2);
    if (s.empty()) return std::nullopt;
    return s;
  }
  if (kind == "quadrant-of") {
    const auto* st = step_at(rule, trace, 1);
    if (!st) return std::nullopt;
    auto tile = tile_from_name(rule.value("tile", std::string("pill_plain")));
    auto p = find_tile(st->world.grid, {tile});
    if (!p) return std::nullopt;
    auto q = pickup_quadrant(*p);
    if (!q) return std::nullopt;
    return std::string(1, *q);
  }
  if (kind == "gate-side") {
    const auto* st = step_at(rule, trace, 1);
    if (!st) return std::nullopt;
    auto p = find_tile(st->world.grid, {TileKind::gate_open});
    if (!p) return std::nullopt;
    auto s = side_of(p->col, st->world.grid.cols() / 2);
    if (s.empty()) return std::nullopt;
    return s;
  }
  if (kind == "door-state") {
    const auto* st = step_at(rule, trace, 1);
    if (!st) return std::nullopt;
    if (find_tile(st->world.grid, {TileKind::gate_open})) return "o";
    if (find_tile(st->world.grid, {TileKind::gate_closed})) return "c";
    return std::nullopt;
  }
  if (kind == "picked-up") {
    auto it = last.inventory.find(entity_of(rule, trace));
    bool has = it != last.inventory.end() && it->second.count(rule.at("item").get<std::string>());
    return has ? "y" : "n";
  }
  if (kind == "pill-color") {
    auto it = last.inventory.find(entity_of(rule, trace));
    if (it == last.inventory.end()) return std::nullopt;
    if (it->second.count("pill:red")) return "re";
    if (it->second.count("pill:green")) return "gr";
    return std::nullopt;
  }
  if (kind == "reward-collected") {
    auto it = last.inventory.find(entity_of(rule, trace));
    if (it != last.inventory.end())
      for (const auto& item : it->second)
        if (item.rfind("pill:", 0) == 0) return "1";
    return "0";
  }
  if (kind == "move-direction") {
    const auto* st = step_at(rule, trace, 1);
    if (!st) return std::nullopt;
    auto it = st->action.find(entity_of(rule, trace));
    if (it == st->action.end()) return std::nullopt;
    return short_action(it->second);
  }
  throw EstimationError("unknown extractor rule '" + kind + "'");
}

std::string FeatureExtractor::evaluate(const Trace& trace) const {
  auto raw = evaluate_rule(rule, trace);
  if (!raw) {
    if (variable.undefined_value) return *variable.undefined_value;
    throw EstimationError("feature " + name + " is undefined on trace " + trace.id);
  }
  std::string value = *raw;
  if (rule.contains("map") && rule["map"].contains(value)) value = rule["map"][value].get<std::string>();
  if (!variable.find(value))
    throw EstimationError("feature " + name + " produced '" + value + "' outside the domain of " + variable.name);
  return value;
}

nlohmann::json extractor_to_json(const FeatureExtractor& f) {
  return {{"name", f.name}, {"variable", f.variable}, {"rule", f.rule}};
}

FeatureExtractor extractor_from_json(const nlohmann::json& j) {
  try {
    FeatureExtractor f;
    f.variable = j.at("variable").get<VariableDef>();
    f.name = j.value("name", f.variable.name);
    f.rule = j.at("rule");
    if (!f.rule.is_object() || !f.rule.contains("rule")) throw EstimationError("extractor rule needs a 'rule' field");
    return f;
  } catch (const nlohmann::json::exception& e) {
    throw EstimationError(std::string("malformed extractor: ") + e.what());
  } catch (const ModelError& e) {
    throw EstimationError(std::string("malformed extractor: ") + e.what());
  }
}

nlohmann::json regime_to_json(const Regime& r) { return {{"name", r.name}, {"templates", r.templates}}; }

Regime regime_from_json(const nlohmann::json& j) {
  if (!j.is_object() || !j.contains("name")) throw EstimationError("regime needs a name");
  Regime r{j["name"].get<std::string>(), j.value("templates", nlohmann::json::array())};
  if (!r.templates.is_array()) throw EstimationError("regime templates must be an array");
  return r;
}

std::vector<InterventionSpec> resolve_regime(const Regime& regime, const System& system, const Seed& seed,
                                             int horizon) {
  std::vector<InterventionSpec> out;
  std::uint64_t k = 0;
  for (const auto& tpl : regime.templates) {
    ++k;
    auto kind = tpl.value("kind", std::string());
    if (kind == "reseed" || kind == "world-edit" || kind == "agent-edit" || kind == "force-action") {
      out.push_back(intervention_from_json(tpl));
      continue;
    }
    int time = tpl.value("time", 1);
    if (time < 1 || time > horizon) throw EstimationError("regime " + regime.name + ": template time out of range");
    auto prefix = rollout(system, seed, time, out);
    if (prefix.length() < time) continue;  // episode ended before the template applies
    const auto& w = prefix.at(time).world;
    auto edit = [&](std::string path, nlohmann::json value) {
      out.push_back(InterventionSpec::world_edit(time, std::move(path), std::move(value)));
    };
    auto grid_path = [](Position p) { return "/grid/" + std::to_string(p.row) + "/" + std::to_string(p.col); };

    if (kind == "mirror-entity") {
      auto entity = tpl.at("entity").get<std::string>();
      auto p = w.entities.at(entity);
      edit("/entities/" + entity, nlohmann::json::array({p.row, w.grid.cols() - 1 - p.col}));
    } else if (kind == "relocate-tile") {
      auto tile = tile_from_name(tpl.at("tile").get<std::string>());
      auto quadrant = tpl.at("quadrant").get<std::string>();
      auto from = find_tile(w.grid, {tile});
      std::vector<Position> free;
      for (auto c : pickup_quadrant_cells(quadrant.at(0))) {
        bool occupied = false;
        for (const auto& [_, pos] : w.entities) occupied = occupied || pos == c;
        if (!occupied) free.push_back(c);
      }
      if (free.empty()) continue;
      Rng rng(seed.child({kRoleRegime, k}));
      auto to = free[rng.below(free.size())];
      if (from && *from != to) edit(grid_path(*from), std::string(tile_name(TileKind::floor)));
      edit(grid_path(to), std::string(tile_name(tile)));
    } else if (kind == "remove-tile") {
      auto tile = tile_from_name(tpl.at("tile").get<std::string>());
      if (auto p = find_tile(w.grid, {tile})) edit(grid_path(*p), std::string(tile_name(TileKind::floor)));
    } else if (kind == "grant-tile") {
      auto tile = tile_from_name(tpl.at("tile").get<std::string>());
      auto entity = tpl.at("entity").get<std::string>();
      if (auto p = find_tile(w.grid, {tile})) edit(grid_path(*p), std::string(tile_name(TileKind::floor)));
      std::set<std::string> inv;
      if (auto it = w.inventory.find(entity); it != w.inventory.end()) inv = it->second;
      inv.insert(tpl.at("item").get<std::string>());
      edit("/inventory/" + entity, nlohmann::json(std::vector<std::string>(inv.begin(), inv.end())));
    } else {
      throw EstimationError("regime " + regime.name + ": unknown template kind '" + kind + "'");
    }
  }
  return out;
}

RolloutTree::RolloutTree(std::vector<VariableDef> variables, double alpha)
    : vars_(std::move(variables)), alpha_(alpha) {
  if (!(alpha_ > 0)) throw EstimationError("prior pseudocount must be positive");
  std::set<std::string> names;
  for (const auto& v : vars_)
    if (!names.insert(v.name).second) throw EstimationError("duplicate variable " + v.name);
}

const VariableDef& RolloutTree::variable(const std::string& name) const {
  for (const auto& v : vars_)
    if (v.name == name) return v;
  throw EstimationError("tree has no variable " + name);
}

void RolloutTree::add_regime(const Regime& regime) {
  auto [it, inserted] = regimes_.try_emplace(regime.name);
  if (inserted) {
    it->second.templates = regime.templates;
  } else if (it->second.templates != regime.templates) {
    throw EstimationError("regime " + regime.name + " redefined with different templates");
  }
}

void RolloutTree::add(const std::string& regime, const std::vector<std::size_t>& assignment, long count) {
  auto it = regimes_.find(regime);
  if (it == regimes_.end()) throw EstimationError("unknown regime " + regime);
  if (assignment.size() != vars_.size()) throw EstimationError("assignment size mismatch");
  for (std::size_t i = 0; i < vars_.size(); ++i)
    if (assignment[i] >= vars_[i].size()) throw EstimationError("assignment value out of range");
  if (count < 0) throw EstimationError("negative count");
  it->second.n += count;
  it->second.counts[assignment] += count;
}

void RolloutTree::merge(const RolloutTree& other) {
  if (vars_.empty() && regimes_.empty()) {
    vars_ = other.vars_;
    alpha_ = other.alpha_;
  }
  if (!(vars_ == other.vars_)) throw EstimationError("cannot merge trees over different variables");
  for (const auto& [name, b] : other.regimes_) {
    add_regime({name, b.templates});
    auto& mine = regimes_[name];
    mine.n += b.n;
    for (const auto& [a, c] : b.counts) mine.counts[a] += c;
  }
}

long RolloutTree::count(const std::string& regime, const Assignment& partial) const {
  auto it = regimes_.find(regime);
  if (it == regimes_.end()) throw EstimationError("unknown regime " + regime);
  std::vector<std::pair<std::size_t, std::size_t>> want;
  for (const auto& [k, v] : partial) {
    std::size_t i = 0;
    while (i < vars_.size() && vars_[i].name != k) ++i;
    if (i == vars_.size()) throw EstimationError("tree has no variable " + k);
    auto idx = vars_[i].find(v);
    if (!idx) throw EstimationError("value " + v + " not in domain of " + k);
    want.emplace_back(i, *idx);
  }
  long total = 0;
  for (const auto& [a, c] : it->second.counts) {
    bool ok = true;
    for (const auto& [i, v] : want) ok = ok && a[i] == v;
    if (ok) total += c;
  }
  return total;
}

namespace {

void nest(nlohmann::json& node, const std::vector<VariableDef>& vars, const std::vector<std::size_t>& a,
          std::size_t depth, long c) {
  const auto& key = vars[depth].domain[a[depth]];
  if (depth + 1 == vars.size()) {
    node[key] = c;
    return;
  }
  nest(node[key], vars, a, depth + 1, c);
}

void unnest(const nlohmann::json& node, const std::vector<VariableDef>& vars, std::vector<std::size_t>& a,
            std::size_t depth, RolloutTree& tree, const std::string& regime) {
  if (depth == vars.size()) {
    tree.add(regime, a, node.get<long>());
    return;
  }
  if (!node.is_object()) throw EstimationError("malformed count map");
  for (const auto& [k, v] : node.items()) {
    a[depth] = vars[depth].index_of(k);
    unnest(v, vars, a, depth + 1, tree, regime);
  }
}

}  // namespace

nlohmann::json tree_to_json(const RolloutTree& t) {
  nlohmann::json regimes = nlohmann::json::object();
  for (const auto& [name, b] : t.regimes()) {
    nlohmann::json counts = nlohmann::json::object();
    for (const auto& [a, c] : b.counts)
      if (!t.variables().empty()) nest(counts, t.variables(), a, 0, c);
    regimes[name] = {{"templates", b.templates}, {"n", b.n}, {"counts", counts}};
  }
  return {{"variables", t.variables()}, {"alpha", t.alpha()}, {"regimes", regimes}};
}

RolloutTree tree_from_json(const nlohmann::json& j) {
  try {
    RolloutTree t(j.at("variables").get<std::vector<VariableDef>>(), j.value("alpha", 1.0));
    for (const auto& [name, b] : j.at("regimes").items()) {
      t.add_regime({name, b.value("templates", nlohmann::json::array())});
      std::vector<std::size_t> a(t.variables().size());
      if (!t.variables().empty()) unnest(b.at("counts"), t.variables(), a, 0, t, name);
      if (b.contains("n") && b["n"].get<long>() != t.regimes().at(name).n)
        throw EstimationError("regime " + name + ": n does not match the counts");
    }
    return t;
  } catch (const nlohmann::json::exception& e) {
    throw EstimationError(std::string("malformed rollout tree: ") + e.what());
  } catch (const ModelError& e) {
    throw EstimationError(std::string("malformed rollout tree: ") + e.what());
  }
}

namespace {

struct CollectPlan {
  std::vector<VariableDef> vars;
  int horizon = 1;
};

CollectPlan plan(const System& system, const std::vector<Regime>& regimes,
                 const std::vector<FeatureExtractor>& extractors, const CollectOptions& options) {
  if (options.n < 0) throw EstimationError("rollout count must be non-negative");
  if (extractors.empty()) throw EstimationError("collect needs at least one extractor");
  std::set<std::string> names;
  for (const auto& r : regimes)
    if (!names.insert(r.name).second) throw EstimationError("duplicate regime " + r.name);
  CollectPlan p;
  for (const auto& e : extractors) p.vars.push_back(e.variable);
  p.horizon = options.horizon > 0 ? options.horizon : system.env.step_budget() + 1;
  return p;
}

std::vector<std::size_t> sample(const System& system, const Regime& regime,
                                const std::vector<FeatureExtractor>& extractors, const Seed& master,
                                long i, int horizon) {
  auto seed = master.child({static_cast<std::uint64_t>(i)});
  auto trace = rollout(system, seed, horizon, resolve_regime(regime, system, seed, horizon));
  std::vector<std::size_t> a;
  a.reserve(extractors.size());
  for (const auto& e : extractors) a.push_back(e.variable.index_of(e.evaluate(trace)));
  return a;
}

}  // namespace

RolloutTree collect_serial(const System& system, const std::vector<Regime>& regimes,
                           const std::vector<FeatureExtractor>& extractors, const Seed& master,
                           const CollectOptions& options) {
  auto p = plan(system, regimes, extractors, options);
  RolloutTree tree(p.vars, options.alpha);
  for (const auto& r : regimes) {
    tree.add_regime(r);
    for (long i = 0; i < options.n; ++i) tree.add(r.name, sample(system, r, extractors, master, i, p.horizon));
  }
  return tree;
}

RolloutTree collect(const System& system, const std::vector<Regime>& regimes,
                    const std::vector<FeatureExtractor>& extractors, const Seed& master,
                    const CollectOptions& options) {
  auto p = plan(system, regimes, extractors, options);
  RolloutTree tree(p.vars, options.alpha);
  for (const auto& r : regimes) tree.add_regime(r);

  const long n = options.n;
  const long jobs = n * static_cast<long>(regimes.size());
  std::exception_ptr failure;
#pragma omp parallel
  {
    RolloutTree local(p.vars, options.alpha);
    for (const auto& r : regimes) local.add_regime(r);
#pragma omp for schedule(dynamic, 16)
    for (long job = 0; job < jobs; ++job) {
      try {
        const auto& r = regimes[static_cast<std::size_t>(job / n)];
        local.add(r.name, sample(system, r, extractors, master, job % n, p.horizon));
      } catch (...) {
#pragma omp critical(acw_collect_error)
        if (!failure) failure = std::current_exception();
      }
    }
#pragma omp critical(acw_collect_merge)
    tree.merge(local);
  }
  if (failure) std::rethrow_exception(failure);
  return tree;
}

Cpt estimate_cpt(const RolloutTree& tree, const std::string& child, const std::vector<std::string>& parents,
                 const std::vector<std::string>& regimes) {
  const auto& vars = tree.variables();
  auto pos = [&](const std::string& name) {
    for (std::size_t i = 0; i < vars.size(); ++i)
      if (vars[i].name == name) return i;
    throw EstimationError("tree has no variable " + name);
  };
  auto ci = pos(child);
  std::vector<std::size_t> pi;
  std::vector<VariableDef> pdefs;
  for (const auto& p : parents) {
    pi.push_back(pos(p));
    pdefs.push_back(vars[pi.back()]);
  }
  std::size_t rows = 1, k = vars[ci].size();
  for (const auto& d : pdefs) rows *= d.size();
  Cpt cpt(vars[ci], pdefs, std::vector<double>(rows * k, 0.0));
  std::vector<long> counts(rows * k, 0);
  std::vector<std::size_t> pv(pi.size());
  for (const auto& name : regimes) {
    auto it = tree.regimes().find(name);
    if (it == tree.regimes().end()) throw EstimationError("unknown regime " + name);
    for (const auto& [a, c] : it->second.counts) {
      for (std::size_t q = 0; q < pi.size(); ++q) pv[q] = a[pi[q]];
      counts[cpt.row_of(pv) * k + a[ci]] += c;
    }
  }
  const double alpha = tree.alpha();
  std::vector<double> table(rows * k);
  for (std::size_t r = 0; r < rows; ++r) {
    long total = 0;
    for (std::size_t v = 0; v < k; ++v) total += counts[r * k + v];
    for (std::size_t v = 0; v < k; ++v)
      table[r * k + v] = (static_cast<double>(counts[r * k + v]) + alpha) /
                         (static_cast<double>(total) + alpha * static_cast<double>(k));
  }
  return Cpt(vars[ci], std::move(pdefs), std::move(table));
}

Cpt estimate_cpt(const RolloutTree& tree, const std::string& child, const std::vector<std::string>& parents,
                 const std::string& regime) {
  return estimate_cpt(tree, child, parents, std::vector<std::string>{regime});
}

ScmModel assemble_model(const std::vector<Cpt>& cpts, const std::map<std::string, std::vector<std::string>>& structure,
                        const std::vector<LatentPrior>& latents) {
  std::vector<Cpt> all;
  std::vector<std::string> latent_names;
  std::set<std::string> covered;
  for (const auto& l : latents) {
    auto it = structure.find(l.variable.name);
    if (it != structure.end() && !it->second.empty())
      throw ModelError("latent " + l.variable.name + " must be a root");
    if (!covered.insert(l.variable.name).second) throw ModelError("variable " + l.variable.name + " defined twice");
    all.push_back(Cpt::prior(l.variable, l.prior));
    latent_names.push_back(l.variable.name);
  }
  for (const auto& c : cpts) {
    auto it = structure.find(c.child.name);
    if (it == structure.end()) throw ModelError("cpt for " + c.child.name + " has no node in the structure");
    std::set<std::string> want(it->second.begin(), it->second.end()), have;
    for (const auto& p : c.parents) have.insert(p.name);
    if (want != have || want.size() != it->second.size())
      throw ModelError("cpt for " + c.child.name + " does not match its parents in the structure");
    if (!covered.insert(c.child.name).second) throw ModelError("variable " + c.child.name + " defined twice");
    all.push_back(c);
  }
  for (const auto& [name, parents] : structure) {
    if (!covered.count(name)) throw ModelError("variable " + name + " has no cpt");
    for (const auto& p : parents)
      if (!structure.count(p)) throw ModelError("parent " + p + " of " + name + " is not in the structure");
  }
  return ScmModel(std::move(all), std::move(latent_names));
}

}  // namespace acw
