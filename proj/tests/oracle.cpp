#include "oracle.hpp"

#include <algorithm>
#include <array>
#include <deque>
#include <functional>

#include "acw/simulator.hpp"

namespace oracle {

Net from_model(const acw::ScmModel& m) {
  Net net;
  const auto& vars = m.variables();
  for (const auto& v : vars) {
    net.names.push_back(v.name);
    net.card.push_back(static_cast<int>(v.size()));
  }
  for (std::size_t i = 0; i < vars.size(); ++i) {
    const auto& cpt = m.cpt(vars[i].name);
    std::vector<int> ps;
    for (const auto& p : cpt.parents) ps.push_back(static_cast<int>(m.index(p.name)));
    net.parents.push_back(ps);
    std::vector<std::vector<double>> rows;
    for (std::size_t r = 0; r < cpt.rows(); ++r) rows.push_back(cpt.row(r));
    net.table.push_back(rows);
  }
  return net;
}

acw::ScmModel random_model(std::mt19937_64& rng, int n) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<int> order(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = i;
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<acw::VariableDef> defs;
  for (int i = 0; i < n; ++i) defs.emplace_back("X" + std::to_string(i), std::vector<std::string>{"0", "1"});
  std::vector<acw::Cpt> cpts;
  for (int k = 0; k < n; ++k) {
    int v = order[static_cast<std::size_t>(k)];
    std::vector<acw::VariableDef> parents;
    for (int j = 0; j < k; ++j)
      if (u(rng) < 0.5) parents.push_back(defs[static_cast<std::size_t>(order[static_cast<std::size_t>(j)])]);
    std::size_t rows = std::size_t{1} << parents.size();
    std::vector<double> table;
    for (std::size_t r = 0; r < rows; ++r) {
      double p = u(rng);
      if (u(rng) < 0.15) p = p < 0.5 ? 0.0 : 1.0;
      table.push_back(p);
      table.push_back(1.0 - p);
    }
    cpts.emplace_back(defs[static_cast<std::size_t>(v)], parents, table);
  }
  return acw::ScmModel(cpts);
}

namespace {

// Calls f(response, weight) for every joint response function with positive weight.
void for_each_response(const Net& net, const std::function<void(const std::vector<std::vector<int>>&, double)>& f) {
  const std::size_t n = net.names.size();
  std::vector<std::vector<int>> resp(n);
  for (std::size_t i = 0; i < n; ++i) resp[i].assign(net.table[i].size(), 0);
  std::function<void(std::size_t, std::size_t, double)> rec = [&](std::size_t var, std::size_t row, double w) {
    if (w == 0.0) return;
    if (var == n) {
      f(resp, w);
      return;
    }
    if (row == net.table[var].size()) {
      rec(var + 1, 0, w);
      return;
    }
    for (int v = 0; v < net.card[var]; ++v) {
      resp[var][row] = v;
      rec(var, row + 1, w * net.table[var][row][static_cast<std::size_t>(v)]);
    }
  };
  rec(0, 0, 1.0);
}

std::vector<int> evaluate(const Net& net, const std::vector<std::vector<int>>& resp, const Setting& forced) {
  const std::size_t n = net.names.size();
  std::vector<int> x(n, -1);
  for (std::size_t done = 0; done < n;) {
    for (std::size_t i = 0; i < n; ++i) {
      if (x[i] >= 0) continue;
      if (auto it = forced.find(static_cast<int>(i)); it != forced.end()) {
        x[i] = it->second;
        ++done;
        continue;
      }
      bool ready = true;
      int row = 0;
      for (int p : net.parents[i]) {
        if (x[static_cast<std::size_t>(p)] < 0) ready = false;
        else row = row * net.card[static_cast<std::size_t>(p)] + x[static_cast<std::size_t>(p)];
      }
      if (!ready) continue;
      x[i] = resp[i][static_cast<std::size_t>(row)];
      ++done;
    }
  }
  return x;
}

bool holds(const std::vector<int>& x, const Setting& s) {
  for (const auto& [i, v] : s)
    if (x[static_cast<std::size_t>(i)] != v) return false;
  return true;
}

}  // namespace

double interventional(const Net& net, const Setting& target, const Setting& intervention, const Setting& evidence) {
  double num = 0, den = 0;
  for_each_response(net, [&](const auto& resp, double w) {
    auto x = evaluate(net, resp, intervention);
    if (!holds(x, evidence)) return;
    den += w;
    if (holds(x, target)) num += w;
  });
  return den > 0 ? num / den : -1.0;
}

double assoc(const Net& net, const Setting& target, const Setting& evidence) {
  return interventional(net, target, {}, evidence);
}

double counterfactual(const Net& net, const Setting& target, const Setting& antecedent, const Setting& evidence) {
  double num = 0, den = 0;
  for_each_response(net, [&](const auto& resp, double w) {
    if (!holds(evaluate(net, resp, {}), evidence)) return;
    den += w;
    if (holds(evaluate(net, resp, antecedent), target)) num += w;
  });
  return den > 0 ? num / den : -1.0;
}

double path(const Net& net, const std::vector<int>& chain, int start_value, int end_value) {
  std::vector<double> dist(static_cast<std::size_t>(net.card[static_cast<std::size_t>(chain[0])]), 0.0);
  dist[static_cast<std::size_t>(start_value)] = 1.0;
  for (std::size_t k = 0; k + 1 < chain.size(); ++k) {
    int from = chain[k], to = chain[k + 1];
    std::vector<double> next(static_cast<std::size_t>(net.card[static_cast<std::size_t>(to)]), 0.0);
    for (int a = 0; a < net.card[static_cast<std::size_t>(from)]; ++a)
      for (int b = 0; b < net.card[static_cast<std::size_t>(to)]; ++b)
        next[static_cast<std::size_t>(b)] += dist[static_cast<std::size_t>(a)] * interventional(net, {{to, b}}, {{from, a}}, {});
    dist = next;
  }
  return dist[static_cast<std::size_t>(end_value)];
}

double key_door_a_key_rate() {
  // Room rows/cols 1..5, open door (3,6), annex (3,7), pill (3,8).
  auto walkable = [](int r, int c) {
    if (r >= 1 && r <= 5 && c >= 1 && c <= 5) return true;
    return r == 3 && c >= 6 && c <= 8;
  };
  auto dist = [&](std::array<int, 2> a, std::array<int, 2> b) {
    std::map<std::array<int, 2>, int> d{{a, 0}};
    std::deque<std::array<int, 2>> q{a};
    while (!q.empty()) {
      auto p = q.front();
      q.pop_front();
      if (p == b) return d[p];
      for (auto [dr, dc] : {std::pair{-1, 0}, {1, 0}, {0, -1}, {0, 1}}) {
        std::array<int, 2> n{p[0] + dr, p[1] + dc};
        if (!walkable(n[0], n[1]) || d.count(n)) continue;
        d[n] = d[p] + 1;
        q.push_back(n);
      }
    }
    return -1;
  };
  const std::array<int, 2> pill{3, 8};
  int with_key = 0, total = 0;
  for (int ar = 1; ar <= 5; ++ar)
    for (int ac = 1; ac <= 5; ++ac)
      for (int kr = 1; kr <= 5; ++kr)
        for (int kc = 1; kc <= 5; ++kc) {
          if (ar == kr && ac == kc) continue;
          ++total;
          std::array<int, 2> pos{ar, ac}, key{kr, kc};
          while (pos != pill && pos != key) {
            int detour = dist(pos, key) + dist(key, pill) - dist(pos, pill);
            auto target = detour <= 2 ? key : pill;
            int here = dist(pos, target);
            for (auto [dr, dc] : {std::pair{-1, 0}, {1, 0}, {0, -1}, {0, 1}}) {
              std::array<int, 2> n{pos[0] + dr, pos[1] + dc};
              if (walkable(n[0], n[1]) && dist(n, target) == here - 1) {
                pos = n;
                break;
              }
            }
          }
          if (pos == key) ++with_key;
        }
  return static_cast<double>(with_key) / total;
}

namespace {

struct Case {
  acw::System system;
  acw::Seed seed;
  int T;
};

Case random_case(std::mt19937_64& rng) {
  const auto& agents = acw::agent_ids();
  auto agent = acw::make_agent_spec(agents[rng() % agents.size()]);
  auto env = acw::make_env_spec(agent.env_id());
  Case c{acw::make_system(env, agent), acw::Seed(rng() % 100000), 0};
  c.T = 2 + static_cast<int>(rng() % 30);
  return c;
}

acw::InterventionSpec random_intervention(std::mt19937_64& rng, const acw::Trace& t) {
  int time = 1 + static_cast<int>(rng() % static_cast<std::uint64_t>(t.length()));
  const auto& w = t.at(time).world;
  const std::string entity = t.system.bindings.front().first;
  switch (rng() % 4) {
    case 0:
      return acw::InterventionSpec::reseed(time, acw::Seed(rng() % 1000));
    case 1: {
      std::vector<acw::Position> cells;
      for (int r = 0; r < w.grid.rows(); ++r)
        for (int c = 0; c < w.grid.cols(); ++c) {
          auto k = w.grid.at({r, c});
          if (k != acw::TileKind::wall && k != acw::TileKind::gate_closed) cells.push_back({r, c});
        }
      auto p = cells[rng() % cells.size()];
      return acw::InterventionSpec::world_edit(time, "/entities/" + entity, nlohmann::json::array({p.row, p.col}));
    }
    case 2:
      return acw::InterventionSpec::agent_edit(time, "probe", std::to_string(rng() % 10), entity);
    default: {
      static const acw::Action moves[] = {acw::Action::up, acw::Action::down, acw::Action::left, acw::Action::right};
      return acw::InterventionSpec::force_action(time, moves[rng() % 4], entity);
    }
  }
}

}  // namespace

int determinism_failures(int trials, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  int failures = 0;
  for (int i = 0; i < trials; ++i) {
    auto c = random_case(rng);
    auto a = acw::rollout(c.system, c.seed, c.T);
    auto b = acw::rollout(c.system, c.seed, c.T);
    auto replayed = acw::replay(a);
    auto reloaded = acw::trace_from_jsonl(acw::trace_to_jsonl(a));
    bool ok = acw::trace_to_jsonl(a) == acw::trace_to_jsonl(b) && acw::same_content(a, replayed) &&
              acw::trace_to_jsonl(reloaded) == acw::trace_to_jsonl(a);
    if (a.length() > 0) {
      auto iv = random_intervention(rng, a);
      auto x = acw::intervene(a, iv);
      auto y = acw::intervene(a, iv);
      ok = ok && acw::trace_to_jsonl(x) == acw::trace_to_jsonl(y) && acw::same_content(x, acw::replay(x));
    }
    if (!ok) ++failures;
  }
  return failures;
}

int branch_prefix_failures(int trials, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  int failures = 0;
  for (int i = 0; i < trials; ++i) {
    auto c = random_case(rng);
    auto parent = acw::rollout(c.system, c.seed, c.T);
    auto iv = random_intervention(rng, parent);
    acw::Trace child;
    try {
      child = acw::intervene(parent, iv);
    } catch (const std::exception&) {
      ++failures;
      continue;
    }
    bool ok = child.parent && child.parent->trace_id == parent.id && child.parent->branch_time == iv.time;
    for (int t = 1; t < iv.time && ok; ++t) ok = child.at(t) == parent.at(t);
    if (!ok) ++failures;
  }
  return failures;
}

int rewind_replay_failures(int trials, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  int failures = 0;
  for (int i = 0; i < trials; ++i) {
    auto c = random_case(rng);
    auto full = acw::rollout(c.system, c.seed, c.T);
    int k = 1 + static_cast<int>(rng() % static_cast<std::uint64_t>(full.length()));
    auto back = acw::extend(acw::extend(full, k), full.length());
    bool ok = acw::trace_to_jsonl(back) == acw::trace_to_jsonl(full) && acw::extend(full, full.length()).id == full.id;
    if (!ok) ++failures;
  }
  return failures;
}

}  // namespace oracle
