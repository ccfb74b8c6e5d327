#include "acw/service.hpp"

#include <chrono>
#include <ctime>
#include <fstream>
#include <sstream>

#include <httplib.h>

#include "acw/errors.hpp"
#include "acw/experiments.hpp"

namespace acw {

namespace {

using json = nlohmann::json;

struct HttpError : std::runtime_error {
  int status;
  std::string code;
  HttpError(int s, std::string c, const std::string& msg) : std::runtime_error(msg), status(s), code(std::move(c)) {}
};

[[noreturn]] void not_found(const std::string& what) { throw HttpError(404, "not_found", what); }
[[noreturn]] void unprocessable(const std::string& what) { throw HttpError(422, "schema_violation", what); }

Response error(int status, const std::string& code, const std::string& message) {
  return {status, {{"code", code}, {"message", message}}};
}

std::vector<std::string> split_path(const std::string& path) {
  std::vector<std::string> parts;
  std::string cur;
  for (char c : path.substr(0, path.find('?'))) {
    if (c == '/') {
      if (!cur.empty()) parts.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  if (!cur.empty()) parts.push_back(cur);
  return parts;
}

std::string now_iso() {
  auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  char buf[32];
  std::tm tm{};
  gmtime_r(&t, &tm);
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

json trace_summary(const Trace& t) {
  json parent = nullptr;
  if (t.parent)
    parent = {{"trace_id", t.parent->trace_id},
              {"branch_time", t.parent->branch_time},
              {"spec", intervention_to_json(t.parent->spec)}};
  return {{"trace_id", t.id}, {"length", t.length()}, {"terminated", t.terminated()}, {"parent", parent}};
}

json full_trace(const Trace& t) {
  json steps = json::array();
  for (const auto& s : t.steps) steps.push_back(step_to_json(s));
  auto j = trace_summary(t);
  j["header"] = trace_header_json(t);
  j["steps"] = steps;
  return j;
}

Seed seed_from(const json& j, const Seed& fallback) {
  if (j.is_null()) return fallback;
  if (j.is_number_unsigned() || j.is_number_integer()) return Seed(j.get<std::uint64_t>());
  return j.get<Seed>();
}

AgentSpec agent_from(const json& j) {
  if (j.is_string()) return make_agent_spec(j.get<std::string>());
  return agent_spec_from_json(j);
}

}  // namespace

Service::Service(std::optional<std::filesystem::path> data_dir) : dir_(std::move(data_dir)) {
  if (dir_) {
    std::filesystem::create_directories(*dir_);
    replay_log();
  }
}

Service::~Service() { wait_idle(); }

void Service::wait_idle() {
  std::vector<std::thread> ws;
  {
    std::lock_guard lk(workers_mutex_);
    ws.swap(workers_);
  }
  for (auto& w : ws)
    if (w.joinable()) w.join();
}

std::string Service::next_id(const char* prefix) {
  return std::string(prefix) + "-" + std::to_string(++counters_[prefix]);
}

void Service::log_request(const std::string& method, const std::string& path, const std::string& body,
                          const std::string& key) {
  if (!dir_) return;
  std::lock_guard lk(log_mutex_);
  std::ofstream out(*dir_ / "requests.jsonl", std::ios::app);
  out << json{{"method", method}, {"path", path}, {"body", body}, {"key", key}}.dump() << "\n";
}

void Service::replay_log() {
  std::ifstream in(*dir_ / "requests.jsonl");
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto j = json::parse(line, nullptr, false);
    if (j.is_discarded()) continue;
    auto key = j.value("key", std::string());
    if (!key.empty() && idempotent_.count(key)) continue;
    auto r = execute(j.value("method", std::string()), j.value("path", std::string()), j.value("body", std::string()),
                     true);
    if (!key.empty()) idempotent_[key] = r;
  }
}

Response Service::handle(const std::string& method, const std::string& path, const std::string& body,
                         const std::string& request_key) {
  const bool mutating = method == "POST";
  if (mutating && !request_key.empty()) {
    std::shared_lock lk(state_);
    if (auto it = idempotent_.find(request_key); it != idempotent_.end()) return it->second;
  }
  if (mutating) log_request(method, path, body, request_key);

  Response r = execute(method, path, body, false);
  if (mutating && !request_key.empty()) {
    std::unique_lock lk(state_);
    idempotent_.emplace(request_key, r);
  }
  return r;
}

Response Service::execute(const std::string& method, const std::string& path, const std::string& body,
                          bool replaying) {
  json parsed = json::object();
  if (!body.empty()) parsed = json::parse(body, nullptr, false);
  if (parsed.is_discarded()) return error(422, "invalid_json", "request body is not valid JSON");
  try {
    return dispatch(method, split_path(path), parsed, replaying);
  } catch (const HttpError& e) {
    return error(e.status, e.code, e.what());
  } catch (const ConditioningError& e) {
    return error(422, "zero_probability_evidence", e.what());
  } catch (const InterventionError& e) {
    return error(409, "illegal_intervention", e.what());
  } catch (const EpisodeOverError& e) {
    return error(409, "episode_over", e.what());
  } catch (const ModelError& e) {
    return error(422, "invalid_model", e.what());
  } catch (const EstimationError& e) {
    return error(422, "invalid_estimation", e.what());
  } catch (const ConfigError& e) {
    return error(422, "schema_violation", e.what());
  } catch (const json::exception& e) {
    return error(422, "schema_violation", e.what());
  } catch (const std::exception& e) {
    return error(500, "internal", e.what());
  }
}

std::shared_ptr<Service::Session> Service::session(const std::string& id) {
  std::shared_lock lk(state_);
  auto it = sessions_.find(id);
  if (it == sessions_.end()) not_found("unknown session " + id);
  return it->second;
}

Response Service::dispatch(const std::string& method, const std::vector<std::string>& p, const json& body,
                           bool replaying) {
  const auto n = p.size();
  if (method == "GET" && n == 0) return {200, {{"service", "acw"}, {"status", "ok"}}};

  if (n >= 1 && p[0] == "sessions") {
    if (n == 1 && method == "POST") return create_session(body);
    if (n == 1 && method == "GET") {
      std::shared_lock lk(state_);
      json out = json::array();
      for (const auto& [id, s] : sessions_) out.push_back({{"session_id", id}, {"root_trace_id", s->root}});
      return {200, {{"sessions", out}}};
    }
    auto s = session(p[1]);
    if (n == 2 && method == "GET")
      return {200,
              {{"session_id", s->id},
               {"system", system_to_json(s->system)},
               {"seed", s->seed},
               {"created_at", s->created_at},
               {"root_trace_id", s->root}}};
    if (n == 3 && p[2] == "traces" && method == "GET") return list_traces(*s);
    if (n == 4 && p[2] == "traces" && method == "GET") return get_trace(*s, p[3]);
    if (n == 5 && p[2] == "traces" && p[4] == "extend" && method == "POST") return extend_trace(*s, p[3], body);
    if (n == 5 && p[2] == "traces" && p[4] == "intervene" && method == "POST") return intervene_trace(*s, p[3], body);
    if (n == 3 && p[2] == "collect" && method == "POST") return start_collect(*s, body, replaying);
    if (n == 3 && p[2] == "models" && method == "POST") return create_model(body);
  }
  if (n == 2 && p[0] == "jobs" && method == "GET") {
    std::shared_lock lk(state_);
    auto it = jobs_.find(p[1]);
    if (it == jobs_.end()) not_found("unknown job " + p[1]);
    const auto& j = *it->second;
    json out = {{"job_id", j.id}, {"tree_id", j.tree_id}, {"status", j.status}};
    if (!j.error.empty()) out["error"] = j.error;
    return {200, out};
  }
  if (n == 2 && p[0] == "trees" && method == "GET") {
    std::shared_lock lk(state_);
    auto it = trees_.find(p[1]);
    if (it == trees_.end()) {
      for (const auto& [_, j] : jobs_)
        if (j->tree_id == p[1]) throw HttpError(409, "not_ready", "tree " + p[1] + " is still being collected");
      not_found("unknown tree " + p[1]);
    }
    return {200, tree_to_json(*it->second)};
  }
  if (n >= 2 && p[0] == "models") {
    if (n == 2 && method == "GET") {
      std::shared_lock lk(state_);
      auto it = models_.find(p[1]);
      if (it == models_.end()) not_found("unknown model " + p[1]);
      if (auto m = std::get_if<ScmModel>(it->second.get())) return {200, model_to_json(*m)};
      return {200, hypotheses_to_json(std::get<Hypotheses>(*it->second))};
    }
    if (n == 3 && p[2] == "query" && method == "POST") return query_model(p[1], body);
  }
  if (n >= 1 && p[0] == "experiments") {
    if (n == 1 && method == "GET") return {200, {{"experiments", experiment_names()}}};
    if (n == 3 && p[2] == "run" && method == "POST") return run_experiment_request(p[1], body);
  }
  not_found("no route for " + method);
}

Response Service::create_session(const json& body) {
  if (!body.is_object() || !body.contains("env")) unprocessable("session needs 'env'");
  EnvSpec env = body["env"].is_string() ? make_env_spec(body["env"].get<std::string>()) : env_spec_from_json(body["env"]);
  System system;
  if (body.contains("agents")) {
    std::vector<AgentSpec> agents;
    for (const auto& a : body["agents"]) agents.push_back(agent_from(a));
    system = make_system(env, agents);
  } else if (body.contains("agent")) {
    system = make_system(env, agent_from(body["agent"]));
  } else {
    unprocessable("session needs 'agent' or 'agents'");
  }
  Seed seed = seed_from(body.value("seed", json()), Seed(0));
  int T = body.value("T", env.step_budget() + 1);
  if (T < 1) unprocessable("T must be >= 1");
  auto root = rollout(system, seed, T);

  auto s = std::make_shared<Session>();
  s->system = system;
  s->seed = seed;
  s->created_at = now_iso();
  s->root = root.id;
  s->traces.put(root);
  s->order.push_back(root.id);
  {
    std::unique_lock lk(state_);
    s->id = next_id("s");
    sessions_[s->id] = s;
  }
  return {201, {{"session_id", s->id}, {"root_trace_id", root.id}, {"trace", trace_summary(root)}}};
}

Response Service::list_traces(Session& s) {
  std::lock_guard lk(s.write);
  json out = json::array();
  for (const auto& id : s.order) out.push_back(trace_summary(*s.traces.get(id)));
  return {200, {{"session_id", s.id}, {"root_trace_id", s.root}, {"traces", out}}};
}

Response Service::get_trace(Session& s, const std::string& tid) {
  auto t = s.traces.get(tid);
  if (!t) not_found("unknown trace " + tid);
  return {200, full_trace(*t)};
}

Response Service::extend_trace(Session& s, const std::string& tid, const json& body) {
  if (!body.is_object() || !body.contains("T") || !body["T"].is_number_integer()) unprocessable("extend needs integer 'T'");
  int T = body["T"].get<int>();
  if (T < 1) unprocessable("T must be >= 1");
  std::lock_guard lk(s.write);
  auto t = s.traces.get(tid);
  if (!t) not_found("unknown trace " + tid);
  auto out = extend(*t, T);
  if (!s.traces.contains(out.id)) {
    s.traces.put(out);
    s.order.push_back(out.id);
  }
  return {200, trace_summary(out)};
}

Response Service::intervene_trace(Session& s, const std::string& tid, const json& body) {
  const json& raw = body.contains("spec") ? body["spec"] : body;
  InterventionSpec spec;
  try {
    spec = intervention_from_json(raw);
  } catch (const InterventionError& e) {
    unprocessable(e.what());
  } catch (const json::exception& e) {
    unprocessable(e.what());
  }
  std::lock_guard lk(s.write);
  auto t = s.traces.get(tid);
  if (!t) not_found("unknown trace " + tid);
  auto out = intervene(*t, spec);
  if (!s.traces.contains(out.id)) {
    s.traces.put(out);
    s.order.push_back(out.id);
  }
  return {200, trace_summary(out)};
}

Response Service::start_collect(Session& s, const json& body, bool replaying) {
  if (!body.is_object()) unprocessable("collect body must be an object");
  std::vector<Regime> regimes;
  if (body.contains("regimes"))
    for (const auto& r : body["regimes"]) regimes.push_back(regime_from_json(r));
  else
    regimes.push_back({"observational", json::array()});
  std::vector<FeatureExtractor> extractors;
  if (!body.contains("extractors") || !body["extractors"].is_array()) unprocessable("collect needs 'extractors'");
  for (const auto& e : body["extractors"]) extractors.push_back(extractor_from_json(e));
  CollectOptions opt;
  opt.n = body.value("n", 1000L);
  opt.horizon = body.value("horizon", 0);
  opt.alpha = body.value("alpha", 1.0);
  if (opt.n < 0) unprocessable("n must be >= 0");
  Seed master = seed_from(body.value("seed", json()), s.seed);
  if (!(opt.alpha > 0)) unprocessable("alpha must be positive");

  auto job = std::make_shared<Job>();
  {
    std::unique_lock lk(state_);
    job->id = next_id("job");
    job->tree_id = next_id("tree");
    jobs_[job->id] = job;
  }
  auto work = [this, job, system = s.system, regimes, extractors, master, opt] {
    try {
      auto tree = std::make_shared<const RolloutTree>(collect(system, regimes, extractors, master, opt));
      std::unique_lock lk(state_);
      trees_[job->tree_id] = tree;
      job->status = "done";
    } catch (const std::exception& e) {
      std::unique_lock lk(state_);
      job->status = "failed";
      job->error = e.what();
    }
  };
  if (replaying) {
    work();
  } else {
    std::lock_guard lk(workers_mutex_);
    workers_.emplace_back(work);
  }
  std::shared_lock lk(state_);
  return {202, {{"job_id", job->id}, {"tree_id", job->tree_id}, {"status", job->status}}};
}

Response Service::create_model(const json& body) {
  if (!body.is_object()) unprocessable("model body must be an object");
  std::shared_ptr<const RolloutTree> tree;
  if (body.contains("tree_id")) {
    auto id = body["tree_id"].get<std::string>();
    std::shared_lock lk(state_);
    auto it = trees_.find(id);
    if (it == trees_.end()) {
      for (const auto& [_, j] : jobs_)
        if (j->tree_id == id) throw HttpError(409, "not_ready", "tree " + id + " is still being collected");
      not_found("unknown tree " + id);
    }
    tree = it->second;
  }
  auto build = [&](const json& plan) -> ScmModel {
    if (plan.contains("model")) return model_from_json(plan["model"]);
    auto mp = model_plan_from_json(plan);
    for (const auto& c : mp.cpts)
      if (!c.fixed && !tree) unprocessable("estimated cpts need 'tree_id'");
    return tree ? build_model(mp, *tree) : build_model(mp, RolloutTree());
  };

  std::shared_ptr<const ModelEntry> entry;
  json out;
  if (body.contains("hypotheses")) {
    const auto& h = body["hypotheses"];
    Hypotheses hs;
    hs.variable = h.at("variable").get<std::string>();
    for (const auto& e : h.at("entries"))
      hs.entries.push_back({e.at("label").get<std::string>(), build(e), e.at("prior").get<double>()});
    if (hs.entries.size() < 2) unprocessable("need at least two hypotheses");
    out = hypotheses_to_json(hs);
    entry = std::make_shared<const ModelEntry>(std::move(hs));
  } else {
    auto m = build(body);
    out = model_to_json(m);
    entry = std::make_shared<const ModelEntry>(std::move(m));
  }
  std::unique_lock lk(state_);
  auto id = next_id("m");
  models_[id] = entry;
  return {201, {{"model_id", id}, {"model", out}}};
}

Response Service::query_model(const std::string& id, const json& body) {
  std::shared_ptr<const ModelEntry> entry;
  {
    std::shared_lock lk(state_);
    auto it = models_.find(id);
    if (it == models_.end()) not_found("unknown model " + id);
    entry = it->second;
  }
  auto q = query_from_json(body.contains("query") ? body["query"] : body);
  if (auto m = std::get_if<ScmModel>(entry.get())) return {200, result_to_json(run_query(*m, q))};
  return {200, result_to_json(run_query(std::get<Hypotheses>(*entry), q))};
}

Response Service::run_experiment_request(const std::string& name, const json& body) {
  const auto& names = experiment_names();
  if (std::find(names.begin(), names.end(), name) == names.end()) not_found("unknown experiment " + name);
  long rollouts = body.value("rollouts", 1000L);
  if (rollouts < 0) unprocessable("rollouts must be >= 0");
  auto seed = body.value("seed", std::uint64_t{7});
  return {200, table_to_json(run_experiment(name, rollouts, seed))};
}

struct HttpServer::Impl {
  Service& service;
  httplib::Server server;
  std::thread thread;

  explicit Impl(Service& s) : service(s) {
    auto h = [this](const httplib::Request& req, httplib::Response& res) {
      auto r = service.handle(req.method, req.path, req.body, req.get_header_value(Service::kRequestKeyHeader));
      res.status = r.status;
      res.set_content(r.body.dump(), "application/json");
    };
    server.Get(".*", h);
    server.Post(".*", h);
  }
};

HttpServer::HttpServer(Service& service) : impl_(std::make_unique<Impl>(service)) {}

HttpServer::~HttpServer() { stop(); }

int HttpServer::start(const std::string& host, int port) {
  int bound = port == 0 ? impl_->server.bind_to_any_port(host) : (impl_->server.bind_to_port(host, port) ? port : -1);
  if (bound < 0) return -1;
  impl_->thread = std::thread([this] { impl_->server.listen_after_bind(); });
  impl_->server.wait_until_ready();
  return bound;
}

bool HttpServer::listen(const std::string& host, int port) { return impl_->server.listen(host, port); }

void HttpServer::stop() {
  impl_->server.stop();
  if (impl_->thread.joinable()) impl_->thread.join();
}

}  // namespace acw
