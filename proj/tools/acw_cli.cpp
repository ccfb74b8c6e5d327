// acw: batch experiments, reference verification, trace simulation and the HTTP service.

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "acw/errors.hpp"
#include "acw/experiments.hpp"
#include "acw/service.hpp"
#include "acw/simulator.hpp"

namespace {

using json = nlohmann::json;

constexpr int kOk = 0;
constexpr int kVerifyFailed = 1;
constexpr int kUsage = 2;

json read_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw acw::ConfigError("cannot open " + path);
  auto j = json::parse(in, nullptr, false);
  if (j.is_discarded()) throw acw::ConfigError(path + " is not valid JSON");
  return j;
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw acw::ConfigError("cannot write " + path);
  out << text;
}

// A table file holds one QueryTable or {"tables": [...]}.
std::vector<acw::QueryTable> read_tables(const json& j) {
  std::vector<acw::QueryTable> out;
  if (j.contains("tables"))
    for (const auto& t : j["tables"]) out.push_back(acw::table_from_json(t));
  else
    out.push_back(acw::table_from_json(j));
  return out;
}

int cmd_experiment(const std::string& name, long rollouts, std::uint64_t seed, const std::string& out,
                   const std::string& format) {
  std::vector<std::string> names;
  if (name == "all") names = acw::experiment_names();
  else names = {name};
  json tables = json::array();
  std::string text;
  for (const auto& n : names) {
    auto t = acw::run_experiment(n, rollouts, seed);
    tables.push_back(acw::table_to_json(t));
    text += acw::table_to_text(t) + "\n";
  }
  json doc = names.size() == 1 ? tables[0] : json{{"tables", tables}};
  std::string rendered = format == "text" ? text : doc.dump(2) + "\n";
  if (out.empty()) std::cout << rendered;
  else {
    write_text(out, rendered);
    std::cout << text;
  }
  return kOk;
}

int cmd_verify(const std::string& reference, const std::string& tolerances, const std::string& actual_path,
               long rollouts, std::uint64_t seed) {
  auto refs = read_tables(read_json(reference));
  json tol = tolerances.empty() ? json::object() : read_json(tolerances);
  std::vector<acw::QueryTable> actual;
  if (!actual_path.empty()) actual = read_tables(read_json(actual_path));

  bool ok = true;
  for (const auto& ref : refs) {
    const acw::QueryTable* a = nullptr;
    acw::QueryTable computed;
    for (const auto& t : actual)
      if (t.experiment == ref.experiment) a = &t;
    if (!a) {
      computed = acw::run_experiment(ref.experiment, rollouts, seed);
      a = &computed;
    }
    auto rep = acw::diff_tables(*a, ref, tol);
    std::cout << rep.to_text();
    ok = ok && rep.pass();
  }
  std::cout << (ok ? "verify: all checks passed\n" : "verify: FAILED\n");
  return ok ? kOk : kVerifyFailed;
}

int cmd_simulate(const std::string& env, const std::string& agent, std::uint64_t seed, int steps,
                 const std::string& out) {
  auto spec = acw::make_env_spec(env);
  auto trace = acw::rollout(acw::make_system(spec, acw::make_agent_spec(agent)), acw::Seed(seed),
                            steps > 0 ? steps : spec.step_budget() + 1);
  auto text = acw::trace_to_jsonl(trace);
  if (out.empty()) std::cout << text;
  else write_text(out, text);
  std::cerr << trace.id << " length=" << trace.length() << (trace.terminated() ? " terminated" : "") << "\n";
  return kOk;
}

int cmd_serve(const std::string& host, int port, std::string data_dir) {
  if (data_dir.empty())
    if (const char* env = std::getenv(acw::Service::kDataDirEnv)) data_dir = env;
  std::optional<std::filesystem::path> dir;
  if (!data_dir.empty()) dir = data_dir;
  acw::Service service(dir);
  acw::HttpServer server(service);
  std::cerr << "listening on " << host << ":" << port << "\n";
  if (!server.listen(host, port)) {
    std::cerr << "cannot bind " << host << ":" << port << "\n";
    return kVerifyFailed;
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Causal analysis workbench for scripted gridworld agents"};
  app.require_subcommand(1);

  std::string name, out, format = "json";
  long rollouts = 1000;
  std::uint64_t seed = 7;
  auto* exp = app.add_subcommand("experiment", "Run a packaged experiment and emit its query table");
  exp->add_option("name", name, "experiment name or 'all'")->required();
  exp->add_option("--rollouts", rollouts, "rollouts per regime")->check(CLI::NonNegativeNumber);
  exp->add_option("--seed", seed, "master seed");
  exp->add_option("--out", out, "output file (default stdout)");
  exp->add_option("--format", format, "json or text")->check(CLI::IsMember({"json", "text"}));

  std::string reference, tolerances, actual;
  auto* ver = app.add_subcommand("verify", "Compare query tables against a reference within tolerances");
  ver->add_option("--reference", reference, "reference table file")->required()->check(CLI::ExistingFile);
  ver->add_option("--tolerances", tolerances, "tolerance file")->check(CLI::ExistingFile);
  ver->add_option("--actual", actual, "precomputed tables (default: run the experiments)")->check(CLI::ExistingFile);
  ver->add_option("--rollouts", rollouts, "rollouts per regime when running")->check(CLI::NonNegativeNumber);
  ver->add_option("--seed", seed, "master seed when running");

  std::string env, agent;
  int steps = 0;
  auto* sim = app.add_subcommand("simulate", "Roll out one agent and write the trace as JSON lines");
  sim->add_option("--env", env, "environment id")->required();
  sim->add_option("--agent", agent, "agent id")->required();
  sim->add_option("--seed", seed, "seed");
  sim->add_option("--steps", steps, "trace length (default: until termination)");
  sim->add_option("--out", out, "output file (default stdout)");

  std::string host = "127.0.0.1", data_dir;
  int port = 8080;
  auto* srv = app.add_subcommand("serve", "Serve the HTTP session API");
  srv->add_option("--port", port, "port");
  srv->add_option("--host", host, "bind address");
  srv->add_option("--data-dir", data_dir, std::string("request log directory (default $") +
                                              acw::Service::kDataDirEnv + ")");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? kOk : kUsage;
  }

  try {
    if (*exp) return cmd_experiment(name, rollouts, seed, out, format);
    if (*ver) return cmd_verify(reference, tolerances, actual, rollouts, seed);
    if (*sim) return cmd_simulate(env, agent, seed, steps, out);
    if (*srv) return cmd_serve(host, port, data_dir);
  } catch (const acw::ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kVerifyFailed;
  }
  return kUsage;
}
