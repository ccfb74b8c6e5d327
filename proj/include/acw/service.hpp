#pragma once

#include <atomic>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <thread>
#include <variant>
#include <vector>

#include <json.hpp>

#include "acw/causal_engine.hpp"
#include "acw/estimation.hpp"
#include "acw/simulator.hpp"

namespace acw {

struct Response {
  int status = 200;
  nlohmann::json body;
};

/// Session service behind the HTTP API. `handle` is transport-independent so the request
/// log can be replayed without a socket. State-changing requests are appended to
/// `<data_dir>/requests.jsonl` and replayed on construction.
class Service {
 public:
  static constexpr const char* kDataDirEnv = "ACW_STATE_DIR";
  static constexpr const char* kRequestKeyHeader = "Idempotency-Key";

  /// Without a data directory nothing is persisted.
  explicit Service(std::optional<std::filesystem::path> data_dir = std::nullopt);
  ~Service();
  Service(const Service&) = delete;
  Service& operator=(const Service&) = delete;

  Response handle(const std::string& method, const std::string& path, const std::string& body,
                  const std::string& request_key = {});

  /// Blocks until every background collection job has finished.
  void wait_idle();

 private:
  struct Session {
    std::string id;
    System system;
    Seed seed;
    std::string created_at;
    std::string root;
    TraceStore traces;
    std::vector<std::string> order;
    std::mutex write;
  };
  struct Job {
    std::string id;
    std::string tree_id;
    std::string status = "running";
    std::string error;
  };
  using ModelEntry = std::variant<ScmModel, Hypotheses>;

  Response execute(const std::string& method, const std::string& path, const std::string& body, bool replaying);
  Response dispatch(const std::string& method, const std::vector<std::string>& parts, const nlohmann::json& body,
                    bool replaying);
  Response create_session(const nlohmann::json& body);
  Response list_traces(Session& s);
  Response get_trace(Session& s, const std::string& tid);
  Response extend_trace(Session& s, const std::string& tid, const nlohmann::json& body);
  Response intervene_trace(Session& s, const std::string& tid, const nlohmann::json& body);
  Response start_collect(Session& s, const nlohmann::json& body, bool replaying);
  Response create_model(const nlohmann::json& body);
  Response query_model(const std::string& id, const nlohmann::json& body);
  Response run_experiment_request(const std::string& name, const nlohmann::json& body);

  std::shared_ptr<Session> session(const std::string& id);
  std::string next_id(const char* prefix);
  void log_request(const std::string& method, const std::string& path, const std::string& body,
                   const std::string& key);
  void replay_log();

  std::optional<std::filesystem::path> dir_;
  std::mutex log_mutex_;
  std::shared_mutex state_;
  std::map<std::string, std::shared_ptr<Session>> sessions_;
  std::map<std::string, std::shared_ptr<const RolloutTree>> trees_;
  std::map<std::string, std::shared_ptr<Job>> jobs_;
  std::map<std::string, std::shared_ptr<const ModelEntry>> models_;
  std::map<std::string, Response> idempotent_;
  std::map<std::string, long> counters_;
  std::vector<std::thread> workers_;
  std::mutex workers_mutex_;
};

/// HTTP front end over a Service.
class HttpServer {
 public:
  explicit HttpServer(Service& service);
  ~HttpServer();

  /// Binds and serves on a background thread; port 0 picks a free port. Returns the port.
  int start(const std::string& host, int port);
  /// Binds and serves on the calling thread.
  bool listen(const std::string& host, int port);
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace acw
