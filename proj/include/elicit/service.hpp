#pragma once

#include "elicit/design_space.hpp"
#include "elicit/error.hpp"
#include "elicit/provider.hpp"
#include "elicit/session.hpp"

#include <nlohmann/json.hpp>

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

namespace elicit {

struct ServiceConfig {
  std::string host = "127.0.0.1";
  int port = 8080;
  std::string design_space_path;
  ProviderConfig provider;
  std::string store_dir;
  /// Sessions untouched this long are dropped from memory (not from disk).
  std::chrono::seconds idle_timeout{1800};
  /// Concurrent provider calls across all sessions.
  int provider_concurrency = 4;
  /// How long GET question waits for a question still being prepared.
  std::chrono::milliseconds question_wait{10000};
  /// Background threads preparing the next question.
  int prefetch_workers = 2;
  /// Seed for sessions created without one.
  std::uint64_t default_seed = 0;
  EngineConfig engine;
  /// Optional directory of static files served under "/".
  std::string static_dir;

  /// Throws Error{InvalidArgument}: bad port or limits, a design space that
  /// does not exist, or a store directory that cannot be created or written.
  void validate() const;
};

/// Human-editable JSON; paths are resolved against `base_dir`.
ServiceConfig service_config_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
ServiceConfig load_service_config(const std::string& path);

// ---------------------------------------------------------------------------
// Durable per-session event logs

/// One append-only `<id>.jsonl` file per session. Every append is flushed with
/// fdatasync before it returns. Logs that fail to replay are moved to
/// `quarantine/` next to a diagnostics file.
class SessionStore {
 public:
  explicit SessionStore(std::filesystem::path dir);

  const std::filesystem::path& dir() const noexcept { return dir_; }
  std::filesystem::path log_path(const std::string& id) const;
  bool exists(const std::string& id) const;
  /// Ids with a log file, sorted.
  std::vector<std::string> session_ids() const;
  std::vector<std::string> quarantined_ids() const;
  std::string read(const std::string& id) const;
  /// Throws Error{InvalidArgument} on an I/O failure.
  void append(const std::string& id, const std::string& line);
  void quarantine(const std::string& id, const std::string& diagnostics);

 private:
  std::filesystem::path dir_;
};

// ---------------------------------------------------------------------------
// Transport-independent request handling

struct HttpRequest {
  std::string method;
  std::string path;
  std::map<std::string, std::string> query;
  std::string body;
};

struct HttpResponse {
  int status = 200;
  std::string content_type = "application/json";
  std::string body;
  std::map<std::string, std::string> headers;

  nlohmann::json json() const;
};

/// HTTP status for an error code.
int http_status(ErrorCode code);

struct RecoveryReport {
  std::vector<std::string> loaded;
  /// Session id -> diagnostics.
  std::map<std::string, std::string> quarantined;
};

/// Owns sessions, their logs and the prefetch workers. Requests for different
/// sessions run concurrently; requests for one session are serialized.
class Service {
 public:
  /// Recovers every session found in the store. `provider` is shared by all
  /// sessions and wrapped in a gate of `config.provider_concurrency` slots.
  Service(ServiceConfig config, std::shared_ptr<const DesignSpace> space, std::shared_ptr<Provider> provider);
  /// Loads the design space and builds the provider described by `config`.
  explicit Service(ServiceConfig config);
  ~Service();

  Service(const Service&) = delete;
  Service& operator=(const Service&) = delete;

  HttpResponse handle(const HttpRequest& request);

  const RecoveryReport& recovery() const noexcept { return recovery_; }
  const ServiceConfig& config() const noexcept { return config_; }
  std::size_t resident_sessions() const;
  /// Drops idle sessions from memory; returns how many went.
  std::size_t evict_idle(std::chrono::steady_clock::time_point now = std::chrono::steady_clock::now());
  /// Blocks until no prefetch is queued or running.
  void wait_for_prefetch();

 private:
  struct Entry;
  using Clock = std::chrono::steady_clock;

  std::shared_ptr<Entry> find(const std::string& id);
  std::shared_ptr<Entry> load(const std::string& id);
  std::string next_id();
  Session::Sink sink_for(const std::string& id);
  void schedule_prefetch(const std::shared_ptr<Entry>& entry);
  void prepare_question(Entry& entry);
  void prefetch_loop(std::stop_token stop);
  void recover();
  void maybe_evict();

  HttpResponse create_session(const HttpRequest& request);
  HttpResponse list_sessions();
  HttpResponse session_route(const std::string& id, const std::string& action, const HttpRequest& request);
  HttpResponse get_question(const std::shared_ptr<Entry>& entry);

  ServiceConfig config_;
  std::shared_ptr<const DesignSpace> space_;
  std::shared_ptr<Provider> provider_;
  SessionStore store_;
  RecoveryReport recovery_;

  mutable std::mutex sessions_mutex_;
  std::map<std::string, std::shared_ptr<Entry>> sessions_;
  std::uint64_t id_counter_ = 0;
  std::atomic<Clock::rep> last_sweep_{0};

  std::mutex queue_mutex_;
  std::condition_variable_any queue_cv_;
  std::condition_variable idle_cv_;
  std::deque<std::shared_ptr<Entry>> queue_;
  std::size_t in_flight_ = 0;
  std::vector<std::jthread> workers_;
};

// ---------------------------------------------------------------------------
// HTTP adapter

/// Serves a Service over HTTP/1.1 on its own thread pool.
class HttpServer {
 public:
  explicit HttpServer(Service& service);
  ~HttpServer();

  /// Binds and starts listening in the background. Port 0 picks a free port.
  /// Throws Error{InvalidArgument} when the address cannot be bound.
  int start(const std::string& host, int port);
  /// Blocks until stop() is called from another thread or a signal handler.
  void wait();
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace elicit
