#include "elicit/service.hpp"

#include "elicit/error.hpp"
#include "elicit/graph_codec.hpp"
#include "elicit/question_codec.hpp"
#include "json_util.hpp"

#include <spdlog/spdlog.h>

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <cstring>
#include <fstream>
#include <regex>
#include <sstream>

namespace elicit {

using namespace detail;
namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Configuration

void ServiceConfig::validate() const {
  auto fail = [](const std::string& m) { throw Error(ErrorCode::InvalidArgument, "service config: " + m); };
  if (port < 0 || port > 65535) fail("port must be in [0, 65535]");
  if (provider_concurrency < 1) fail("provider_concurrency must be at least 1");
  if (prefetch_workers < 0) fail("prefetch_workers must not be negative");
  if (idle_timeout.count() <= 0) fail("idle timeout must be positive");
  if (question_wait.count() < 0) fail("question wait must not be negative");
  if (design_space_path.empty() || !fs::is_regular_file(design_space_path)) {
    fail("design space '" + design_space_path + "' does not exist");
  }
  if (store_dir.empty()) fail("store directory is not set");
  std::error_code ec;
  fs::create_directories(store_dir, ec);
  if (!fs::is_directory(store_dir)) fail("store directory '" + store_dir + "' cannot be created");
  if (::access(store_dir.c_str(), W_OK) != 0) fail("store directory '" + store_dir + "' is not writable");
  if (!static_dir.empty() && !fs::is_directory(static_dir)) fail("static directory '" + static_dir + "' does not exist");
  provider.validate();
  engine.validate();
}

ServiceConfig service_config_from_json(const json& j, const fs::path& base_dir) {
  if (!j.is_object()) parse_fail("service config must be an object");
  auto resolve = [&](const std::string& p) {
    if (p.empty() || fs::path(p).is_absolute() || base_dir.empty()) return p;
    return (base_dir / p).lexically_normal().string();
  };
  auto integer = [&](const json& obj, const char* name, long long fallback) {
    if (!obj.contains(name)) return fallback;
    const json& v = obj.at(name);
    if (!v.is_number_integer()) parse_fail(std::string("'") + name + "' must be an integer");
    return v.get<long long>();
  };

  ServiceConfig c;
  if (j.contains("listen")) {
    const json& listen = field(j, "listen");
    c.host = string_or(listen, "host", c.host);
    c.port = static_cast<int>(integer(listen, "port", c.port));
  }
  c.design_space_path = resolve(string_field(j, "design_space"));
  c.store_dir = resolve(string_field(j, "store_dir"));
  c.static_dir = resolve(string_or(j, "static_dir", ""));
  c.idle_timeout = std::chrono::seconds(integer(j, "idle_timeout_seconds", c.idle_timeout.count()));
  c.provider_concurrency = static_cast<int>(integer(j, "provider_concurrency", c.provider_concurrency));
  c.question_wait = std::chrono::milliseconds(integer(j, "question_wait_ms", c.question_wait.count()));
  c.prefetch_workers = static_cast<int>(integer(j, "prefetch_workers", c.prefetch_workers));
  const long long seed = integer(j, "default_seed", 0);
  if (seed < 0) parse_fail("'default_seed' must not be negative");
  c.default_seed = static_cast<std::uint64_t>(seed);
  if (j.contains("provider")) {
    c.provider = provider_config_from_json(j.at("provider"));
    c.provider.prompt_dir = resolve(c.provider.prompt_dir);
    c.provider.lexicon_path = resolve(c.provider.lexicon_path);
  }
  if (j.contains("engine")) c.engine = engine_config_from_json(j.at("engine"));
  return c;
}

ServiceConfig load_service_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) parse_fail("cannot open service config '" + path + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  return service_config_from_json(parse_json(buf.str(), "service config"), fs::path(path).parent_path());
}

// ---------------------------------------------------------------------------
// Store

namespace {

constexpr const char* kLogExtension = ".jsonl";
constexpr const char* kQuarantineDir = "quarantine";

bool valid_session_id(const std::string& id) {
  static const std::regex pattern("[A-Za-z0-9_-]{1,64}");
  return std::regex_match(id, pattern);
}

void sync_directory(const fs::path& dir) {
  int fd = ::open(dir.c_str(), O_RDONLY | O_DIRECTORY);
  if (fd < 0) return;
  ::fsync(fd);
  ::close(fd);
}

std::vector<std::string> ids_in(const fs::path& dir) {
  std::vector<std::string> out;
  std::error_code ec;
  for (const auto& entry : fs::directory_iterator(dir, ec)) {
    if (entry.is_regular_file() && entry.path().extension() == kLogExtension) {
      out.push_back(entry.path().stem().string());
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace

SessionStore::SessionStore(fs::path dir) : dir_(std::move(dir)) {
  std::error_code ec;
  fs::create_directories(dir_, ec);
  if (!fs::is_directory(dir_)) {
    throw Error(ErrorCode::InvalidArgument, "cannot create session store '" + dir_.string() + "'");
  }
}

fs::path SessionStore::log_path(const std::string& id) const { return dir_ / (id + kLogExtension); }

bool SessionStore::exists(const std::string& id) const {
  return valid_session_id(id) && fs::is_regular_file(log_path(id));
}

std::vector<std::string> SessionStore::session_ids() const { return ids_in(dir_); }

std::vector<std::string> SessionStore::quarantined_ids() const { return ids_in(dir_ / kQuarantineDir); }

std::string SessionStore::read(const std::string& id) const {
  std::ifstream in(log_path(id), std::ios::binary);
  if (!in) throw Error(ErrorCode::UnknownSession, "no log for session '" + id + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void SessionStore::append(const std::string& id, const std::string& line) {
  const fs::path path = log_path(id);
  const bool fresh = !fs::exists(path);
  int fd = ::open(path.c_str(), O_WRONLY | O_APPEND | O_CREAT | O_CLOEXEC, 0644);
  if (fd < 0) throw Error(ErrorCode::InvalidArgument, "cannot open '" + path.string() + "': " + std::strerror(errno));
  std::size_t done = 0;
  while (done < line.size()) {
    ssize_t n = ::write(fd, line.data() + done, line.size() - done);
    if (n < 0) {
      if (errno == EINTR) continue;
      const int err = errno;
      ::close(fd);
      throw Error(ErrorCode::InvalidArgument, "cannot append to '" + path.string() + "': " + std::strerror(err));
    }
    done += static_cast<std::size_t>(n);
  }
  const int synced = ::fdatasync(fd);
  ::close(fd);
  if (synced != 0) throw Error(ErrorCode::InvalidArgument, "cannot sync '" + path.string() + "'");
  if (fresh) sync_directory(dir_);
}

void SessionStore::quarantine(const std::string& id, const std::string& diagnostics) {
  const fs::path qdir = dir_ / kQuarantineDir;
  fs::create_directories(qdir);
  fs::rename(log_path(id), qdir / (id + kLogExtension));
  std::ofstream(qdir / (id + ".diagnostics.txt"), std::ios::trunc) << diagnostics << "\n";
  sync_directory(qdir);
  sync_directory(dir_);
}

// ---------------------------------------------------------------------------
// Responses

json HttpResponse::json() const { return nlohmann::json::parse(body); }

int http_status(ErrorCode code) {
  switch (code) {
    case ErrorCode::UnknownSession: return 404;
    case ErrorCode::StaleQuestion:
    case ErrorCode::StageViolation:
    case ErrorCode::BudgetExhausted: return 409;
    case ErrorCode::ProviderFailure:
    case ErrorCode::Timeout:
    case ErrorCode::SchemaViolation:
    case ErrorCode::AnnotatorFailure: return 502;
    case ErrorCode::InvariantViolation:
    case ErrorCode::CorruptLog: return 500;
    default: return 422;
  }
}

namespace {

HttpResponse json_response(int status, const json& body) {
  HttpResponse r;
  r.status = status;
  r.body = body.dump();
  return r;
}

HttpResponse error_response(int status, std::string_view code, const std::string& message) {
  json body = {{"error", code}, {"message", message}};
  if (status == 502) {
    body["reason"] = code;
    body["retryable"] = true;
  }
  return json_response(status, body);
}

HttpResponse error_response(const Error& e) { return error_response(http_status(e.code()), to_string(e.code()), e.what()); }

json parse_body(const HttpRequest& request) {
  json j = json::parse(request.body, nullptr, false);
  if (j.is_discarded()) throw Error(ErrorCode::ParseError, "request body is not valid JSON");
  return j;
}

json termination_json(const SessionState& s) {
  json j = {{"terminated", s.terminated.has_value()}};
  if (s.terminated) {
    j["reason"] = to_string(*s.terminated);
    j["note"] = s.termination_note;
  }
  return j;
}

json summary_json(const SessionState& s) {
  json j = {{"session_id", s.id},
            {"goal", s.goal},
            {"seed", s.seed},
            {"stage", to_string(s.stage)},
            {"mode", to_string(s.mode)},
            {"questions_asked", s.questions_asked},
            {"budget", kQuestionBudget},
            {"requirements", s.requirements},
            {"labels", labels_to_json(s.labels)},
            {"pending_question", s.pending ? question_to_json(*s.pending) : json(nullptr)}};
  j.update(termination_json(s));
  return j;
}

json created_json(const SessionState& s) {
  json actions = json::array();
  for (const auto& [id, a] : s.initial_actions) {
    actions.push_back({{"id", id}, {"kind", to_string(a.kind)}, {"label", a.label}});
  }
  return {{"session_id", s.id},
          {"stage", to_string(s.stage)},
          {"requirements", s.requirements},
          {"data_actions", actions},
          {"labels", labels_to_json(s.labels)},
          {"initial_graph", graph_snapshot(s.graph)}};
}

std::vector<std::string> requirements_body(const json& j) {
  const json& list = j.is_array() ? j : field(j, "requirements");
  if (!list.is_array()) parse_fail("'requirements' must be an array of strings");
  std::vector<std::string> out;
  for (const auto& r : list) {
    if (!r.is_string()) parse_fail("'requirements' must be an array of strings");
    out.push_back(r.get<std::string>());
  }
  return out;
}

}  // namespace

// ---------------------------------------------------------------------------
// Service

struct Service::Entry {
  std::string id;
  std::mutex mutex;
  std::optional<Session> session;
  std::atomic<Clock::rep> last_used{0};

  std::mutex flag_mutex;
  std::condition_variable flag_cv;
  bool prefetching = false;

  void touch() { last_used = Clock::now().time_since_epoch().count(); }
};

Service::Service(ServiceConfig config, std::shared_ptr<const DesignSpace> space, std::shared_ptr<Provider> provider)
    : config_(std::move(config)),
      space_(std::move(space)),
      store_(config_.store_dir) {
  if (!space_ || !provider) throw Error(ErrorCode::InvalidArgument, "service needs a design space and a provider");
  provider_ = std::make_shared<ProviderGate>(
      std::move(provider), std::make_shared<ProviderGate::Semaphore>(config_.provider_concurrency));
  recover();
  for (int i = 0; i < config_.prefetch_workers; ++i) {
    workers_.emplace_back([this](std::stop_token stop) { prefetch_loop(stop); });
  }
}

Service::Service(ServiceConfig config)
    : Service(
          [&] {
            config.validate();
            return config;
          }(),
          std::make_shared<const DesignSpace>(load_design_space(config.design_space_path)),
          make_provider(config.provider)) {}

Service::~Service() {
  for (auto& w : workers_) w.request_stop();
  queue_cv_.notify_all();
  workers_.clear();
}

void Service::recover() {
  std::uint64_t highest = 0;
  auto note_id = [&](const std::string& id) {
    if (id.size() > 1 && id[0] == 's' && std::all_of(id.begin() + 1, id.end(), ::isdigit) && id.size() < 19) {
      highest = std::max<std::uint64_t>(highest, std::stoull(id.substr(1)));
    }
  };
  for (const auto& id : store_.quarantined_ids()) note_id(id);
  for (const auto& id : store_.session_ids()) {
    note_id(id);
    try {
      auto events = read_session_log(store_.read(id));
      auto entry = std::make_shared<Entry>();
      entry->id = id;
      entry->session.emplace(Session::restore(events, space_, provider_, config_.engine, sink_for(id)));
      if (entry->session->id() != id) {
        throw Error(ErrorCode::CorruptLog, "log names session '" + entry->session->id() + "'");
      }
      entry->touch();
      sessions_.emplace(id, std::move(entry));
      recovery_.loaded.push_back(id);
    } catch (const Error& e) {
      spdlog::warn("quarantining session {}: {}", id, e.what());
      store_.quarantine(id, std::string(to_string(e.code())) + ": " + e.what());
      recovery_.quarantined.emplace(id, e.what());
    }
  }
  id_counter_ = highest;
  if (!recovery_.loaded.empty() || !recovery_.quarantined.empty()) {
    spdlog::info("recovered {} session(s), quarantined {}", recovery_.loaded.size(), recovery_.quarantined.size());
  }
}

Session::Sink Service::sink_for(const std::string& id) {
  return [this, id](const SessionEvent& e) { store_.append(id, session_event_line(e)); };
}

std::string Service::next_id() {
  std::lock_guard lock(sessions_mutex_);
  char buf[32];
  std::snprintf(buf, sizeof buf, "s%06llu", static_cast<unsigned long long>(++id_counter_));
  return buf;
}

std::size_t Service::resident_sessions() const {
  std::lock_guard lock(sessions_mutex_);
  return sessions_.size();
}

std::shared_ptr<Service::Entry> Service::find(const std::string& id) {
  std::lock_guard lock(sessions_mutex_);
  auto it = sessions_.find(id);
  if (it != sessions_.end()) {
    it->second->touch();
    return it->second;
  }
  if (!store_.exists(id)) throw Error(ErrorCode::UnknownSession, "unknown session '" + id + "'");
  return load(id);
}

// Caller holds sessions_mutex_.
std::shared_ptr<Service::Entry> Service::load(const std::string& id) {
  auto entry = std::make_shared<Entry>();
  entry->id = id;
  try {
    auto events = read_session_log(store_.read(id));
    entry->session.emplace(Session::restore(events, space_, provider_, config_.engine, sink_for(id)));
  } catch (const Error& e) {
    if (e.code() != ErrorCode::CorruptLog && e.code() != ErrorCode::ParseError) throw;
    spdlog::warn("quarantining session {}: {}", id, e.what());
    store_.quarantine(id, std::string(to_string(e.code())) + ": " + e.what());
    throw Error(ErrorCode::UnknownSession, "session '" + id + "' was quarantined: " + e.what());
  }
  entry->touch();
  sessions_.emplace(id, entry);
  return entry;
}

std::size_t Service::evict_idle(Clock::time_point now) {
  std::lock_guard lock(sessions_mutex_);
  const auto cutoff = (now - config_.idle_timeout).time_since_epoch().count();
  std::size_t evicted = 0;
  for (auto it = sessions_.begin(); it != sessions_.end();) {
    Entry& e = *it->second;
    bool busy;
    {
      std::lock_guard flag(e.flag_mutex);
      busy = e.prefetching;
    }
    // use_count 1: no request or worker holds the entry, and none can pick it
    // up without sessions_mutex_.
    if (!busy && it->second.use_count() == 1 && e.last_used.load() <= cutoff) {
      it = sessions_.erase(it);
      ++evicted;
    } else {
      ++it;
    }
  }
  return evicted;
}

void Service::schedule_prefetch(const std::shared_ptr<Entry>& entry) {
  if (workers_.empty()) {
    // Same point in the log as a worker would commit it; the caller holds the lock.
    prepare_question(*entry);
    return;
  }
  {
    std::lock_guard flag(entry->flag_mutex);
    if (entry->prefetching) return;
    entry->prefetching = true;
  }
  {
    std::lock_guard lock(queue_mutex_);
    queue_.push_back(entry);
    ++in_flight_;
  }
  queue_cv_.notify_one();
}

void Service::prepare_question(Entry& entry) {
  if (!entry.session) return;
  const SessionState& s = entry.session->state();
  if (s.stage != Stage::QuestionLoop || s.terminated || s.pending) return;
  try {
    entry.session->next_question();
  } catch (const std::exception& e) {
    // The request that asks for the question will retry and report.
    spdlog::warn("prefetch for session {} failed: {}", entry.id, e.what());
  }
}

void Service::prefetch_loop(std::stop_token stop) {
  while (true) {
    std::shared_ptr<Entry> entry;
    {
      std::unique_lock lock(queue_mutex_);
      if (!queue_cv_.wait(lock, stop, [&] { return !queue_.empty(); })) return;
      entry = std::move(queue_.front());
      queue_.pop_front();
    }
    {
      std::lock_guard lock(entry->mutex);
      prepare_question(*entry);
    }
    {
      std::lock_guard flag(entry->flag_mutex);
      entry->prefetching = false;
    }
    entry->flag_cv.notify_all();
    entry.reset();
    {
      std::lock_guard lock(queue_mutex_);
      --in_flight_;
    }
    idle_cv_.notify_all();
  }
}

void Service::wait_for_prefetch() {
  std::unique_lock lock(queue_mutex_);
  idle_cv_.wait(lock, [&] { return in_flight_ == 0; });
}

void Service::maybe_evict() {
  const auto now = Clock::now();
  const auto period = std::chrono::duration_cast<Clock::duration>(config_.idle_timeout / 4 + std::chrono::seconds(1));
  auto last = last_sweep_.load();
  if (now.time_since_epoch().count() - last < period.count()) return;
  if (!last_sweep_.compare_exchange_strong(last, now.time_since_epoch().count())) return;
  evict_idle(now);
}

HttpResponse Service::handle(const HttpRequest& request) {
  maybe_evict();
  try {
    static const std::regex session_path("^/sessions/([^/]+)(?:/([a-z-]+))?/?$");
    std::smatch m;
    const std::string& path = request.path;
    if (path == "/health" && request.method == "GET") return json_response(200, {{"status", "ok"}});
    if (path == "/sessions" || path == "/sessions/") {
      if (request.method == "POST") return create_session(request);
      if (request.method == "GET") return list_sessions();
      return error_response(405, "MethodNotAllowed", request.method + " " + path);
    }
    if (std::regex_match(path, m, session_path)) {
      const std::string id = m[1].str();
      if (!valid_session_id(id)) throw Error(ErrorCode::UnknownSession, "unknown session '" + id + "'");
      return session_route(id, m[2].matched ? m[2].str() : "", request);
    }
    return error_response(404, "NotFound", "no route for " + request.method + " " + path);
  } catch (const Error& e) {
    return error_response(e);
  } catch (const json::exception& e) {
    return error_response(422, to_string(ErrorCode::ParseError), e.what());
  } catch (const std::exception& e) {
    spdlog::error("{} {} failed: {}", request.method, request.path, e.what());
    return error_response(500, "InternalError", e.what());
  }
}

HttpResponse Service::list_sessions() {
  json sessions = json::array();
  for (const auto& id : store_.session_ids()) sessions.push_back(id);
  json quarantined = json::array();
  for (const auto& id : store_.quarantined_ids()) quarantined.push_back(id);
  return json_response(200, {{"sessions", sessions}, {"quarantined", quarantined}});
}

HttpResponse Service::create_session(const HttpRequest& request) {
  json body = parse_body(request);
  const std::string goal = string_field(body, "goal");
  std::uint64_t seed = config_.default_seed;
  if (body.contains("seed")) {
    const json& s = body.at("seed");
    if (!s.is_number_unsigned() && !(s.is_number_integer() && s.get<std::int64_t>() >= 0)) {
      parse_fail("'seed' must be a non-negative integer");
    }
    seed = s.get<std::uint64_t>();
  }
  if (goal.find_first_not_of(" \t\r\n") == std::string::npos) {
    throw Error(ErrorCode::InvalidArgument, "design goal is empty");
  }
  const std::string id = next_id();
  auto entry = std::make_shared<Entry>();
  entry->id = id;
  entry->touch();
  std::lock_guard lock(entry->mutex);
  entry->session.emplace(id, goal, seed, space_, provider_, config_.engine, sink_for(id));
  {
    std::lock_guard map_lock(sessions_mutex_);
    sessions_.emplace(id, entry);
  }
  try {
    entry->session->start();
  } catch (const Error& e) {
    HttpResponse r = error_response(e);
    json j = json::parse(r.body);
    j["session_id"] = id;
    r.body = j.dump();
    return r;
  }
  return json_response(201, created_json(entry->session->state()));
}

HttpResponse Service::get_question(const std::shared_ptr<Entry>& entry) {
  {
    std::unique_lock flag(entry->flag_mutex);
    if (!entry->flag_cv.wait_for(flag, config_.question_wait, [&] { return !entry->prefetching; })) {
      HttpResponse r = json_response(503, {{"error", "NotReady"},
                                           {"message", "the next question is still being prepared"},
                                           {"retryable", true}});
      r.headers["Retry-After"] = "1";
      return r;
    }
  }
  std::lock_guard lock(entry->mutex);
  Session& s = *entry->session;
  NextResult next = s.next_question();
  json body = {{"questions_asked", s.state().questions_asked}, {"budget", kQuestionBudget},
               {"mode", to_string(s.state().mode)}};
  if (const auto* q = std::get_if<Question>(&next)) {
    body["terminated"] = false;
    body["question"] = question_to_json(*q);
  } else {
    body.update(termination_json(s.state()));
  }
  return json_response(200, body);
}

HttpResponse Service::session_route(const std::string& id, const std::string& action, const HttpRequest& request) {
  std::shared_ptr<Entry> entry = find(id);
  const std::string& method = request.method;
  auto not_allowed = [&] { return error_response(405, "MethodNotAllowed", method + " " + request.path); };

  if (action == "question") {
    if (method != "GET") return not_allowed();
    return get_question(entry);
  }

  // A queued prefetch lands before any other request so the log order does not
  // depend on worker timing. Provider calls are bounded by their own timeouts.
  {
    std::unique_lock flag(entry->flag_mutex);
    entry->flag_cv.wait(flag, [&] { return !entry->prefetching; });
  }
  std::lock_guard lock(entry->mutex);
  Session& s = *entry->session;
  const SessionState& st = s.state();

  if (action.empty()) {
    if (method != "GET") return not_allowed();
    return json_response(200, summary_json(st));
  }
  if (action == "start") {
    if (method != "POST") return not_allowed();
    s.start();
    return json_response(200, created_json(st));
  }
  if (action == "requirements") {
    if (method != "PUT") return not_allowed();
    s.set_requirements(requirements_body(parse_body(request)));
    schedule_prefetch(entry);
    return json_response(200, {{"stage", to_string(st.stage)},
                               {"requirements", st.requirements},
                               {"labels", labels_to_json(st.labels)}});
  }
  if (action == "answer") {
    if (method != "POST") return not_allowed();
    Answer answer = answer_from_json(parse_body(request));
    GraphDelta delta = s.submit_answer(answer);
    schedule_prefetch(entry);
    json events = json::array();
    for (const auto& e : delta.events) events.push_back(event_to_json(e));
    json body = {{"graph_delta", {{"events", events}, {"rebuilt", delta.rebuilt}}},
                 {"questions_asked", st.questions_asked},
                 {"stage", to_string(st.stage)}};
    body.update(termination_json(st));
    return json_response(200, body);
  }
  if (action == "mode") {
    if (method != "POST") return not_allowed();
    json body = parse_body(request);
    const std::string text = body.is_string() ? body.get<std::string>() : string_field(body, "mode");
    auto mode = parse_mode(text);
    if (!mode) parse_fail("unknown mode '" + text + "' (expected auto, explore or exploit)");
    s.set_mode(*mode);
    schedule_prefetch(entry);
    return json_response(200, {{"mode", to_string(st.mode)}, {"pending_question", st.pending.has_value()}});
  }
  if (action == "stop" || action == "resume") {
    if (method != "POST") return not_allowed();
    if (action == "stop") {
      s.stop();
    } else {
      s.resume();
      schedule_prefetch(entry);
    }
    json body = {{"stage", to_string(st.stage)}, {"questions_asked", st.questions_asked}};
    body.update(termination_json(st));
    return json_response(200, body);
  }
  if (action == "representation") {
    if (method != "GET") return not_allowed();
    json highlight = st.pending ? json(st.pending->target_node) : json(nullptr);
    return json_response(200, {{"session_id", st.id},
                               {"stage", to_string(st.stage)},
                               {"highlight", highlight},
                               {"graph", graph_snapshot(st.graph)}});
  }
  if (action == "assessment") {
    if (method == "POST") return json_response(200, {{"rows", rows_to_json(s.build_assessment())}});
    if (method == "PATCH") {
      s.edit_assessment(edit_from_json(parse_body(request)));
      return json_response(200, {{"rows", rows_to_json(*st.assessment)}});
    }
    if (method == "GET") {
      if (!st.assessment) throw Error(ErrorCode::StageViolation, "no assessment has been built");
      return json_response(200, {{"rows", rows_to_json(*st.assessment)}});
    }
    return not_allowed();
  }
  if (action == "export") {
    if (method != "GET") return not_allowed();
    auto it = request.query.find("format");
    const std::string text = it == request.query.end() ? "csv" : it->second;
    auto format = parse_export_format(text);
    if (!format) parse_fail("unknown export format '" + text + "' (expected csv or xlsx)");
    HttpResponse r;
    r.body = s.export_worksheet(*format);
    r.content_type = std::string(content_type(*format));
    r.headers["Content-Disposition"] = "attachment; filename=\"" + id + "." + std::string(to_string(*format)) + "\"";
    return r;
  }
  if (action == "events") {
    if (method != "GET") return not_allowed();
    json events = json::array();
    for (const auto& e : s.events()) events.push_back(session_event_to_json(e));
    return json_response(200, {{"events", events}});
  }
  return error_response(404, "NotFound", "no route for " + method + " " + request.path);
}

}  // namespace elicit
