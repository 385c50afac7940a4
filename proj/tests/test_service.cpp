#include "elicit/error.hpp"
#include "elicit/service.hpp"
#include "support/fixtures.hpp"

#include <gtest/gtest.h>
#include <httplib.h>
#include <nlohmann/json.hpp>

#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <atomic>
#include <barrier>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <thread>

namespace elicit {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;
using testing::data_path;
using testing::kZoomGoal;

fs::path fresh_dir(const std::string& name) {
  static std::atomic<int> counter{0};
  fs::path p = fs::temp_directory_path() /
               ("elicit_service_" + name + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::shared_ptr<const DesignSpace> space() {
  static const auto s = std::make_shared<const DesignSpace>(testing::seed_space());
  return s;
}

ServiceConfig config_for(const fs::path& store) {
  ServiceConfig c;
  c.design_space_path = data_path("seed_design_space.json");
  c.store_dir = store.string();
  c.provider.lexicon_path = data_path("stub_lexicon.json");
  c.question_wait = std::chrono::milliseconds(5000);
  return c;
}

std::unique_ptr<Service> make_service(const fs::path& store, std::shared_ptr<Provider> provider = nullptr,
                                      ServiceConfig config = {}) {
  if (config.store_dir.empty()) config = config_for(store);
  return std::make_unique<Service>(config, space(), provider ? provider : testing::checked_stub());
}

HttpResponse call(Service& s, const std::string& method, const std::string& path, const json& body = nullptr,
                  std::map<std::string, std::string> query = {}) {
  return s.handle({method, path, std::move(query), body.is_null() ? "" : body.dump()});
}

std::string create(Service& s, const std::string& goal = kZoomGoal) {
  HttpResponse r = call(s, "POST", "/sessions", {{"goal", goal}});
  EXPECT_EQ(r.status, 201) << r.body;
  return r.json()["session_id"];
}

// Creates a session and accepts its requirements as proposed.
std::string open_loop(Service& s) {
  std::string id = create(s);
  json state = call(s, "GET", "/sessions/" + id).json();
  HttpResponse r = call(s, "PUT", "/sessions/" + id + "/requirements", {{"requirements", state["requirements"]}});
  EXPECT_EQ(r.status, 200) << r.body;
  return id;
}

json question(Service& s, const std::string& id) {
  HttpResponse r = call(s, "GET", "/sessions/" + id + "/question");
  EXPECT_EQ(r.status, 200) << r.body;
  return r.json();
}

HttpResponse answer(Service& s, const std::string& id, const json& q, std::size_t option = 0) {
  return call(s, "POST", "/sessions/" + id + "/answer",
              {{"question_id", q["id"]}, {"response", {{"selected", {option}}}}});
}

// Answers first options until the session terminates or `limit` answers.
std::vector<std::string> drive(Service& s, const std::string& id, int limit) {
  std::vector<std::string> asked;
  for (int i = 0; i < limit; ++i) {
    json q = question(s, id);
    if (q["terminated"]) break;
    asked.push_back(q["question"].dump());
    HttpResponse r = answer(s, id, q["question"]);
    EXPECT_EQ(r.status, 200) << r.body;
  }
  return asked;
}

std::size_t log_lines(const fs::path& store, const std::string& id) {
  std::ifstream in(store / (id + ".jsonl"));
  std::size_t n = 0;
  for (std::string line; std::getline(in, line);) n += !line.empty();
  return n;
}

// ---------------------------------------------------------------------------

TEST(ServiceConfigTest, ParsesAndResolvesRelativePaths) {
  fs::path dir = fresh_dir("config");
  json j = {{"listen", {{"host", "127.0.0.1"}, {"port", 9000}}},
            {"design_space", "space.json"},
            {"store_dir", "sessions"},
            {"idle_timeout_seconds", 60},
            {"provider_concurrency", 2},
            {"question_wait_ms", 250},
            {"provider", {{"backend", "stub"}, {"lexicon", "lexicon.json"}}},
            {"engine", {{"top_k", 5}}}};
  ServiceConfig c = service_config_from_json(j, dir);
  EXPECT_EQ(c.port, 9000);
  EXPECT_EQ(c.design_space_path, (dir / "space.json").string());
  EXPECT_EQ(c.store_dir, (dir / "sessions").string());
  EXPECT_EQ(c.provider.lexicon_path, (dir / "lexicon.json").string());
  EXPECT_EQ(c.idle_timeout, std::chrono::seconds(60));
  EXPECT_EQ(c.question_wait, std::chrono::milliseconds(250));
  EXPECT_EQ(c.engine.top_k, 5u);
  // The design space does not exist in `dir`.
  EXPECT_THROW(c.validate(), Error);
  c.design_space_path = data_path("seed_design_space.json");
  EXPECT_NO_THROW(c.validate());
  EXPECT_TRUE(fs::is_directory(dir / "sessions"));
  c.provider_concurrency = 0;
  EXPECT_THROW(c.validate(), Error);

  ServiceConfig bundled = load_service_config(std::string(ELICIT_SOURCE_DIR) + "/config.example.json");
  EXPECT_EQ(bundled.host, "127.0.0.1");
  EXPECT_TRUE(fs::is_regular_file(bundled.design_space_path));
  EXPECT_THROW(service_config_from_json(json{{"design_space", 3}}), Error);
}

TEST(SessionStoreTest, AppendsReadsAndQuarantines) {
  fs::path dir = fresh_dir("store");
  SessionStore store(dir);
  EXPECT_TRUE(store.session_ids().empty());
  store.append("a1", "{\"x\":1}\n");
  store.append("a1", "{\"x\":2}\n");
  store.append("b2", "{}\n");
  EXPECT_EQ(store.read("a1"), "{\"x\":1}\n{\"x\":2}\n");
  EXPECT_EQ(store.session_ids(), (std::vector<std::string>{"a1", "b2"}));
  EXPECT_FALSE(store.exists("../a1"));
  store.quarantine("b2", "broken");
  EXPECT_EQ(store.session_ids(), std::vector<std::string>{"a1"});
  EXPECT_EQ(store.quarantined_ids(), std::vector<std::string>{"b2"});
  EXPECT_TRUE(fs::exists(dir / "quarantine" / "b2.diagnostics.txt"));
}

TEST(ServiceTest, StatusMapping) {
  EXPECT_EQ(http_status(ErrorCode::UnknownSession), 404);
  EXPECT_EQ(http_status(ErrorCode::StaleQuestion), 409);
  EXPECT_EQ(http_status(ErrorCode::StageViolation), 409);
  EXPECT_EQ(http_status(ErrorCode::BudgetExhausted), 409);
  EXPECT_EQ(http_status(ErrorCode::ParseError), 422);
  EXPECT_EQ(http_status(ErrorCode::OptionOutOfRange), 422);
  EXPECT_EQ(http_status(ErrorCode::InvalidEdit), 422);
  EXPECT_EQ(http_status(ErrorCode::ProviderFailure), 502);
  EXPECT_EQ(http_status(ErrorCode::Timeout), 502);
  EXPECT_EQ(http_status(ErrorCode::SchemaViolation), 502);
}

TEST(ServiceTest, EmptyStoreStartsClean) {
  auto s = make_service(fresh_dir("empty"));
  EXPECT_TRUE(s->recovery().loaded.empty());
  EXPECT_TRUE(s->recovery().quarantined.empty());
  EXPECT_EQ(s->resident_sessions(), 0u);
  json list = call(*s, "GET", "/sessions").json();
  EXPECT_TRUE(list["sessions"].empty());
  EXPECT_EQ(call(*s, "GET", "/health").status, 200);
}

TEST(ServiceTest, CreateReturnsRequirementsAndInitialGraph) {
  auto s = make_service(fresh_dir("create"));
  HttpResponse r = call(*s, "POST", "/sessions", {{"goal", kZoomGoal}});
  ASSERT_EQ(r.status, 201) << r.body;
  json j = r.json();
  EXPECT_EQ(j["session_id"], "s000001");
  EXPECT_EQ(j["stage"], "requirements");
  EXPECT_FALSE(j["requirements"].empty());
  EXPECT_EQ(j["initial_graph"]["schema"], "elicit.graph");
  EXPECT_EQ(j["initial_graph"]["nodes"].size(), j["data_actions"].size());
  EXPECT_EQ(create(*s), "s000002");
}

TEST(ServiceTest, ErrorsMapToStatusCodes) {
  fs::path store = fresh_dir("errors");
  auto s = make_service(store);
  EXPECT_EQ(call(*s, "GET", "/sessions/nope").status, 404);
  EXPECT_EQ(call(*s, "GET", "/sessions/../../etc/question").status, 404);
  EXPECT_EQ(call(*s, "GET", "/elsewhere").status, 404);
  EXPECT_EQ(s->handle({"POST", "/sessions", {}, "{not json"}).status, 422);
  EXPECT_EQ(call(*s, "POST", "/sessions", {{"goal", "   "}}).status, 422);
  EXPECT_EQ(call(*s, "POST", "/sessions", {{"goal", "x"}, {"seed", -1}}).status, 422);

  std::string id = create(*s);
  // Questions only start after the requirements are confirmed.
  HttpResponse early = call(*s, "GET", "/sessions/" + id + "/question");
  EXPECT_EQ(early.status, 409);
  EXPECT_EQ(early.json()["error"], "StageViolation");
  EXPECT_EQ(call(*s, "PUT", "/sessions/" + id + "/requirements", {{"requirements", "one"}}).status, 422);
  EXPECT_EQ(call(*s, "PUT", "/sessions/" + id + "/requirements", json::array({"Track focus."})).status, 200);

  json q = question(*s, id)["question"];
  HttpResponse out_of_range = answer(*s, id, q, 99);
  EXPECT_EQ(out_of_range.status, 422);
  EXPECT_EQ(out_of_range.json()["error"], "OptionOutOfRange");
  EXPECT_EQ(call(*s, "POST", "/sessions/" + id + "/answer", {{"response", {{"selected", {0}}}}}).status, 422);
  EXPECT_EQ(call(*s, "POST", "/sessions/" + id + "/mode", {{"mode", "sideways"}}).status, 422);
  EXPECT_EQ(call(*s, "DELETE", "/sessions/" + id + "/mode").status, 405);
  ASSERT_EQ(answer(*s, id, q).status, 200);
  HttpResponse stale = answer(*s, id, q);
  EXPECT_EQ(stale.status, 409);
  EXPECT_EQ(stale.json()["error"], "StaleQuestion");
  EXPECT_EQ(call(*s, "POST", "/sessions/" + id + "/assessment").status, 409);
  EXPECT_EQ(call(*s, "GET", "/sessions/" + id + "/export", nullptr, {{"format", "csv"}}).status, 409);
  EXPECT_EQ(call(*s, "POST", "/sessions/" + id + "/stop").status, 200);
  EXPECT_EQ(call(*s, "GET", "/sessions/" + id + "/export", nullptr, {{"format", "pdf"}}).status, 422);
  EXPECT_EQ(call(*s, "PATCH", "/sessions/" + id + "/assessment", {{"type", "nonsense"}}).status, 422);
}

// Fails expand_requirements a set number of times.
class FlakyStart : public StubProvider {
 public:
  explicit FlakyStart(int failures) : StubProvider(testing::lexicon(), {}), failures_(failures) {}
  RequirementsResult expand_requirements(const std::string& goal) override {
    if (failures_-- > 0) throw ProviderError(ErrorCode::ProviderFailure, "model unavailable");
    return StubProvider::expand_requirements(goal);
  }

 private:
  std::atomic<int> failures_;
};

TEST(ServiceTest, ProviderFailureIs502AndStartCanBeRetried) {
  auto s = make_service(fresh_dir("flaky"), std::make_shared<CheckedProvider>(std::make_shared<FlakyStart>(1)));
  HttpResponse r = call(*s, "POST", "/sessions", {{"goal", kZoomGoal}});
  ASSERT_EQ(r.status, 502);
  json j = r.json();
  EXPECT_EQ(j["reason"], "ProviderFailure");
  EXPECT_EQ(j["retryable"], true);
  std::string id = j["session_id"];
  EXPECT_EQ(call(*s, "GET", "/sessions/" + id).json()["stage"], "goal_entry");
  HttpResponse retry = call(*s, "POST", "/sessions/" + id + "/start");
  ASSERT_EQ(retry.status, 200) << retry.body;
  EXPECT_EQ(retry.json()["stage"], "requirements");
  EXPECT_EQ(call(*s, "POST", "/sessions/" + id + "/start").status, 409);
}

TEST(ServiceTest, QuestionAfterHardLimitReportsTermination) {
  fs::path store = fresh_dir("limit");
  ServiceConfig c = config_for(store);
  c.default_seed = 2;
  auto s = make_service(store, testing::checked_stub(2), c);
  std::string id = open_loop(*s);
  EXPECT_EQ(drive(*s, id, 100).size(), kQuestionBudget);
  json q = question(*s, id);
  EXPECT_EQ(q["terminated"], true);
  EXPECT_EQ(q["reason"], "HardLimit");
  EXPECT_EQ(q["questions_asked"], kQuestionBudget);
  HttpResponse resume = call(*s, "POST", "/sessions/" + id + "/resume");
  EXPECT_EQ(resume.status, 409);
  EXPECT_EQ(resume.json()["error"], "BudgetExhausted");
}

TEST(ServiceTest, EveryResponseFollowsItsDurableEvent) {
  fs::path store = fresh_dir("wal");
  auto s = make_service(store, nullptr, [&] {
    ServiceConfig c = config_for(store);
    c.prefetch_workers = 0;
    return c;
  }());
  std::string id = open_loop(*s);
  auto events_now = [&] { return call(*s, "GET", "/sessions/" + id + "/events").json()["events"].size(); };
  for (int i = 0; i < 8; ++i) {
    json q = question(*s, id);
    EXPECT_EQ(log_lines(store, id), events_now());
    ASSERT_EQ(answer(*s, id, q["question"]).status, 200);
    EXPECT_EQ(log_lines(store, id), events_now());
  }
  EXPECT_EQ(call(*s, "POST", "/sessions/" + id + "/mode", {{"mode", "explore"}}).status, 200);
  EXPECT_EQ(log_lines(store, id), events_now());
}

TEST(ServiceTest, ModeSwitchAndRepresentationHighlight) {
  auto s = make_service(fresh_dir("mode"));
  std::string id = open_loop(*s);
  json q = question(*s, id)["question"];
  json rep = call(*s, "GET", "/sessions/" + id + "/representation").json();
  EXPECT_EQ(rep["highlight"], q["target_node"]);
  EXPECT_EQ(rep["graph"]["schema"], "elicit.graph");
  HttpResponse m = call(*s, "POST", "/sessions/" + id + "/mode", {{"mode", "exploit"}});
  ASSERT_EQ(m.status, 200);
  EXPECT_EQ(m.json()["mode"], "exploit");
  json next = question(*s, id);
  ASSERT_FALSE(next["terminated"]);
  EXPECT_EQ(next["question"]["kind"], "exploitative");
  EXPECT_EQ(next["mode"], "exploit");
}

TEST(ServiceTest, RevisionThroughTheApi) {
  auto s = make_service(fresh_dir("revise"));
  std::string id = open_loop(*s);
  json first;
  for (int i = 0, after = 0; i < 18 && after < 2; ++i) {
    json step = question(*s, id);
    if (step["terminated"]) break;
    json q = step["question"];
    if (!first.is_null()) ++after;
    if (q["kind"] == "exploitative" && first.is_null()) first = q;
    ASSERT_EQ(answer(*s, id, q).status, 200);
  }
  ASSERT_FALSE(first.is_null());
  HttpResponse r = call(*s, "POST", "/sessions/" + id + "/answer",
                        {{"question_id", first["id"]}, {"response", {{"selected", {1}}}}, {"revision", true}});
  ASSERT_EQ(r.status, 200) << r.body;
  json delta = r.json()["graph_delta"];
  ASSERT_FALSE(delta["events"].empty());
  EXPECT_EQ(delta["events"].back()["type"], "revise_decision");
}

TEST(ServiceTest, AssessmentEditAndExports) {
  auto s = make_service(fresh_dir("assess"));
  std::string id = open_loop(*s);
  drive(*s, id, 6);
  ASSERT_EQ(call(*s, "POST", "/sessions/" + id + "/stop").status, 200);
  HttpResponse built = call(*s, "POST", "/sessions/" + id + "/assessment");
  ASSERT_EQ(built.status, 200) << built.body;
  json rows = built.json()["rows"];
  ASSERT_FALSE(rows.empty());
  HttpResponse edited = call(*s, "PATCH", "/sessions/" + id + "/assessment",
                             {{"op", "set_cell"}, {"row", 0}, {"column", "specific_context"}, {"values", {"checked"}}});
  ASSERT_EQ(edited.status, 200) << edited.body;
  EXPECT_EQ(call(*s, "GET", "/sessions/" + id + "/assessment").json()["rows"], edited.json()["rows"]);

  HttpResponse csv = call(*s, "GET", "/sessions/" + id + "/export", nullptr, {{"format", "csv"}});
  ASSERT_EQ(csv.status, 200);
  EXPECT_EQ(csv.content_type, "text/csv; charset=utf-8");
  EXPECT_EQ(csv.body.rfind("Data Action,Data,Specific Context,Summary Issues", 0), 0u);
  EXPECT_EQ(csv.headers.at("Content-Disposition"), "attachment; filename=\"" + id + ".csv\"");
  HttpResponse xlsx = call(*s, "GET", "/sessions/" + id + "/export", nullptr, {{"format", "xlsx"}});
  ASSERT_EQ(xlsx.status, 200);
  EXPECT_EQ(xlsx.content_type, "application/vnd.openxmlformats-officedocument.spreadsheetml.sheet");
  EXPECT_EQ(xlsx.body.substr(0, 2), "PK");
}

// ---------------------------------------------------------------------------
// Golden transcript

json scripted_transcript(Service& s) {
  json transcript = json::array();
  auto record = [&](const std::string& method, const std::string& path, const json& body,
                    std::map<std::string, std::string> query = {}) {
    HttpResponse r = call(s, method, path, body, query);
    json entry = {{"request", {{"method", method}, {"path", path}, {"body", body}}}, {"status", r.status},
                  {"content_type", r.content_type}};
    if (!query.empty()) entry["request"]["query"] = query;
    entry["response"] = r.content_type == "application/json" ? r.json() : json(r.body);
    transcript.push_back(entry);
    return r;
  };
  json created = record("POST", "/sessions", {{"goal", kZoomGoal}}).json();
  const std::string base = "/sessions/" + created["session_id"].get<std::string>();
  record("PUT", base + "/requirements", {{"requirements", created["requirements"]}});
  for (int i = 0; i < 5; ++i) {
    json q = record("GET", base + "/question", nullptr).json()["question"];
    record("POST", base + "/answer", {{"question_id", q["id"]}, {"response", {{"selected", {0}}}}});
  }
  record("POST", base + "/stop", nullptr);
  record("POST", base + "/assessment", nullptr);
  record("GET", base + "/export", nullptr, {{"format", "csv"}});
  return transcript;
}

TEST(GoldenTranscriptTest, ScriptedFlowMatchesRecording) {
  auto s = make_service(fresh_dir("golden"));
  json transcript = scripted_transcript(*s);
  const std::string path = std::string(ELICIT_GOLDEN_DIR) + "/service_flow.json";
  if (std::getenv("ELICIT_UPDATE_GOLDEN")) {
    std::ofstream(path, std::ios::trunc) << transcript.dump(1) << "\n";
    GTEST_SKIP() << "rewrote " << path;
  }
  std::ifstream in(path);
  ASSERT_TRUE(in) << "missing golden transcript " << path;
  json golden = json::parse(in);
  ASSERT_EQ(golden.size(), transcript.size());
  for (std::size_t i = 0; i < golden.size(); ++i) {
    EXPECT_EQ(transcript[i], golden[i]) << "step " << i << ": " << golden[i]["request"].dump();
  }
}

// ---------------------------------------------------------------------------
// Persistence and recovery

TEST(RecoveryTest, KilledProcessResumesIdentically) {
  // Reference: one uninterrupted run.
  std::vector<std::string> reference;
  {
    auto s = make_service(fresh_dir("ref"));
    std::string id = open_loop(*s);
    reference = drive(*s, id, 14);
  }

  fs::path store = fresh_dir("crash");
  int ready[2];
  ASSERT_EQ(::pipe(ready), 0);
  pid_t child = ::fork();
  ASSERT_GE(child, 0);
  if (child == 0) {
    ::close(ready[0]);
    {
      auto s = make_service(store);
      std::string id = open_loop(*s);
      drive(*s, id, 6);
      s->wait_for_prefetch();
      char b = 1;
      if (::write(ready[1], &b, 1) != 1) ::_exit(2);
      // Wait to be killed; nothing below runs.
      for (;;) ::pause();
    }
  }
  ::close(ready[1]);
  char b = 0;
  ASSERT_EQ(::read(ready[0], &b, 1), 1);
  ::close(ready[0]);
  ::kill(child, SIGKILL);
  int status = 0;
  ::waitpid(child, &status, 0);
  ASSERT_TRUE(WIFSIGNALED(status));

  auto s = make_service(store);
  ASSERT_EQ(s->recovery().loaded, std::vector<std::string>{"s000001"});
  json state = call(*s, "GET", "/sessions/s000001").json();
  EXPECT_EQ(state["questions_asked"], 6);
  std::vector<std::string> rest = drive(*s, "s000001", 8);
  ASSERT_EQ(rest.size(), 8u);
  for (std::size_t i = 0; i < rest.size(); ++i) EXPECT_EQ(rest[i], reference[6 + i]) << "question " << 6 + i;
  EXPECT_EQ(create(*s), "s000002");
}

TEST(RecoveryTest, TruncatedLogIsQuarantinedAndSiblingsLoad) {
  fs::path store = fresh_dir("truncated");
  {
    auto s = make_service(store);
    drive(*s, open_loop(*s), 4);
    drive(*s, open_loop(*s), 4);
    s->wait_for_prefetch();
  }
  fs::path victim = store / "s000002.jsonl";
  std::string text = testing::slurp(victim.string());
  fs::resize_file(victim, text.size() - 7);

  auto s = make_service(store);
  EXPECT_EQ(s->recovery().loaded, std::vector<std::string>{"s000001"});
  ASSERT_EQ(s->recovery().quarantined.size(), 1u);
  EXPECT_TRUE(s->recovery().quarantined.contains("s000002"));
  EXPECT_EQ(call(*s, "GET", "/sessions/s000002").status, 404);
  EXPECT_EQ(call(*s, "GET", "/sessions/s000001").status, 200);
  EXPECT_TRUE(fs::exists(store / "quarantine" / "s000002.diagnostics.txt"));
  json list = call(*s, "GET", "/sessions").json();
  EXPECT_EQ(list["quarantined"], json::array({"s000002"}));
  // Quarantined ids are not reused.
  EXPECT_EQ(create(*s), "s000003");
}

TEST(RecoveryTest, IdleSessionsAreEvictedAndReloaded) {
  fs::path store = fresh_dir("evict");
  ServiceConfig c = config_for(store);
  c.idle_timeout = std::chrono::seconds(5);
  auto s = make_service(store, nullptr, c);
  std::string id = open_loop(*s);
  drive(*s, id, 3);
  s->wait_for_prefetch();
  json before = call(*s, "GET", "/sessions/" + id).json();
  EXPECT_EQ(s->evict_idle(), 0u);
  EXPECT_EQ(s->evict_idle(std::chrono::steady_clock::now() + std::chrono::seconds(10)), 1u);
  EXPECT_EQ(s->resident_sessions(), 0u);
  EXPECT_EQ(call(*s, "GET", "/sessions/" + id).json(), before);
  EXPECT_EQ(s->resident_sessions(), 1u);
  EXPECT_EQ(drive(*s, id, 2).size(), 2u);
}

// ---------------------------------------------------------------------------
// Concurrency

TEST(ConcurrencyTest, ParallelFlowsMatchSequentialReplays) {
  constexpr int kSessions = 8;
  fs::path store = fresh_dir("parallel");
  ServiceConfig c = config_for(store);
  c.provider_concurrency = 3;
  c.prefetch_workers = 3;
  auto s = make_service(store, nullptr, c);

  // Each worker follows its own seeded script of answers, skips and mode switches.
  auto script = [](Service& svc, const std::string& id, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    for (int step = 0; step < 40; ++step) {
      const int roll = static_cast<int>(rng() % 10);
      if (roll == 0) {
        const char* modes[] = {"auto", "explore", "exploit"};
        call(svc, "POST", "/sessions/" + id + "/mode", {{"mode", modes[rng() % 3]}});
        continue;
      }
      HttpResponse r = call(svc, "GET", "/sessions/" + id + "/question");
      if (r.status != 200) continue;
      json q = r.json();
      if (q["terminated"]) break;
      json response = roll == 1 ? json{{"skip", true}}
                                : json{{"selected", {rng() % q["question"]["options"].size()}}};
      call(svc, "POST", "/sessions/" + id + "/answer", {{"question_id", q["question"]["id"]}, {"response", response}});
    }
  };

  std::vector<std::string> ids;
  for (int i = 0; i < kSessions; ++i) ids.push_back(open_loop(*s));
  s->wait_for_prefetch();
  {
    std::vector<std::jthread> threads;
    for (int i = 0; i < kSessions; ++i) {
      threads.emplace_back([&, i] { script(*s, ids[i], 100 + i); });
    }
  }
  s->wait_for_prefetch();

  for (int i = 0; i < kSessions; ++i) {
    fs::path solo_store = fresh_dir("solo");
    ServiceConfig sc = config_for(solo_store);
    sc.prefetch_workers = 0;
    auto solo = make_service(solo_store, nullptr, sc);
    std::string solo_id = open_loop(*solo);
    script(*solo, solo_id, 100 + i);
    json a = call(*s, "GET", "/sessions/" + ids[i] + "/events").json()["events"];
    json b = call(*solo, "GET", "/sessions/" + solo_id + "/events").json()["events"];
    // Only the created event carries the session id.
    a[0]["id"] = b[0]["id"];
    EXPECT_EQ(a, b) << "session " << ids[i];
    EXPECT_EQ(log_lines(store, ids[i]), a.size());
  }
}

TEST(ConcurrencyTest, RacingAnswersOnOneSessionHaveOneWinner) {
  auto s = make_service(fresh_dir("race"));
  std::string id = open_loop(*s);
  for (int round = 0; round < 5; ++round) {
    json q = question(*s, id)["question"];
    constexpr int kRacers = 6;
    std::atomic<int> ok{0}, conflict{0}, other{0};
    std::barrier start(kRacers);
    {
      std::vector<std::jthread> racers;
      for (int i = 0; i < kRacers; ++i) {
        racers.emplace_back([&] {
          start.arrive_and_wait();
          int status = answer(*s, id, q).status;
          (status == 200 ? ok : status == 409 ? conflict : other)++;
        });
      }
    }
    EXPECT_EQ(ok, 1);
    EXPECT_EQ(conflict, kRacers - 1);
    EXPECT_EQ(other, 0);
  }
}

// Records the highest number of calls in flight at once.
class CountingProvider : public StubProvider {
 public:
  CountingProvider() : StubProvider(testing::lexicon(), {}) {}
  std::vector<Proposal> propose_exploratory(const PrivacyGraph& g, std::span<const AskedQuestion> h) override {
    Scope scope(*this);
    return StubProvider::propose_exploratory(g, h);
  }
  RenderedQuestion contextualize_question(const DecisionDef& d, const std::vector<std::string>& v, const Node& t,
                                          const PrivacyGraph& g, std::span<const AskedQuestion> h) override {
    Scope scope(*this);
    return StubProvider::contextualize_question(d, v, t, g, h);
  }
  int peak() const { return peak_; }

 private:
  struct Scope {
    CountingProvider& p;
    explicit Scope(CountingProvider& cp) : p(cp) {
      int now = ++p.active_;
      int seen = p.peak_;
      while (now > seen && !p.peak_.compare_exchange_weak(seen, now)) {
      }
      std::this_thread::sleep_for(std::chrono::microseconds(200));
    }
    ~Scope() { --p.active_; }
  };
  std::atomic<int> active_{0};
  std::atomic<int> peak_{0};
};

TEST(ConcurrencyTest, ProviderCallsRespectTheGlobalLimit) {
  fs::path store = fresh_dir("gate");
  ServiceConfig c = config_for(store);
  c.provider_concurrency = 2;
  auto counting = std::make_shared<CountingProvider>();
  auto s = make_service(store, std::make_shared<CheckedProvider>(counting), c);
  std::vector<std::string> ids;
  for (int i = 0; i < 6; ++i) ids.push_back(open_loop(*s));
  {
    std::vector<std::jthread> threads;
    for (const auto& id : ids) threads.emplace_back([&, id] { drive(*s, id, 6); });
  }
  s->wait_for_prefetch();
  EXPECT_GE(counting->peak(), 1);
  EXPECT_LE(counting->peak(), 2);
}

// ---------------------------------------------------------------------------
// HTTP adapter

TEST(HttpServerTest, ServesTheApiOverHttp) {
  auto s = make_service(fresh_dir("http"));
  HttpServer server(*s);
  int port = server.start("127.0.0.1", 0);
  ASSERT_GT(port, 0);
  httplib::Client client("127.0.0.1", port);
  auto created = client.Post("/sessions", json{{"goal", kZoomGoal}}.dump(), "application/json");
  ASSERT_TRUE(created);
  EXPECT_EQ(created->status, 201);
  json j = json::parse(created->body);
  std::string id = j["session_id"];
  auto put = client.Put("/sessions/" + id + "/requirements", json{{"requirements", j["requirements"]}}.dump(),
                        "application/json");
  ASSERT_TRUE(put);
  EXPECT_EQ(put->status, 200);
  auto q = client.Get("/sessions/" + id + "/question");
  ASSERT_TRUE(q);
  EXPECT_EQ(q->status, 200);
  EXPECT_EQ(q->get_header_value("Content-Type"), "application/json");
  auto missing = client.Get("/sessions/zzz");
  ASSERT_TRUE(missing);
  EXPECT_EQ(missing->status, 404);
  auto stop = client.Post("/sessions/" + id + "/stop", "", "application/json");
  ASSERT_TRUE(stop);
  client.Post("/sessions/" + id + "/assessment", "", "application/json");
  auto csv = client.Get("/sessions/" + id + "/export?format=csv");
  ASSERT_TRUE(csv);
  EXPECT_EQ(csv->status, 200);
  EXPECT_EQ(csv->get_header_value("Content-Type"), "text/csv; charset=utf-8");
  server.stop();
}

}  // namespace
}  // namespace elicit
