#include "elicit/assessment.hpp"
#include "elicit/corpus_miner.hpp"
#include "elicit/design_space.hpp"
#include "elicit/error.hpp"
#include "elicit/eval.hpp"
#include "elicit/graph_codec.hpp"
#include "elicit/provider.hpp"
#include "elicit/service.hpp"
#include "elicit/session.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include <csignal>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw elicit::Error(elicit::ErrorCode::InvalidArgument, "cannot read " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::string& path, const std::string& bytes) {
  const fs::path p(path);
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  out << bytes;
  if (!out) throw elicit::Error(elicit::ErrorCode::InvalidArgument, "cannot write " + path);
}

// ---------------------------------------------------------------------------

struct MineArgs {
  std::string docs, seed, out, annotator = "stub", rules = "data/mining_rules.json", config, report;
  std::size_t max_iters = 10;
  std::size_t parallelism = 1;
};

int run_mine(const MineArgs& a) {
  const elicit::DesignSpace seed = elicit::load_design_space(a.seed);
  const auto docs = elicit::load_documents(a.docs);
  std::unique_ptr<elicit::Annotator> annotator;
  if (a.annotator == "stub") {
    annotator = std::make_unique<elicit::RuleAnnotator>(elicit::load_mining_rules(a.rules));
  } else {
    if (a.config.empty()) throw elicit::Error(elicit::ErrorCode::InvalidArgument, "--annotator external needs --config");
    const elicit::ServiceConfig sc = elicit::load_service_config(a.config);
    const char* token = std::getenv(sc.provider.credential_env.c_str());
    auto transport = std::make_shared<elicit::HttpTransport>(sc.provider.endpoint, token ? token : "",
                                                             sc.provider.timeout);
    annotator = std::make_unique<elicit::ExternalAnnotator>(
        sc.provider, transport, elicit::PromptTemplates::load(sc.provider.prompt_dir), seed.label_vocabulary);
  }
  elicit::MiningConfig config;
  config.max_iterations = a.max_iters;
  config.parallelism = a.parallelism;
  config.validate();

  const elicit::MiningResult result = elicit::mine(docs, seed, *annotator, config);
  elicit::save_design_space(result.space, a.out);
  const std::string report = a.report.empty() ? a.out + ".report.txt" : a.report;
  write_file(report, elicit::format_mining_report(result.report));
  write_file(report + ".json", elicit::mining_report_to_json(result.report).dump(2) + "\n");
  std::cout << "mined " << docs.size() << " documents in " << result.report.iterations.size() << " iterations ("
            << (result.report.saturated ? "saturated" : "iteration limit") << "); wrote " << a.out << " and "
            << report << "\n";
  return 0;
}

// ---------------------------------------------------------------------------

int run_serve(const std::string& config_path, int port_override) {
  elicit::ServiceConfig config = elicit::load_service_config(config_path);
  if (port_override >= 0) config.port = port_override;
  config.validate();

  // Block the stop signals before any thread starts so only sigwait sees them.
  sigset_t signals;
  sigemptyset(&signals);
  sigaddset(&signals, SIGINT);
  sigaddset(&signals, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &signals, nullptr);

  elicit::Service service(config);
  const auto& recovery = service.recovery();
  spdlog::info("recovered {} sessions, quarantined {}", recovery.loaded.size(), recovery.quarantined.size());
  elicit::HttpServer server(service);
  const int port = server.start(config.host, config.port);
  std::cout << "listening on http://" << config.host << ":" << port << std::endl;

  int received = 0;
  sigwait(&signals, &received);
  spdlog::info("signal {}, shutting down", received);
  server.stop();
  return 0;
}

// ---------------------------------------------------------------------------

int run_export(const std::string& config_path, const std::string& id, const std::string& format_text,
               const std::string& out) {
  const auto format = elicit::parse_export_format(format_text);
  if (!format) throw elicit::Error(elicit::ErrorCode::InvalidArgument, "unknown format '" + format_text + "'");
  const elicit::ServiceConfig config = elicit::load_service_config(config_path);
  elicit::SessionStore store(config.store_dir);
  if (!store.exists(id)) throw elicit::Error(elicit::ErrorCode::UnknownSession, "no session '" + id + "'");
  const auto events = elicit::read_session_log(store.read(id));
  auto space = std::make_shared<const elicit::DesignSpace>(elicit::load_design_space(config.design_space_path));
  // No sink: the log belongs to the server, the CLI only reads it.
  elicit::Session session =
      elicit::Session::restore(events, space, elicit::make_provider(config.provider), config.engine);
  if (!session.state().assessment) session.build_assessment();
  write_file(out, session.export_worksheet(*format));
  std::cout << "wrote " << session.state().assessment->size() << " rows to " << out << "\n";
  return 0;
}

// ---------------------------------------------------------------------------

int run_eval(const std::vector<std::string>& outputs, const std::vector<std::string>& truths,
             const std::string& report, const std::string& aliases) {
  if (outputs.size() != truths.size()) {
    throw elicit::Error(elicit::ErrorCode::InvalidArgument, "give one --truth per --output");
  }
  std::vector<elicit::CoverageResult> results;
  std::optional<elicit::AliasMatcher> matcher;
  if (!aliases.empty()) matcher.emplace(elicit::load_alias_map(aliases));
  for (std::size_t i = 0; i < outputs.size(); ++i) {
    const elicit::DecisionSet output = elicit::load_evaluation_output(outputs[i]);
    const elicit::GroundTruth truth = elicit::load_ground_truth(truths[i]);
    results.push_back(matcher ? elicit::evaluate(output, truth, *matcher) : elicit::evaluate(output, truth));
  }
  const std::string text = elicit::format_coverage_report(results);
  write_file(report, text);
  write_file(report + ".json", elicit::coverage_report_json(results).dump(2) + "\n");
  std::cout << text;
  return 0;
}

// ---------------------------------------------------------------------------

int run_validate(const std::string& path) {
  const elicit::DesignSpace space = elicit::parse_design_space(read_file(path));
  const auto violations = elicit::validate_design_space(space);
  for (const auto& v : violations) std::cout << v.locator << ": " << v.message << "\n";
  std::cout << space.definitions.size() << " definitions, " << space.practice_count() << " practices, "
            << violations.size() << " violations\n";
  return violations.empty() ? 0 : 1;
}

// ---------------------------------------------------------------------------

struct SimulateArgs {
  std::string config, goal, out, decisions;
  std::uint64_t seed = 0;
};

// Scripted run answering every question with its first option.
int run_simulate(const SimulateArgs& a) {
  const elicit::ServiceConfig config = elicit::load_service_config(a.config);
  auto space = std::make_shared<const elicit::DesignSpace>(elicit::load_design_space(config.design_space_path));
  elicit::ProviderConfig pc = config.provider;
  pc.seed = a.seed;
  std::string log;
  elicit::Session session("simulated", a.goal, a.seed, space, elicit::make_provider(pc), config.engine,
                          [&](const elicit::SessionEvent& e) { log += elicit::session_event_line(e); });
  session.start();
  session.set_requirements(session.state().requirements);
  while (true) {
    elicit::NextResult next = session.next_question();
    const auto* q = std::get_if<elicit::Question>(&next);
    if (!q) break;
    elicit::Answer answer;
    answer.question_id = q->id;
    answer.response = elicit::response::Selected{{0}};
    session.submit_answer(answer);
  }
  session.build_assessment();
  write_file(a.out, log);
  if (!a.decisions.empty()) {
    write_file(a.decisions,
               elicit::decision_set_to_json(elicit::decisions_from_graph(session.state().graph)).dump(2) + "\n");
  }
  std::cout << session.state().questions_asked << " questions; wrote " << a.out << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Privacy design-decision elicitation tools"};
  app.require_subcommand(1);
  bool verbose = false;
  app.add_flag("-v,--verbose", verbose, "Debug logging");

  MineArgs mine;
  auto* mine_cmd = app.add_subcommand("mine", "Extend a design space from a document corpus");
  mine_cmd->add_option("--docs", mine.docs, "Directory of documents")->required()->check(CLI::ExistingDirectory);
  mine_cmd->add_option("--seed", mine.seed, "Seed design space")->required()->check(CLI::ExistingFile);
  mine_cmd->add_option("--out", mine.out, "Output design space")->required();
  mine_cmd->add_option("--annotator", mine.annotator, "stub or external")
      ->check(CLI::IsMember({"stub", "external"}))
      ->capture_default_str();
  mine_cmd->add_option("--max-iters", mine.max_iters, "Iteration limit")->capture_default_str();
  mine_cmd->add_option("--parallelism", mine.parallelism, "Concurrent documents")->capture_default_str();
  mine_cmd->add_option("--rules", mine.rules, "Rule file for the stub annotator")
      ->capture_default_str();
  mine_cmd->add_option("--config", mine.config, "Service config holding the external provider settings");
  mine_cmd->add_option("--report", mine.report, "Mining report path (default <out>.report.txt)");

  std::string config_path;
  int port = -1;
  auto* serve_cmd = app.add_subcommand("serve", "Run the HTTP service");
  serve_cmd->add_option("--config", config_path, "Service config")->required()->check(CLI::ExistingFile);
  serve_cmd->add_option("--port", port, "Override the configured port (0 picks one)");

  std::string session_id, format, out;
  auto* export_cmd = app.add_subcommand("export", "Export a stored session's worksheet");
  export_cmd->add_option("--config", config_path, "Service config")->required()->check(CLI::ExistingFile);
  export_cmd->add_option("--session", session_id, "Session id")->required();
  export_cmd->add_option("--format", format, "xlsx or csv")->required()->check(CLI::IsMember({"xlsx", "csv"}));
  export_cmd->add_option("--out", out, "Output file")->required();

  std::vector<std::string> outputs, truths;
  std::string report, aliases;
  auto* eval_cmd = app.add_subcommand("eval", "Score sessions or decision files against ground truth");
  eval_cmd->add_option("--output", outputs, "Session log, graph snapshot or decision file")
      ->required()
      ->check(CLI::ExistingFile);
  eval_cmd->add_option("--truth", truths, "Ground-truth file, one per --output")
      ->required()
      ->check(CLI::ExistingFile);
  eval_cmd->add_option("--report", report, "Text report path; JSON goes to <report>.json")->required();
  eval_cmd->add_option("--aliases", aliases, "Key and value alias map")->check(CLI::ExistingFile);

  std::string space_path;
  auto* validate_cmd = app.add_subcommand("validate", "Check a design space file");
  validate_cmd->add_option("space", space_path, "Design space file")->required()->check(CLI::ExistingFile);

  SimulateArgs sim;
  auto* simulate_cmd = app.add_subcommand("simulate", "Run a scripted first-option session");
  simulate_cmd->add_option("--config", sim.config, "Service config")->required()->check(CLI::ExistingFile);
  simulate_cmd->add_option("--goal", sim.goal, "Design goal")->required();
  simulate_cmd->add_option("--seed", sim.seed, "Session seed")->capture_default_str();
  simulate_cmd->add_option("--out", sim.out, "Session log to write")->required();
  simulate_cmd->add_option("--decisions", sim.decisions, "Decision file to write");

  CLI11_PARSE(app, argc, argv);
  spdlog::set_level(verbose ? spdlog::level::debug : spdlog::level::info);

  try {
    if (*mine_cmd) return run_mine(mine);
    if (*serve_cmd) return run_serve(config_path, port);
    if (*export_cmd) return run_export(config_path, session_id, format, out);
    if (*eval_cmd) return run_eval(outputs, truths, report, aliases);
    if (*validate_cmd) return run_validate(space_path);
    if (*simulate_cmd) return run_simulate(sim);
  } catch (const elicit::Error& e) {
    std::cerr << "error: " << elicit::to_string(e.code()) << ": " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
