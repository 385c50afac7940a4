// Acceptance run: one PASS/FAIL line per criterion, non-zero exit on any FAIL.
// Every check compares against an oracle from tests/support or one written
// out below; none of them reuse the code under test to compute expectations.

#include "elicit/assessment.hpp"
#include "elicit/design_space.hpp"
#include "elicit/error.hpp"
#include "elicit/eval.hpp"
#include "elicit/graph.hpp"
#include "elicit/provider.hpp"
#include "elicit/session.hpp"
#include "support/coverage_oracle.hpp"
#include "support/fixtures.hpp"
#include "support/oracles.hpp"
#include "support/random_session.hpp"
#include "support/xlsx_reader.hpp"

#include <nlohmann/json.hpp>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

namespace elicit {
namespace {

using Clock = std::chrono::steady_clock;

// Collects the first few failure messages of one criterion.
struct Check {
  int failures = 0;
  std::vector<std::string> notes;

  void fail(const std::string& message) {
    if (++failures <= 3) notes.push_back(message);
  }
  void expect(bool ok, const std::string& message) {
    if (!ok) fail(message);
  }
};

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

// ---------------------------------------------------------------------------

void jaccard_filter(Check& c) {
  std::mt19937_64 rng(20240101);
  const auto vocab = oracle::vocabulary20();
  const auto start = Clock::now();
  for (int corpus = 0; corpus < 100; ++corpus) {
    const std::size_t practices = 1 + rng() % 1000;
    const DesignSpace space = oracle::random_space(rng, practices, 12, 6);
    for (int q = 0; q < 5; ++q) {
      const LabelSet labels = oracle::random_labels(rng, vocab, 5);
      std::vector<std::string> got;
      for (const auto& p : relevant_practices(space, labels, 0.4)) got.push_back(p.id);
      if (got != oracle::relevant_ids(space.corpus, labels, 0.4)) {
        c.fail("corpus " + std::to_string(corpus) + " query " + std::to_string(q) + " differs from the scan");
      }
    }
  }
  // |{a,b}| / |{a,b,c,d,e}| is exactly 0.4 and must be excluded.
  DesignSpace boundary;
  DataPractice p;
  p.id = "boundary";
  p.domain_labels = {"health", "location", "iot", "social", "identity"};
  p.decisions.emplace(DecisionKey::from_canonical("k"), "v");
  boundary.corpus.push_back(p);
  c.expect(relevant_practices(boundary, {"health", "location"}, 0.4).empty(), "sim == 0.4 was included");
  c.expect(relevant_practices(boundary, {"health", "location", "iot"}, 0.4).size() == 1, "sim 0.6 was excluded");
  const double elapsed = seconds_since(start);
  c.expect(elapsed < 10.0, "took " + std::to_string(elapsed) + " s");
}

// ---------------------------------------------------------------------------

DataPractice practice(const std::string& id, std::initializer_list<const char*> keys) {
  DataPractice p;
  p.id = id;
  p.domain_labels = {"meeting"};
  for (const char* k : keys) p.decisions.emplace(DecisionKey::from_canonical(k), "x");
  return p;
}

void mi_ranking(Check& c) {
  std::mt19937_64 rng(777);
  const auto start = Clock::now();
  for (int corpus = 0; corpus < 100; ++corpus) {
    const DesignSpace space = oracle::random_space(rng, 1 + rng() % 200, 2 + rng() % 29);
    std::set<DecisionKey> prior;
    const std::size_t wanted = rng() % 5;
    while (prior.size() < std::min(wanted, space.definitions.size())) {
      prior.insert(space.definitions[rng() % space.definitions.size()].key);
    }
    const auto ranked = rank_by_prior_choices(space, space.corpus, space.definitions, prior);
    const auto expected = oracle::rank(space.corpus, space.definitions, prior, kDefaultNegativeEvidenceFloor);
    if (ranked.size() != expected.size()) {
      c.fail("corpus " + std::to_string(corpus) + ": size differs");
      continue;
    }
    for (std::size_t i = 0; i < ranked.size(); ++i) {
      if (ranked[i].def.key.str() != expected[i].first || ranked[i].def.node_kind != expected[i].second) {
        c.fail("corpus " + std::to_string(corpus) + " position " + std::to_string(i) + ": got " +
               ranked[i].def.key.str() + ", oracle " + expected[i].first);
        break;
      }
    }
  }
  // Independence: c12 * N == c1 * c2 in each fixture.
  const std::vector<std::vector<DataPractice>> fixtures = {
      {practice("1", {"a", "b"}), practice("2", {"a"}), practice("3", {"b"}), practice("4", {"z"})},
      {practice("1", {"a", "b"}), practice("2", {"a", "b"}), practice("3", {"a", "b"}), practice("4", {"a", "b"})},
      {practice("1", {"a", "b"}), practice("2", {"a", "b"}), practice("3", {"a"}), practice("4", {"a"}),
       practice("5", {"b"}), practice("6", {"b"}), practice("7", {"z"}), practice("8", {"z"})},
  };
  const DesignSpace empty;
  for (std::size_t i = 0; i < fixtures.size(); ++i) {
    const double mi =
        mutual_information(empty, fixtures[i], DecisionKey::from_canonical("a"), DecisionKey::from_canonical("b"));
    c.expect(std::fabs(mi) <= 1e-12, "independence fixture " + std::to_string(i) + " scored " + std::to_string(mi));
  }
  const double elapsed = seconds_since(start);
  c.expect(elapsed < 10.0, "took " + std::to_string(elapsed) + " s");
}

// ---------------------------------------------------------------------------

void budget_and_termination(Check& c) {
  int capped = 0;
  for (std::uint64_t seed = 0; seed < 1000; ++seed) {
    std::mt19937_64 rng(seed * 2654435761u + 7);
    Session s = testing::new_session(seed);
    int steps = 0;
    try {
      while (testing::random_step(s, rng) && ++steps < 2000) {
        if (s.state().questions_asked > 25) {
          c.fail("seed " + std::to_string(seed) + ": " + std::to_string(s.state().questions_asked) + " questions");
          break;
        }
      }
    } catch (const Error& e) {
      c.fail("seed " + std::to_string(seed) + " step " + std::to_string(steps) + " threw: " + e.what());
      continue;
    }
    const SessionState& st = s.state();
    if (!st.terminated) {
      c.fail("seed " + std::to_string(seed) + " ended without a termination");
      continue;
    }
    // Exactly one Terminated event since the last Resumed.
    int since_resume = 0;
    for (const auto& e : st.events) {
      if (std::holds_alternative<session_event::Resumed>(e)) since_resume = 0;
      if (std::holds_alternative<session_event::Terminated>(e)) ++since_resume;
    }
    c.expect(since_resume == 1, "seed " + std::to_string(seed) + ": " + std::to_string(since_resume) +
                                    " termination events in the final run");
    if (st.questions_asked == 25) {
      ++capped;
      c.expect(*st.terminated == TerminationReason::HardLimit,
               "seed " + std::to_string(seed) + " at the cap without HardLimit");
      bool refused = false;
      try {
        s.resume();
      } catch (const Error& e) {
        refused = e.code() == ErrorCode::BudgetExhausted;
      }
      c.expect(refused, "seed " + std::to_string(seed) + ": resume past the cap was accepted");
    }
  }
  c.expect(capped > 0, "no session reached the cap");
  std::cout << "  " << capped << " of 1000 sessions reached the cap\n";
}

// ---------------------------------------------------------------------------

void replay_determinism(Check& c) {
  for (std::uint64_t seed = 0; seed < 500; ++seed) {
    std::mt19937_64 pick(seed + 99);
    const int cut = static_cast<int>(pick() % 30);

    std::mt19937_64 rng_ref(seed);
    Session reference = testing::new_session(seed);
    while (testing::random_step(reference, rng_ref)) {
    }

    std::string disk;
    auto sink = [&](const SessionEvent& e) { disk += session_event_line(e); };
    std::mt19937_64 rng(seed);
    std::optional<Session> live(testing::new_session(seed, {}, {}, sink));
    bool more = true;
    for (int i = 0; i < cut && more; ++i) more = testing::random_step(*live, rng);
    // Restart: only the bytes on disk survive.
    live.reset();
    live.emplace(Session::restore(read_session_log(disk), testing::shared_seed_space(), testing::checked_stub(seed),
                                  {}, sink));
    while (more && testing::random_step(*live, rng)) {
    }

    reference.build_assessment();
    live->build_assessment();
    const std::string tag = "seed " + std::to_string(seed) + " cut " + std::to_string(cut);
    c.expect(live->state().graph == reference.state().graph, tag + ": graphs differ");
    c.expect(*live->state().assessment == *reference.state().assessment, tag + ": assessment rows differ");
    c.expect(export_csv(*live->state().assessment) == export_csv(*reference.state().assessment),
             tag + ": csv differs");
    // A cold replay of the complete log agrees too.
    Session cold =
        Session::restore(read_session_log(disk), testing::shared_seed_space(), testing::checked_stub(seed));
    c.expect(cold.state().graph == reference.state().graph, tag + ": cold replay graph differs");
    c.expect(export_csv(*cold.state().assessment) == export_csv(*reference.state().assessment),
             tag + ": cold replay csv differs");
  }
}

// ---------------------------------------------------------------------------

// Invariants checked from the public accessors only.
std::vector<std::string> oracle_violations(const PrivacyGraph& g) {
  std::vector<std::string> out;
  std::set<NodeId> listed;
  std::set<std::pair<NodeKind, std::string>> labels;
  for (const auto& id : g.data_flow()) {
    if (!listed.insert(id).second) out.push_back("duplicate id " + id);
    const Node* n = g.find(id);
    if (!n) {
      out.push_back("flow id " + id + " does not resolve");
      continue;
    }
    if (!is_data_action(n->kind)) out.push_back("flow holds interaction " + id);
  }
  for (const auto& id : g.interactions()) {
    if (!listed.insert(id).second) out.push_back("duplicate id " + id);
    const Node* n = g.find(id);
    if (!n) {
      out.push_back("interaction id " + id + " does not resolve");
      continue;
    }
    if (is_data_action(n->kind)) out.push_back("interaction set holds data action " + id);
    auto it = g.attachments().find(id);
    if (it == g.attachments().end()) {
      out.push_back("interaction " + id + " has no attachment");
    } else if (std::find(g.data_flow().begin(), g.data_flow().end(), it->second) == g.data_flow().end()) {
      out.push_back("interaction " + id + " attaches to " + it->second + " outside the flow");
    }
  }
  if (g.attachments().size() != g.interactions().size()) out.push_back("stray attachment edges");
  if (listed.size() != g.nodes().size()) out.push_back("orphan nodes");
  for (const auto& [id, n] : g.nodes()) {
    if (n.id != id) out.push_back("node " + id + " carries id " + n.id);
    if (n.label.empty()) out.push_back("node " + id + " has an empty label");
    if (!labels.emplace(n.kind, n.label).second) out.push_back("duplicate (kind, label) at " + id);
    for (const auto& [key, value] : n.decisions) {
      const std::string k = key.str();
      const bool canonical = !k.empty() && k.front() != '_' && k.back() != '_' &&
                             std::all_of(k.begin(), k.end(), [](char ch) {
                               return (ch >= 'a' && ch <= 'z') || (ch >= '0' && ch <= '9') || ch == '_';
                             });
      if (!canonical) out.push_back("non-canonical key " + k);
      const bool has_value = !value.selected.empty() || (value.custom && !value.custom->empty());
      if (!has_value) out.push_back("empty value for " + k + " on " + id);
    }
  }
  for (std::size_t i = 0; i < g.log().size(); ++i) {
    if (g.log()[i].sequence != i + 1) {
      out.push_back("log gap at " + std::to_string(i + 1));
      break;
    }
  }
  return out;
}

EventPayload fuzz_payload(std::mt19937_64& rng, const PrivacyGraph& g, int& next_id) {
  std::vector<NodeId> any, actions;
  for (const auto& [id, n] : g.nodes()) {
    any.push_back(id);
    if (is_data_action(n.kind)) actions.push_back(id);
  }
  auto choose = [&](const std::vector<NodeId>& from) -> NodeId {
    if (from.empty() || rng() % 8 == 0) return rng() % 2 ? "ghost" : "n" + std::to_string(next_id + 5);
    return from[rng() % from.size()];
  };
  const NodeKind kind = kAllNodeKinds[rng() % kAllNodeKinds.size()];
  const std::string label = rng() % 12 == 0 ? "" : std::string(to_string(kind)) + " item " + std::to_string(rng() % 5);
  // Reused ids exercise the uniqueness check.
  const NodeId fresh = rng() % 10 == 0 && !any.empty() ? any[rng() % any.size()] : "n" + std::to_string(next_id++);
  const DecisionKey key = DecisionKey::from_canonical("key_" + std::to_string(rng() % 4));
  DecisionValue value;
  switch (rng() % 4) {
    case 0: break;  // empty, must be rejected
    case 1: value.custom = "free text " + std::to_string(rng() % 3); break;
    default: value.selected = {"v" + std::to_string(rng() % 3)};
  }
  switch (rng() % 7) {
    case 0:
    case 1: return event::AddDataAction{fresh, kind, label};
    case 2:
    case 3: return event::AddInteraction{fresh, kind, label, choose(rng() % 3 ? actions : any)};
    case 4: return event::SetDecision{choose(any), key, value};
    case 5: return event::ReviseDecision{choose(any), key, value};
    default: return event::RemoveNode{choose(any)};
  }
}

void graph_fuzz(Check& c) {
  std::mt19937_64 rng(31337);
  std::size_t accepted = 0, rejected = 0;
  for (int sequence = 0; sequence < 10000; ++sequence) {
    PrivacyGraph g;
    int next_id = 1;
    const int length = 1 + static_cast<int>(rng() % 40);
    for (int i = 0; i < length; ++i) {
      // Occasionally stamp a wrong sequence number.
      const std::uint64_t seq = rng() % 25 == 0 ? g.event_count() + 2 : g.event_count() + 1;
      const GraphEvent ev{seq, fuzz_payload(rng, g, next_id)};
      const PrivacyGraph before = g;
      try {
        g.apply(ev);
        ++accepted;
      } catch (const Error&) {
        ++rejected;
        if (!(g == before)) c.fail("sequence " + std::to_string(sequence) + ": rejected event changed the graph");
        continue;
      }
      const auto violations = oracle_violations(g);
      if (!violations.empty()) {
        c.fail("sequence " + std::to_string(sequence) + " event " + std::to_string(i) + ": " + violations.front());
        break;
      }
    }
  }
  c.expect(accepted > 0 && rejected > 0, "fuzzer did not exercise both outcomes");
}

// ---------------------------------------------------------------------------

std::vector<oracle::RawTruth> raw_truth(const std::string& path) {
  const auto j = nlohmann::json::parse(testing::slurp(path));
  std::vector<oracle::RawTruth> out;
  for (const auto& d : j.at("definitions")) {
    oracle::RawTruth t{d.at("node_kind"), d.at("key"), {}};
    for (const auto& set : d.at("values")) {
      for (const auto& v : set.at("options")) t.values.push_back(v);
    }
    out.push_back(std::move(t));
  }
  return out;
}

std::vector<oracle::RawDecision> raw_decisions(const PrivacyGraph& g) {
  std::vector<oracle::RawDecision> out;
  for (const auto& [id, n] : g.nodes()) {
    for (const auto& [key, value] : n.decisions) {
      const std::string k = key.str();
      if (k.size() >= 8 && k.compare(k.size() - 8, 8, "_details") == 0) continue;
      oracle::RawDecision d{std::string(to_string(n.kind)), k, value.selected};
      if (value.custom) d.values.push_back(*value.custom);
      out.push_back(std::move(d));
    }
  }
  return out;
}

std::string two_decimals(double percent) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", percent);
  return buf;
}

void fixture_coverage(Check& c) {
  Session s = testing::new_session(0);
  while (true) {
    NextResult next = s.next_question();
    const auto* q = std::get_if<Question>(&next);
    if (!q) break;
    Response r = q->options.empty() ? Response{response::Skip{}} : Response{response::Selected{{0}}};
    s.submit_answer({q->id, r, false});
  }
  const SessionState& st = s.state();
  c.expect(st.questions_asked <= 25, "asked " + std::to_string(st.questions_asked));

  const std::string truth_path = testing::data_path("ground_truth/zoom.json");
  const auto expected = oracle::coverage(raw_decisions(st.graph), raw_truth(truth_path));
  const CoverageResult result = evaluate(decisions_from_graph(st.graph), load_ground_truth(truth_path));

  const auto& total = expected.at("*");
  const double oracle_decision = 100.0 * total.keys / total.truth;
  c.expect(result.decision.overall >= 0.90,
           "decision coverage " + format_percent(result.decision.overall) + " is below 90%");
  c.expect(two_decimals(100.0 * result.decision.overall) == two_decimals(oracle_decision),
           "overall decision " + two_decimals(100.0 * result.decision.overall) + " vs oracle " +
               two_decimals(oracle_decision));
  c.expect(two_decimals(100.0 * result.choice.overall) == two_decimals(100.0 * total.choices / total.truth),
           "overall choice differs from oracle");
  for (const auto& [kind, cell] : expected) {
    if (kind == "*") continue;
    const NodeKind k = *parse_node_kind(kind);
    c.expect(two_decimals(100.0 * result.decision.per_category.at(k)) == two_decimals(100.0 * cell.keys / cell.truth),
             kind + " decision differs from oracle");
    c.expect(two_decimals(100.0 * result.choice.per_category.at(k)) ==
                 two_decimals(100.0 * cell.choices / cell.truth),
             kind + " choice differs from oracle");
  }
  // The text report carries the same figures.
  const std::vector<CoverageResult> one{result};
  const std::string report = format_coverage_report(one);
  c.expect(report.find(two_decimals(oracle_decision) + "%") != std::string::npos, "report lacks the overall figure");
  std::cout << "  zoom: " << st.questions_asked << " questions, decision " << two_decimals(oracle_decision)
            << "%, choice " << two_decimals(100.0 * total.choices / total.truth) << "%\n";
}

// ---------------------------------------------------------------------------

void coverage_properties(Check& c) {
  std::mt19937_64 rng(4242);
  for (int pair = 0; pair < 200; ++pair) {
    const oracle::CoverageCase cc = oracle::random_coverage_case(rng);
    const auto expected = oracle::coverage(cc.output, cc.truth);
    const DecisionSet output = cc.decision_set();
    const GroundTruth truth = cc.ground_truth();
    const Coverage decision = decision_coverage(output, truth);
    const Coverage choice = choice_coverage(output, truth);
    const std::string tag = "pair " + std::to_string(pair);
    for (const auto& [kind, cell] : expected) {
      if (kind == "*") {
        c.expect(decision.overall == static_cast<double>(cell.keys) / cell.truth, tag + ": overall decision");
        c.expect(choice.overall == static_cast<double>(cell.choices) / cell.truth, tag + ": overall choice");
        c.expect(choice.overall <= decision.overall, tag + ": overall choice above decision");
        continue;
      }
      const NodeKind k = *parse_node_kind(kind);
      const auto d = decision.per_category.find(k);
      const auto ch = choice.per_category.find(k);
      if (d == decision.per_category.end() || ch == choice.per_category.end()) {
        c.fail(tag + ": missing cell " + kind);
        continue;
      }
      c.expect(d->second == static_cast<double>(cell.keys) / cell.truth, tag + ": " + kind + " decision");
      c.expect(ch->second == static_cast<double>(cell.choices) / cell.truth, tag + ": " + kind + " choice");
      c.expect(ch->second <= d->second, tag + ": " + kind + " choice above decision");
    }
  }
}

// ---------------------------------------------------------------------------

std::string adversarial(std::mt19937_64& rng) {
  static const std::vector<std::string> pieces = {"a",  "Q",  " ",  ",",   "\"", "\n", "\r\n", ";",  "; ", "\t",
                                                  "é",  "漢", "<",  "&",   ">",  "'",  "\"\"", ",,", "=1+1", "\\"};
  std::string s;
  for (int i = static_cast<int>(rng() % 10); i > 0; --i) s += pieces[rng() % pieces.size()];
  return s;
}

void export_round_trip(Check& c) {
  std::mt19937_64 rng(8080);
  const std::vector<std::string> header = {"Data Action", "Data", "Specific Context", "Summary Issues"};
  for (int table = 0; table < 100; ++table) {
    std::vector<AssessmentRow> rows;
    for (int r = static_cast<int>(rng() % 7); r > 0; --r) {
      AssessmentRow row;
      row.node = "n" + std::to_string(rows.size() + 1);
      row.data_action = adversarial(rng);
      for (int i = static_cast<int>(rng() % 3); i > 0; --i) row.data.push_back(adversarial(rng));
      for (int i = static_cast<int>(rng() % 3); i > 0; --i) row.specific_context.push_back(adversarial(rng));
      for (int i = static_cast<int>(rng() % 3); i > 0; --i) {
        row.summary_issues.push_back({adversarial(rng), static_cast<IssueFlag>(rng() % 4)});
      }
      rows.push_back(std::move(row));
    }
    const auto cells = table_cells(rows);
    const std::string tag = "table " + std::to_string(table);

    const auto parsed = parse_csv(export_csv(rows));
    const auto independent = oracle::read_csv(export_csv(rows));
    c.expect(parsed == independent, tag + ": csv parsers disagree");
    if (parsed.size() != cells.size() + 1) {
      c.fail(tag + ": csv row count");
      continue;
    }
    c.expect(parsed[0] == header, tag + ": csv header");
    for (std::size_t r = 0; r < cells.size(); ++r) {
      c.expect(parsed[r + 1] == std::vector<std::string>(cells[r].begin(), cells[r].end()), tag + ": csv cells");
    }

    const auto sheets = oracle::read_xlsx(export_xlsx(rows));
    if (sheets.size() != 1) {
      c.fail(tag + ": " + std::to_string(sheets.size()) + " sheets");
      continue;
    }
    c.expect(sheets[0].name == "Data Action Analysis", tag + ": sheet name " + sheets[0].name);
    c.expect(!sheets[0].rows.empty() && sheets[0].rows[0] == header, tag + ": xlsx header");
    c.expect(sheets[0].rows.size() == cells.size() + 1, tag + ": xlsx row count");
    for (std::size_t r = 0; r < cells.size() && r + 1 < sheets[0].rows.size(); ++r) {
      c.expect(sheets[0].rows[r + 1] == std::vector<std::string>(cells[r].begin(), cells[r].end()),
               tag + ": xlsx cells");
    }
  }
}

// ---------------------------------------------------------------------------

void provider_independence(Check& c) {
  // Everything above ran on the stub; no request may have left the process.
  c.expect(network_request_count() == 0, std::to_string(network_request_count()) + " network requests");
  c.expect(ProviderConfig{}.backend == ProviderBackend::Stub, "default backend is not the stub");
}

struct Criterion {
  const char* name;
  std::function<void(Check&)> run;
};

}  // namespace
}  // namespace elicit

int main() {
  using namespace elicit;
  const std::vector<Criterion> criteria = {
      {"jaccard-filter-oracle", jaccard_filter},
      {"mi-ranking-oracle", mi_ranking},
      {"budget-and-termination", budget_and_termination},
      {"replay-determinism", replay_determinism},
      {"representation-invariants", graph_fuzz},
      {"fixture-coverage", fixture_coverage},
      {"coverage-metric-properties", coverage_properties},
      {"export-round-trip", export_round_trip},
      {"provider-independence", provider_independence},
  };
  int failed = 0;
  for (const auto& criterion : criteria) {
    Check check;
    const auto start = Clock::now();
    try {
      criterion.run(check);
    } catch (const std::exception& e) {
      check.fail(std::string("threw: ") + e.what());
    }
    const double elapsed = seconds_since(start);
    std::ostringstream line;
    line << (check.failures == 0 ? "PASS " : "FAIL ") << criterion.name << " (" << std::fixed;
    line.precision(2);
    line << elapsed << " s)";
    if (check.failures) line << ": " << check.failures << " failures";
    std::cout << line.str() << "\n";
    for (const auto& note : check.notes) std::cout << "  " << note << "\n";
    failed += check.failures == 0 ? 0 : 1;
  }
  std::cout << (criteria.size() - failed) << "/" << criteria.size() << " criteria passed\n";
  return failed == 0 ? 0 : 1;
}
