#include "elicit/eval.hpp"

#include "elicit/error.hpp"
#include "elicit/graph_codec.hpp"
#include "elicit/session.hpp"
#include "json_util.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace elicit {

using namespace detail;

namespace {

constexpr int kSchemaVersion = 1;
constexpr std::string_view kDetailsSuffix = "_details";

std::string read_text(const std::string& path, const char* what) {
  std::ifstream in(path, std::ios::binary);
  if (!in) parse_fail(std::string("cannot open ") + what + " '" + path + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void check_schema(const json& root, std::string_view name) {
  if (!root.is_object()) parse_fail("not a JSON object");
  if (root.value("schema", "") != name) parse_fail("schema must be '" + std::string(name) + "'");
  if (!root.contains("schema_version") || root.at("schema_version") != kSchemaVersion) {
    throw Error(ErrorCode::SchemaVersionMismatch, std::string(name) + " schema_version " +
                                                       root.value("schema_version", json()).dump() +
                                                       " is not supported");
  }
}

DecisionKey raw_key(const json& j, const char* name) {
  try {
    return canonicalize_key(string_field(j, name));
  } catch (const Error& e) {
    if (e.code() == ErrorCode::ParseError) throw;
    parse_fail(e.what());
  }
}

bool is_details_key(const DecisionKey& key) {
  const std::string& s = key.str();
  return s.size() > kDetailsSuffix.size() && s.ends_with(kDetailsSuffix);
}

DecisionSet decisions_from_session_log(std::string_view text) {
  SessionState state;
  for (const auto& e : read_session_log(text)) apply_session_event(state, e);
  return decisions_from_graph(state.graph);
}

}  // namespace

bool is_reported_category(NodeKind kind) {
  return std::find(kReportedCategories.begin(), kReportedCategories.end(), kind) != kReportedCategories.end();
}

void GroundTruth::validate() const {
  auto fail = [](const std::string& m) { throw Error(ErrorCode::InvariantViolation, "ground truth: " + m); };
  if (scenario.empty()) fail("scenario id is empty");
  if (entries.empty()) fail("no entries");
  std::set<std::pair<NodeKind, DecisionKey>> seen;
  for (const auto& e : entries) {
    if (e.key.empty()) fail("entry with an empty key");
    if (!is_reported_category(e.category)) {
      fail("'" + e.key.str() + "' uses unreported category " + std::string(to_string(e.category)));
    }
    if (e.values.empty()) fail("'" + e.key.str() + "' has no expected values");
    if (!seen.emplace(e.category, e.key).second) {
      fail("(" + std::string(to_string(e.category)) + ", " + e.key.str() + ") appears twice");
    }
  }
}

GroundTruth parse_ground_truth(const json& root) {
  check_schema(root, kGroundTruthSchema);
  GroundTruth truth;
  truth.scenario = string_field(root, "scenario");
  truth.goal = string_or(root, "goal", "");
  const json& defs = field(root, "definitions");
  if (!defs.is_array()) parse_fail("'definitions' must be an array");
  for (const auto& d : defs) {
    TruthEntry e;
    e.key = raw_key(d, "key");
    e.category = node_kind_from_json(field(d, "node_kind"));
    e.description = string_or(d, "description", "");
    const json& values = field(d, "values");
    if (!values.is_array()) parse_fail("'values' must be an array");
    for (const auto& vs : values) {
      for (const auto& o : string_list(vs, "options")) e.values.insert(normalize_value(o));
    }
    truth.entries.push_back(std::move(e));
  }
  truth.validate();
  return truth;
}

GroundTruth load_ground_truth(const std::string& path) {
  return parse_ground_truth(parse_json(read_text(path, "ground truth"), "ground truth"));
}

json ground_truth_to_json(const GroundTruth& truth) {
  json defs = json::array();
  for (const auto& e : truth.entries) {
    defs.push_back({{"key", e.key.str()},
                    {"node_kind", to_string(e.category)},
                    {"description", e.description},
                    {"values", json::array({{{"labels", json::array()}, {"options", e.values}}})}});
  }
  return {{"schema", kGroundTruthSchema},
          {"schema_version", kSchemaVersion},
          {"scenario", truth.scenario},
          {"goal", truth.goal},
          {"definitions", defs}};
}

DecisionSet decisions_from_graph(const PrivacyGraph& graph) {
  DecisionSet out;
  for (const Node* n : graph.ordered_nodes()) {
    for (const auto& [key, value] : n->decisions) {
      if (is_details_key(key)) continue;
      out.push_back({n->kind, key, value.all_values()});
    }
  }
  return out;
}

DecisionSet parse_decision_set(const json& root) {
  if (root.is_object() && root.value("schema", "") == kGraphSnapshotSchema) {
    return decisions_from_graph(graph_from_snapshot(root));
  }
  check_schema(root, kDecisionSetSchema);
  const json& list = field(root, "decisions");
  if (!list.is_array()) parse_fail("'decisions' must be an array");
  DecisionSet out;
  for (const auto& d : list) {
    out.push_back({node_kind_from_json(field(d, "node_kind")), raw_key(d, "key"), string_list(d, "values")});
  }
  return out;
}

json decision_set_to_json(const DecisionSet& decisions) {
  json list = json::array();
  for (const auto& d : decisions) {
    list.push_back({{"node_kind", to_string(d.category)}, {"key", d.key.str()}, {"values", d.values}});
  }
  return {{"schema", kDecisionSetSchema}, {"schema_version", kSchemaVersion}, {"decisions", list}};
}

DecisionSet load_evaluation_output(const std::string& path) {
  std::string text = read_text(path, "evaluation output");
  json root = json::parse(text, nullptr, false);
  if (!root.is_discarded() && root.is_object() && root.contains("schema")) return parse_decision_set(root);
  return decisions_from_session_log(text);
}

std::string normalize_value(std::string_view value) {
  std::string out;
  bool pending_space = false;
  for (char c : value) {
    if (c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v') {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) out += ' ';
    pending_space = false;
    out += (c >= 'A' && c <= 'Z') ? static_cast<char>(c - 'A' + 'a') : c;
  }
  return out;
}

DecisionKey AliasMap::key(const DecisionKey& k) const {
  auto it = keys.find(k);
  return it == keys.end() ? k : it->second;
}

std::string AliasMap::value(std::string_view v) const {
  std::string n = normalize_value(v);
  auto it = values.find(n);
  return it == values.end() ? n : it->second;
}

AliasMap parse_alias_map(const json& j) {
  if (!j.is_object()) parse_fail("alias map must be an object");
  AliasMap m;
  auto section = [&](const char* name) -> const json* {
    if (!j.contains(name)) return nullptr;
    const json& s = j.at(name);
    if (!s.is_object()) parse_fail(std::string("alias map '") + name + "' must be an object");
    return &s;
  };
  if (const json* keys = section("keys")) {
    for (const auto& [alias, target] : keys->items()) {
      if (!target.is_string()) parse_fail("key alias '" + alias + "' must map to a string");
      try {
        m.keys[canonicalize_key(alias)] = canonicalize_key(target.get<std::string>());
      } catch (const Error& e) {
        parse_fail(e.what());
      }
    }
  }
  if (const json* values = section("values")) {
    for (const auto& [alias, target] : values->items()) {
      if (!target.is_string()) parse_fail("value alias '" + alias + "' must map to a string");
      m.values[normalize_value(alias)] = normalize_value(target.get<std::string>());
    }
  }
  return m;
}

AliasMap load_alias_map(const std::string& path) {
  return parse_alias_map(parse_json(read_text(path, "alias map"), "alias map"));
}

bool AliasMatcher::key_matches(const TruthEntry& truth, const OutputDecision& output) const {
  return output.category == truth.category && aliases_.key(output.key) == truth.key;
}

bool AliasMatcher::value_matches(const TruthEntry& truth, const std::string& output_value) const {
  return truth.values.contains(aliases_.value(output_value));
}

std::string AliasMatcher::describe() const {
  return "canonical-exact keys and values with alias map (" + std::to_string(aliases_.keys.size()) +
         " key aliases, " + std::to_string(aliases_.values.size()) +
         " value aliases); value equality stands in for semantic judgment";
}

CoverageResult evaluate(const DecisionSet& output, const GroundTruth& truth, const Matcher& matcher) {
  CoverageResult r;
  r.scenario = truth.scenario;
  r.matcher = matcher.describe();
  for (const auto& entry : truth.entries) {
    EntryOutcome o{entry.category, entry.key, false, false};
    for (const auto& d : output) {
      if (!matcher.key_matches(entry, d)) continue;
      o.key_matched = true;
      for (const auto& v : d.values) {
        if (matcher.value_matches(entry, v)) {
          o.choice_matched = true;
          break;
        }
      }
      if (o.choice_matched) break;
    }
    CategoryCounts& c = r.counts[entry.category];
    ++c.truth;
    c.keys += o.key_matched;
    c.choices += o.choice_matched;
    r.entries.push_back(std::move(o));
  }
  std::size_t total = 0, keys = 0, choices = 0;
  for (const auto& [kind, c] : r.counts) {
    r.decision.per_category[kind] = static_cast<double>(c.keys) / static_cast<double>(c.truth);
    r.choice.per_category[kind] = static_cast<double>(c.choices) / static_cast<double>(c.truth);
    total += c.truth;
    keys += c.keys;
    choices += c.choices;
  }
  if (total > 0) {
    r.decision.overall = static_cast<double>(keys) / static_cast<double>(total);
    r.choice.overall = static_cast<double>(choices) / static_cast<double>(total);
  }
  return r;
}

CoverageResult evaluate(const DecisionSet& output, const GroundTruth& truth) {
  return evaluate(output, truth, AliasMatcher{});
}

Coverage decision_coverage(const DecisionSet& output, const GroundTruth& truth, const Matcher& matcher) {
  return evaluate(output, truth, matcher).decision;
}

Coverage decision_coverage(const DecisionSet& output, const GroundTruth& truth) {
  return decision_coverage(output, truth, AliasMatcher{});
}

Coverage choice_coverage(const DecisionSet& output, const GroundTruth& truth, const Matcher& matcher) {
  return evaluate(output, truth, matcher).choice;
}

Coverage choice_coverage(const DecisionSet& output, const GroundTruth& truth) {
  return choice_coverage(output, truth, AliasMatcher{});
}

std::string format_percent(double fraction) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f%%", fraction * 100.0);
  return buf;
}

namespace {

std::string pad(std::string s, std::size_t width, bool right) {
  if (s.size() >= width) return s;
  std::string fill(width - s.size(), ' ');
  return right ? fill + s : s + fill;
}

std::string cell(const std::map<NodeKind, double>& per_category, NodeKind kind) {
  auto it = per_category.find(kind);
  return it == per_category.end() ? "-" : format_percent(it->second);
}

}  // namespace

std::string format_coverage_report(std::span<const CoverageResult> results) {
  constexpr std::size_t kFirst = 12;
  std::vector<std::size_t> widths;
  std::vector<std::string> header;
  for (const auto& r : results) {
    header.push_back(r.scenario + " decision");
    header.push_back(r.scenario + " choice");
  }
  for (const auto& h : header) widths.push_back(std::max<std::size_t>(h.size(), 8));

  std::ostringstream out;
  auto row = [&](const std::string& first, const std::vector<std::string>& cells) {
    out << pad(first, kFirst, false);
    for (std::size_t i = 0; i < cells.size(); ++i) out << " | " << pad(cells[i], widths[i], true);
    out << "\n";
  };
  row("Category", header);
  std::string rule(kFirst, '-');
  for (auto w : widths) rule += "-+-" + std::string(w, '-');
  out << rule << "\n";
  for (NodeKind kind : kReportedCategories) {
    std::vector<std::string> cells;
    for (const auto& r : results) {
      cells.push_back(cell(r.decision.per_category, kind));
      cells.push_back(cell(r.choice.per_category, kind));
    }
    row(std::string(to_string(kind)), cells);
  }
  out << rule << "\n";
  std::vector<std::string> overall;
  for (const auto& r : results) {
    overall.push_back(format_percent(r.decision.overall));
    overall.push_back(format_percent(r.choice.overall));
  }
  row("Overall", overall);
  out << "\n";
  for (const auto& r : results) {
    std::size_t total = r.entries.size();
    std::size_t keys = 0, choices = 0;
    for (const auto& e : r.entries) {
      keys += e.key_matched;
      choices += e.choice_matched;
    }
    out << r.scenario << ": " << keys << "/" << total << " keys, " << choices << "/" << total
        << " choices; matching: " << r.matcher << "\n";
  }
  return out.str();
}

json coverage_report_json(std::span<const CoverageResult> results) {
  json scenarios = json::array();
  for (const auto& r : results) {
    json categories = json::array();
    for (NodeKind kind : kReportedCategories) {
      auto it = r.counts.find(kind);
      json c = {{"category", to_string(kind)}};
      if (it == r.counts.end()) {
        c["truth"] = 0;
        c["decision"] = nullptr;
        c["choice"] = nullptr;
      } else {
        c["truth"] = it->second.truth;
        c["matched_keys"] = it->second.keys;
        c["matched_choices"] = it->second.choices;
        c["decision"] = r.decision.per_category.at(kind);
        c["choice"] = r.choice.per_category.at(kind);
      }
      categories.push_back(std::move(c));
    }
    json entries = json::array();
    for (const auto& e : r.entries) {
      entries.push_back({{"category", to_string(e.category)},
                         {"key", e.key.str()},
                         {"key_matched", e.key_matched},
                         {"choice_matched", e.choice_matched}});
    }
    scenarios.push_back({{"scenario", r.scenario},
                         {"matcher", r.matcher},
                         {"categories", categories},
                         {"overall", {{"decision", r.decision.overall}, {"choice", r.choice.overall}}},
                         {"entries", entries}});
  }
  return {{"schema", kCoverageReportSchema}, {"schema_version", kSchemaVersion}, {"scenarios", scenarios}};
}

}  // namespace elicit
