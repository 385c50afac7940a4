#pragma once

#include "elicit/decision_key.hpp"
#include "elicit/graph.hpp"
#include "elicit/node_kind.hpp"

#include <nlohmann/json.hpp>

#include <array>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace elicit {

inline constexpr std::string_view kGroundTruthSchema = "elicit.ground-truth";
inline constexpr std::string_view kDecisionSetSchema = "elicit.decision-set";
inline constexpr std::string_view kCoverageReportSchema = "elicit.coverage-report";

/// The ten categories coverage is reported for: four data actions then six
/// stakeholder interactions. Influence is not reported.
inline constexpr std::array<NodeKind, 10> kReportedCategories = {
    NodeKind::Collect, NodeKind::Process, NodeKind::Store,   NodeKind::Share,   NodeKind::Consent,
    NodeKind::Notice,  NodeKind::Control, NodeKind::Access,  NodeKind::Request, NodeKind::Audit,
};

bool is_reported_category(NodeKind kind);

/// Expected values are stored normalized (see normalize_value).
struct TruthEntry {
  NodeKind category = NodeKind::Collect;
  DecisionKey key;
  std::set<std::string> values;
  std::string description;

  friend bool operator==(const TruthEntry&, const TruthEntry&) = default;
};

struct GroundTruth {
  std::string scenario;
  std::string goal;
  std::vector<TruthEntry> entries;

  /// Throws Error{InvariantViolation}: empty scenario, no entries, an
  /// unreported category, an entry without values, or a repeated
  /// (category, key).
  void validate() const;

  friend bool operator==(const GroundTruth&, const GroundTruth&) = default;
};

/// Same layout as a design-space file: `definitions` holding key, node_kind,
/// description and `values`. Keys are canonicalized on the way in.
GroundTruth parse_ground_truth(const nlohmann::json& j);
GroundTruth load_ground_truth(const std::string& path);
nlohmann::json ground_truth_to_json(const GroundTruth& truth);

/// One decision recorded by a session: the node kind it sits on, its key and
/// every value chosen for it.
struct OutputDecision {
  NodeKind category = NodeKind::Collect;
  DecisionKey key;
  std::vector<std::string> values;

  friend bool operator==(const OutputDecision&, const OutputDecision&) = default;
};

using DecisionSet = std::vector<OutputDecision>;

/// Every decision on every node, in node order. Follow-up `_details` keys are
/// left out.
DecisionSet decisions_from_graph(const PrivacyGraph& graph);

/// Accepts a decision-set document or a graph snapshot.
DecisionSet parse_decision_set(const nlohmann::json& j);
nlohmann::json decision_set_to_json(const DecisionSet& decisions);

/// Reads a decision-set file, a graph snapshot, or a line-delimited session
/// log (replayed without a provider).
DecisionSet load_evaluation_output(const std::string& path);

/// Trims, collapses inner whitespace and lowercases ASCII letters.
std::string normalize_value(std::string_view value);

/// Output key -> truth key and output value -> truth value substitutions,
/// applied before the exact comparison.
struct AliasMap {
  std::map<DecisionKey, DecisionKey> keys;
  std::map<std::string, std::string> values;

  bool empty() const noexcept { return keys.empty() && values.empty(); }
  DecisionKey key(const DecisionKey& k) const;
  std::string value(std::string_view v) const;

  friend bool operator==(const AliasMap&, const AliasMap&) = default;
};

/// {"keys": {alias: key}, "values": {alias: value}}; both optional.
AliasMap parse_alias_map(const nlohmann::json& j);
AliasMap load_alias_map(const std::string& path);

/// Decides whether an output decision covers a truth entry. The default
/// compares canonical keys and normalized values after alias substitution;
/// other implementations (e.g. provider-assisted) can be plugged in.
class Matcher {
 public:
  virtual ~Matcher() = default;
  virtual bool key_matches(const TruthEntry& truth, const OutputDecision& output) const = 0;
  virtual bool value_matches(const TruthEntry& truth, const std::string& output_value) const = 0;
  /// One line for reports.
  virtual std::string describe() const = 0;
};

class AliasMatcher : public Matcher {
 public:
  explicit AliasMatcher(AliasMap aliases = {}) : aliases_(std::move(aliases)) {}

  bool key_matches(const TruthEntry& truth, const OutputDecision& output) const override;
  bool value_matches(const TruthEntry& truth, const std::string& output_value) const override;
  std::string describe() const override;

 private:
  AliasMap aliases_;
};

/// Fractions per reported category (only those with truth entries) and the
/// micro-average over all entries.
struct Coverage {
  std::map<NodeKind, double> per_category;
  double overall = 0.0;
};

Coverage decision_coverage(const DecisionSet& output, const GroundTruth& truth, const Matcher& matcher);
Coverage decision_coverage(const DecisionSet& output, const GroundTruth& truth);
Coverage choice_coverage(const DecisionSet& output, const GroundTruth& truth, const Matcher& matcher);
Coverage choice_coverage(const DecisionSet& output, const GroundTruth& truth);

struct EntryOutcome {
  NodeKind category = NodeKind::Collect;
  DecisionKey key;
  bool key_matched = false;
  bool choice_matched = false;
};

struct CategoryCounts {
  std::size_t truth = 0;
  std::size_t keys = 0;
  std::size_t choices = 0;
};

struct CoverageResult {
  std::string scenario;
  std::string matcher;
  std::vector<EntryOutcome> entries;
  std::map<NodeKind, CategoryCounts> counts;
  Coverage decision;
  Coverage choice;
};

CoverageResult evaluate(const DecisionSet& output, const GroundTruth& truth, const Matcher& matcher);
CoverageResult evaluate(const DecisionSet& output, const GroundTruth& truth);

/// Categories as rows, a decision and a choice column per scenario, then an
/// overall row. Cells are percentages with two decimals; "-" marks a category
/// without truth entries.
std::string format_coverage_report(std::span<const CoverageResult> results);
nlohmann::json coverage_report_json(std::span<const CoverageResult> results);

/// "93.67%" style, two decimals.
std::string format_percent(double fraction);

}  // namespace elicit
