#pragma once

#include "elicit/decision_key.hpp"
#include "elicit/node_kind.hpp"

#include <cstddef>
#include <limits>
#include <map>
#include <set>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace elicit {

using Label = std::string;
using LabelSet = std::set<Label>;

enum class DecisionCategory {
  UniversalKeyUniversalValue,
  UniversalKeyDomainValue,
  DomainKeyDomainValue,
};

std::string_view to_string(DecisionCategory category);

struct DecisionDef {
  DecisionKey key;
  DecisionCategory category = DecisionCategory::UniversalKeyUniversalValue;
  NodeKind node_kind = NodeKind::Collect;
  /// Domain label set -> options. Universal options live under the empty set.
  std::map<LabelSet, std::vector<std::string>> value_sets;
  std::string description;

  /// Options offered in a session labelled `session_labels`: the universal set
  /// plus every domain set sharing at least one label, in key order, without
  /// duplicates. Falls back to every option when nothing applies.
  std::vector<std::string> applicable_values(const LabelSet& session_labels) const;

  friend bool operator==(const DecisionDef&, const DecisionDef&) = default;
};

struct DataPractice {
  std::string id;
  LabelSet domain_labels;
  /// Sorted, duplicate-free (key, value) pairs.
  std::set<std::pair<DecisionKey, std::string>> decisions;
  std::string source_ref;

  bool has_key(const DecisionKey& key) const;
  std::set<DecisionKey> keys() const;

  friend bool operator==(const DataPractice&, const DataPractice&) = default;
};

/// Per-key occurrence and per-pair co-occurrence counts over a set of
/// practices. A practice counts at most once per key however many values it
/// records for that key.
class Cooccurrence {
 public:
  Cooccurrence() = default;
  explicit Cooccurrence(std::span<const DataPractice> practices);

  std::size_t practice_count() const noexcept { return practices_; }
  std::size_t marginal(const DecisionKey& key) const;
  std::size_t joint(const DecisionKey& a, const DecisionKey& b) const;
  const std::map<DecisionKey, std::size_t>& marginals() const noexcept { return marginals_; }
  const std::map<std::pair<DecisionKey, DecisionKey>, std::size_t>& pairs() const noexcept {
    return joint_;
  }

  friend bool operator==(const Cooccurrence&, const Cooccurrence&) = default;

 private:
  std::size_t practices_ = 0;
  std::map<DecisionKey, std::size_t> marginals_;
  std::map<std::pair<DecisionKey, DecisionKey>, std::size_t> joint_;  // first < second
};

struct DesignSpace {
  std::string version;
  LabelSet label_vocabulary;
  std::vector<DecisionDef> definitions;
  std::vector<DataPractice> corpus;
  /// Statistics over the whole corpus; refreshed by recompute_cooccurrence().
  Cooccurrence stats;

  std::size_t practice_count() const noexcept { return corpus.size(); }
  const DecisionDef* find(const DecisionKey& key, NodeKind kind) const;
  bool defines(const DecisionKey& key) const;
  std::vector<const DecisionDef*> definitions_for(NodeKind kind) const;
};

inline constexpr int kDesignSpaceSchemaVersion = 1;
inline constexpr double kRelevanceThreshold = 0.4;
/// Averaging contribution of a pair that never co-occurs.
inline constexpr double kDefaultNegativeEvidenceFloor = -10.0;
/// mutual_information() result when the pair never co-occurs.
inline constexpr double kNegativeEvidence = -std::numeric_limits<double>::infinity();

inline bool is_negative_evidence(double score) { return score == kNegativeEvidence; }

/// |a ∩ b| / |a ∪ b|, and 0 when both sets are empty.
double jaccard(const LabelSet& a, const LabelSet& b);

/// Practices whose label similarity to the session is strictly above
/// `threshold`, in corpus order.
std::vector<DataPractice> relevant_practices(const DesignSpace& space,
                                             const LabelSet& session_labels,
                                             double threshold = kRelevanceThreshold);

/// Definitions for `node_kind` whose key is evidenced by at least one relevant
/// practice and not yet answered. Definition order, no duplicates.
std::vector<DecisionDef> candidate_decisions(const DesignSpace& space,
                                             std::span<const DataPractice> relevant,
                                             NodeKind node_kind,
                                             const std::set<DecisionKey>& already_answered);

/// Pointwise mutual information over raw counts:
///   log(c12 * N / (c1 * c2)),  N = number of relevant practices.
/// kNegativeEvidence when c12, c1 or c2 is zero. Throws Error{SameKey} when
/// d1 == d2 and Error{InvalidArgument} when `relevant` is empty.
double mutual_information(const DesignSpace& space, std::span<const DataPractice> relevant,
                          const DecisionKey& d1, const DecisionKey& d2);
double mutual_information(const Cooccurrence& counts, const DecisionKey& d1, const DecisionKey& d2);

struct RankedDecision {
  DecisionDef def;
  double score = 0.0;
  std::size_t frequency = 0;
  /// True when the score is the mean of MI terms (false on cold start).
  bool from_prior = false;
};

struct RankingOptions {
  double negative_evidence_floor = kDefaultNegativeEvidenceFloor;
};

/// Scores each candidate by the mean PMI against every prior key (never-
/// co-occurring pairs contribute the floor; the candidate's own key is not
/// compared with itself and a candidate left with nothing to compare scores at
/// the floor). Without priors the score is the candidate's frequency among the
/// relevant practices. Order: score desc, frequency desc, key asc, kind asc.
std::vector<RankedDecision> rank_by_prior_choices(const DesignSpace& space,
                                                  std::span<const DataPractice> relevant,
                                                  std::span<const DecisionDef> candidates,
                                                  const std::set<DecisionKey>& prior,
                                                  const RankingOptions& options = {});
std::vector<RankedDecision> rank_by_prior_choices(const Cooccurrence& counts,
                                                  std::span<const DecisionDef> candidates,
                                                  const std::set<DecisionKey>& prior,
                                                  const RankingOptions& options = {});

/// Replaces space.stats with a full recount over space.corpus.
void recompute_cooccurrence(DesignSpace& space);

struct Violation {
  std::string locator;  // e.g. "definitions[3]" or "corpus[p-12].decisions"
  std::string message;
};

std::vector<Violation> validate_design_space(const DesignSpace& space);

/// Throws Error{ParseError}, Error{SchemaVersionMismatch} or
/// Error{InvariantViolation} (message lists every violation).
DesignSpace load_design_space(const std::string& path);
DesignSpace parse_design_space(std::string_view text);
std::string serialize_design_space(const DesignSpace& space);
void save_design_space(const DesignSpace& space, const std::string& path);

/// Reads a label vocabulary file ({"labels": [...]}).
LabelSet load_label_vocabulary(const std::string& path);

}  // namespace elicit
