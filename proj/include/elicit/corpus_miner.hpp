#pragma once

#include "elicit/design_space.hpp"
#include "elicit/provider.hpp"

#include <nlohmann/json_fwd.hpp>

#include <map>
#include <memory>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace elicit {

struct Document {
  std::string id;
  std::string title;
  std::string body;
  /// Remaining front-matter fields (source, date, ...).
  std::map<std::string, std::string> metadata;
};

/// Parses an optional front-matter block delimited by "---" lines followed by
/// the body. `fallback_id` is used when the front matter has no id.
/// Throws Error{ParseError} for an unterminated block or an empty body.
Document parse_document(std::string_view text, const std::string& fallback_id);
/// Every *.md and *.txt file in `dir`, sorted by file name.
std::vector<Document> load_documents(const std::string& dir);

// ---------------------------------------------------------------------------

struct Relevance {
  bool relevant = false;
  double confidence = 0.0;
};

/// Raw annotator output; keys are not yet canonical.
struct ValueExtraction {
  std::string key;
  std::string value;
  friend bool operator==(const ValueExtraction&, const ValueExtraction&) = default;
};

struct KeyDiscovery {
  std::string key;
  std::string node_kind;
  std::string value;
  std::string description;
  friend bool operator==(const KeyDiscovery&, const KeyDiscovery&) = default;
};

using KindedKey = std::pair<DecisionKey, NodeKind>;

/// Must be safe to call concurrently for different documents.
class Annotator {
 public:
  virtual ~Annotator() = default;
  virtual Relevance is_privacy_design_relevant(const Document& doc) = 0;
  virtual std::vector<std::string> segment_practices(const Document& doc) = 0;
  virtual LabelSet label_domains(const std::string& segment) = 0;
  virtual std::vector<ValueExtraction> extract_known_values(const std::string& segment,
                                                            const std::vector<DecisionDef>& known) = 0;
  /// Who/What/When/Where/How questions about the segment, skipping `excluded`.
  virtual std::vector<KeyDiscovery> discover_new_keys(const std::string& segment,
                                                      const std::set<KindedKey>& excluded) = 0;
};

/// Cue tables for the rule annotator. Cues match case-insensitively on word
/// boundaries.
struct MiningRules {
  struct ValueRule {
    std::string key;
    std::string value;
    std::vector<std::string> cues;
  };
  struct KeyRule {
    std::string key;
    std::string node_kind;
    std::string value;
    std::string description;
    std::vector<std::string> cues;
  };
  std::vector<std::string> relevance_terms;
  /// Distinct relevance terms a document needs.
  std::size_t min_relevance_hits = 2;
  std::vector<std::pair<Label, std::vector<std::string>>> label_cues;
  std::vector<ValueRule> values;
  std::vector<KeyRule> new_keys;
};

MiningRules parse_mining_rules(std::string_view text);
MiningRules load_mining_rules(const std::string& path);

/// True when `cue` occurs in `text` ignoring case, bounded by non-alphanumeric
/// characters or the ends of the text.
bool contains_cue(std::string_view text, std::string_view cue);

class RuleAnnotator final : public Annotator {
 public:
  explicit RuleAnnotator(MiningRules rules);

  Relevance is_privacy_design_relevant(const Document& doc) override;
  /// Blank-line separated paragraphs that mention a relevance term; headings
  /// (lines starting with '#') are not paragraphs.
  std::vector<std::string> segment_practices(const Document& doc) override;
  LabelSet label_domains(const std::string& segment) override;
  std::vector<ValueExtraction> extract_known_values(const std::string& segment,
                                                    const std::vector<DecisionDef>& known) override;
  std::vector<KeyDiscovery> discover_new_keys(const std::string& segment,
                                              const std::set<KindedKey>& excluded) override;

 private:
  MiningRules rules_;
};

/// Annotator backed by the chat-completion endpoint. Prompts are the
/// mining_*.txt templates.
class ExternalAnnotator final : public Annotator {
 public:
  ExternalAnnotator(ProviderConfig config, std::shared_ptr<ChatTransport> transport, PromptTemplates prompts,
                    LabelSet vocabulary);

  Relevance is_privacy_design_relevant(const Document& doc) override;
  std::vector<std::string> segment_practices(const Document& doc) override;
  LabelSet label_domains(const std::string& segment) override;
  std::vector<ValueExtraction> extract_known_values(const std::string& segment,
                                                    const std::vector<DecisionDef>& known) override;
  std::vector<KeyDiscovery> discover_new_keys(const std::string& segment,
                                              const std::set<KindedKey>& excluded) override;

 private:
  nlohmann::json call(const std::string& operation, const std::string& prompt);

  ProviderConfig config_;
  std::shared_ptr<ChatTransport> transport_;
  PromptTemplates prompts_;
  LabelSet vocabulary_;
};

// ---------------------------------------------------------------------------

struct MiningConfig {
  std::size_t max_iterations = 10;
  /// Saturated once an iteration adds fewer new keys than this fraction of
  /// all keys and fewer new values than `new_value_fraction` of all values.
  double new_key_fraction = 0.02;
  double new_value_fraction = 0.05;
  /// Distinct practices a discovered key needs before it leaves quarantine.
  std::size_t min_practices_for_new_key = 2;
  std::size_t parallelism = 1;

  /// Throws Error{InvalidArgument}.
  void validate() const;
};

MiningConfig mining_config_from_json(const nlohmann::json& j);

struct IterationStats {
  std::size_t iteration = 0;
  std::size_t documents_annotated = 0;
  std::size_t segments = 0;
  std::size_t new_keys = 0;
  std::size_t new_values = 0;
  std::size_t total_keys = 0;
  std::size_t total_values = 0;
  friend bool operator==(const IterationStats&, const IterationStats&) = default;
};

struct Addition {
  enum class What { Key, Value };
  What what = What::Value;
  DecisionKey key;
  NodeKind node_kind = NodeKind::Collect;
  LabelSet labels;
  std::string value;
  std::size_t iteration = 0;
  /// Documents whose practices evidenced the addition.
  std::vector<std::string> documents;
  friend bool operator==(const Addition&, const Addition&) = default;
};

struct QuarantineEntry {
  std::string document;
  std::size_t iteration = 0;
  std::string raw_key;
  std::string node_kind;  // empty for value extractions
  std::string value;
  std::string reason;
  friend bool operator==(const QuarantineEntry&, const QuarantineEntry&) = default;
};

struct DocumentNote {
  std::string document;
  std::size_t iteration = 0;
  std::string message;
  friend bool operator==(const DocumentNote&, const DocumentNote&) = default;
};

struct MiningReport {
  std::vector<IterationStats> iterations;
  bool saturated = false;
  std::size_t practices = 0;
  std::vector<std::string> irrelevant_documents;
  std::vector<Addition> additions;
  std::vector<QuarantineEntry> quarantine;
  /// Annotator failures; the document is skipped for that iteration.
  std::vector<DocumentNote> failures;
  /// Labels outside the vocabulary and segments that yielded no practice.
  std::vector<DocumentNote> dropped;
  friend bool operator==(const MiningReport&, const MiningReport&) = default;
};

nlohmann::json mining_report_to_json(const MiningReport& report);
std::string format_mining_report(const MiningReport& report);

struct MiningResult {
  DesignSpace space;
  MiningReport report;
};

/// Iteratively extracts values and new keys from `docs` into a copy of
/// `seed`. Throws Error{InvariantViolation} when the seed does not validate.
/// Running out of iterations is reported (saturated == false), not thrown.
MiningResult mine(const std::vector<Document>& docs, const DesignSpace& seed, Annotator& annotator,
                  const MiningConfig& config = {});

}  // namespace elicit
