#include "elicit/design_space.hpp"

#include "elicit/error.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

namespace elicit {

using json = nlohmann::json;

namespace {

constexpr std::string_view kSchemaName = "elicit.design-space";

[[noreturn]] void parse_fail(const std::string& message) {
  throw Error(ErrorCode::ParseError, "design space: " + message);
}

const json& need(const json& j, const char* name) {
  if (!j.is_object() || !j.contains(name)) parse_fail(std::string("missing field '") + name + "'");
  return j.at(name);
}

std::string need_string(const json& j, const char* name) {
  const json& v = need(j, name);
  if (!v.is_string()) parse_fail(std::string("field '") + name + "' must be a string");
  return v.get<std::string>();
}

std::vector<std::string> string_list(const json& j, const std::string& what) {
  if (!j.is_array()) parse_fail(what + " must be an array");
  std::vector<std::string> out;
  for (const auto& s : j) {
    if (!s.is_string()) parse_fail(what + " must contain strings");
    out.push_back(s.get<std::string>());
  }
  return out;
}

DecisionKey parse_key(const std::string& text) {
  if (!is_canonical_key(text)) parse_fail("'" + text + "' is not a canonical decision key");
  return DecisionKey::from_canonical(text);
}

DecisionCategory parse_category(const std::string& text) {
  if (text == "universal_key_universal_value") return DecisionCategory::UniversalKeyUniversalValue;
  if (text == "universal_key_domain_value") return DecisionCategory::UniversalKeyDomainValue;
  if (text == "domain_key_domain_value") return DecisionCategory::DomainKeyDomainValue;
  parse_fail("unknown decision category '" + text + "'");
}

std::string category_token(DecisionCategory category) {
  switch (category) {
    case DecisionCategory::UniversalKeyUniversalValue: return "universal_key_universal_value";
    case DecisionCategory::UniversalKeyDomainValue: return "universal_key_domain_value";
    case DecisionCategory::DomainKeyDomainValue: return "domain_key_domain_value";
  }
  return "";
}

std::string join_labels(const LabelSet& labels) {
  std::string out = "{";
  for (const auto& l : labels) {
    if (out.size() > 1) out += ",";
    out += l;
  }
  return out + "}";
}

}  // namespace

std::string_view to_string(DecisionCategory category) {
  switch (category) {
    case DecisionCategory::UniversalKeyUniversalValue: return "UniversalKeyUniversalValue";
    case DecisionCategory::UniversalKeyDomainValue: return "UniversalKeyDomainValue";
    case DecisionCategory::DomainKeyDomainValue: return "DomainKeyDomainValue";
  }
  return "";
}

std::vector<std::string> DecisionDef::applicable_values(const LabelSet& session_labels) const {
  std::vector<std::string> out;
  auto add = [&out](const std::vector<std::string>& values) {
    for (const auto& v : values) {
      if (std::find(out.begin(), out.end(), v) == out.end()) out.push_back(v);
    }
  };
  for (const auto& [labels, values] : value_sets) {
    bool applies = labels.empty() || std::any_of(labels.begin(), labels.end(), [&](const auto& l) {
                     return session_labels.count(l) != 0;
                   });
    if (applies) add(values);
  }
  if (out.empty()) {
    for (const auto& [_, values] : value_sets) add(values);
  }
  return out;
}

bool DataPractice::has_key(const DecisionKey& key) const {
  auto it = decisions.lower_bound({key, std::string()});
  return it != decisions.end() && it->first == key;
}

std::set<DecisionKey> DataPractice::keys() const {
  std::set<DecisionKey> out;
  for (const auto& [key, _] : decisions) out.insert(key);
  return out;
}

Cooccurrence::Cooccurrence(std::span<const DataPractice> practices) : practices_(practices.size()) {
  for (const auto& practice : practices) {
    std::set<DecisionKey> keys = practice.keys();
    for (auto a = keys.begin(); a != keys.end(); ++a) {
      ++marginals_[*a];
      for (auto b = std::next(a); b != keys.end(); ++b) ++joint_[{*a, *b}];
    }
  }
}

std::size_t Cooccurrence::marginal(const DecisionKey& key) const {
  auto it = marginals_.find(key);
  return it == marginals_.end() ? 0 : it->second;
}

std::size_t Cooccurrence::joint(const DecisionKey& a, const DecisionKey& b) const {
  if (a == b) return marginal(a);
  auto it = joint_.find(a < b ? std::pair{a, b} : std::pair{b, a});
  return it == joint_.end() ? 0 : it->second;
}

const DecisionDef* DesignSpace::find(const DecisionKey& key, NodeKind kind) const {
  for (const auto& def : definitions) {
    if (def.key == key && def.node_kind == kind) return &def;
  }
  return nullptr;
}

bool DesignSpace::defines(const DecisionKey& key) const {
  return std::any_of(definitions.begin(), definitions.end(),
                     [&](const DecisionDef& d) { return d.key == key; });
}

std::vector<const DecisionDef*> DesignSpace::definitions_for(NodeKind kind) const {
  std::vector<const DecisionDef*> out;
  for (const auto& def : definitions) {
    if (def.node_kind == kind) out.push_back(&def);
  }
  return out;
}

double jaccard(const LabelSet& a, const LabelSet& b) {
  if (a.empty() && b.empty()) return 0.0;
  std::size_t common = 0;
  for (const auto& label : a) common += b.count(label);
  const std::size_t total = a.size() + b.size() - common;
  return static_cast<double>(common) / static_cast<double>(total);
}

std::vector<DataPractice> relevant_practices(const DesignSpace& space,
                                             const LabelSet& session_labels, double threshold) {
  if (threshold < 0.0 || threshold > 1.0) {
    throw Error(ErrorCode::InvalidArgument, "relevance threshold must lie in [0, 1]");
  }
  std::vector<DataPractice> out;
  for (const auto& practice : space.corpus) {
    if (jaccard(session_labels, practice.domain_labels) > threshold) out.push_back(practice);
  }
  return out;
}

std::vector<DecisionDef> candidate_decisions(const DesignSpace& space,
                                             std::span<const DataPractice> relevant,
                                             NodeKind node_kind,
                                             const std::set<DecisionKey>& already_answered) {
  std::set<DecisionKey> evidenced;
  for (const auto& practice : relevant) {
    for (const auto& [key, _] : practice.decisions) evidenced.insert(key);
  }
  std::vector<DecisionDef> out;
  for (const auto& def : space.definitions) {
    if (def.node_kind != node_kind) continue;
    if (evidenced.count(def.key) == 0 || already_answered.count(def.key) != 0) continue;
    bool dup = std::any_of(out.begin(), out.end(), [&](const DecisionDef& d) { return d.key == def.key; });
    if (!dup) out.push_back(def);
  }
  return out;
}

double mutual_information(const Cooccurrence& counts, const DecisionKey& d1, const DecisionKey& d2) {
  if (d1 == d2) throw Error(ErrorCode::SameKey, "mutual information of '" + d1.str() + "' with itself");
  if (counts.practice_count() == 0) {
    throw Error(ErrorCode::InvalidArgument, "mutual information over an empty practice set");
  }
  const auto c1 = static_cast<double>(counts.marginal(d1));
  const auto c2 = static_cast<double>(counts.marginal(d2));
  const auto c12 = static_cast<double>(counts.joint(d1, d2));
  if (c1 == 0.0 || c2 == 0.0 || c12 == 0.0) return kNegativeEvidence;
  const auto n = static_cast<double>(counts.practice_count());
  return std::log(c12 * n / (c1 * c2));
}

double mutual_information(const DesignSpace&, std::span<const DataPractice> relevant,
                          const DecisionKey& d1, const DecisionKey& d2) {
  if (d1 == d2) throw Error(ErrorCode::SameKey, "mutual information of '" + d1.str() + "' with itself");
  return mutual_information(Cooccurrence(relevant), d1, d2);
}

std::vector<RankedDecision> rank_by_prior_choices(const Cooccurrence& counts,
                                                  std::span<const DecisionDef> candidates,
                                                  const std::set<DecisionKey>& prior,
                                                  const RankingOptions& options) {
  std::vector<RankedDecision> ranked;
  ranked.reserve(candidates.size());
  for (const auto& def : candidates) {
    RankedDecision r{def, 0.0, counts.marginal(def.key), !prior.empty()};
    if (prior.empty()) {
      r.score = static_cast<double>(r.frequency);
    } else {
      double sum = 0.0;
      std::size_t terms = 0;
      for (const auto& p : prior) {
        if (p == def.key) continue;
        double mi = counts.practice_count() == 0 ? kNegativeEvidence : mutual_information(counts, def.key, p);
        sum += is_negative_evidence(mi) ? options.negative_evidence_floor : mi;
        ++terms;
      }
      r.score = terms == 0 ? options.negative_evidence_floor : sum / static_cast<double>(terms);
    }
    ranked.push_back(std::move(r));
  }
  std::sort(ranked.begin(), ranked.end(), [](const RankedDecision& a, const RankedDecision& b) {
    if (a.score != b.score) return a.score > b.score;
    if (a.frequency != b.frequency) return a.frequency > b.frequency;
    if (a.def.key != b.def.key) return a.def.key < b.def.key;
    return a.def.node_kind < b.def.node_kind;
  });
  return ranked;
}

std::vector<RankedDecision> rank_by_prior_choices(const DesignSpace&,
                                                  std::span<const DataPractice> relevant,
                                                  std::span<const DecisionDef> candidates,
                                                  const std::set<DecisionKey>& prior,
                                                  const RankingOptions& options) {
  return rank_by_prior_choices(Cooccurrence(relevant), candidates, prior, options);
}

void recompute_cooccurrence(DesignSpace& space) { space.stats = Cooccurrence(space.corpus); }

std::vector<Violation> validate_design_space(const DesignSpace& space) {
  std::vector<Violation> out;
  if (space.version.empty()) out.push_back({"version", "version must not be empty"});
  if (space.label_vocabulary.empty()) out.push_back({"labels", "label vocabulary is empty"});

  std::set<std::pair<DecisionKey, NodeKind>> seen_defs;
  for (std::size_t i = 0; i < space.definitions.size(); ++i) {
    const auto& def = space.definitions[i];
    const std::string loc = "definitions[" + std::to_string(i) + "](" + def.key.str() + ")";
    if (!is_canonical_key(def.key.str())) out.push_back({loc, "key is not canonical"});
    if (!seen_defs.emplace(def.key, def.node_kind).second) {
      out.push_back({loc, "duplicate (key, node_kind) = (" + def.key.str() + ", " +
                              std::string(to_string(def.node_kind)) + ")"});
    }
    if (def.value_sets.empty()) out.push_back({loc, "no value sets"});
    if (def.category == DecisionCategory::UniversalKeyUniversalValue &&
        (def.value_sets.size() != 1 || !def.value_sets.begin()->first.empty())) {
      out.push_back({loc, "universal values must be a single set under the empty label set"});
    }
    for (const auto& [labels, values] : def.value_sets) {
      const std::string vloc = loc + ".values" + join_labels(labels);
      if (values.empty()) out.push_back({vloc, "value list is empty"});
      std::set<std::string> uniq;
      for (const auto& v : values) {
        if (v.empty()) out.push_back({vloc, "empty option"});
        if (!uniq.insert(v).second) out.push_back({vloc, "duplicate option '" + v + "'"});
      }
      for (const auto& l : labels) {
        if (space.label_vocabulary.count(l) == 0) out.push_back({vloc, "unknown label '" + l + "'"});
      }
    }
  }

  std::set<std::string> ids;
  for (std::size_t i = 0; i < space.corpus.size(); ++i) {
    const auto& p = space.corpus[i];
    const std::string loc = "corpus[" + (p.id.empty() ? std::to_string(i) : p.id) + "]";
    if (p.id.empty()) out.push_back({loc, "practice id is empty"});
    if (!ids.insert(p.id).second) out.push_back({loc, "duplicate practice id"});
    if (p.domain_labels.empty()) out.push_back({loc + ".labels", "no domain labels"});
    for (const auto& l : p.domain_labels) {
      if (space.label_vocabulary.count(l) == 0) out.push_back({loc + ".labels", "unknown label '" + l + "'"});
    }
    if (p.decisions.empty()) out.push_back({loc + ".decisions", "no decisions"});
    for (const auto& [key, value] : p.decisions) {
      if (!space.defines(key)) {
        out.push_back({loc + ".decisions", "undefined decision key '" + key.str() + "'"});
      }
      if (value.empty()) out.push_back({loc + ".decisions", "empty value for '" + key.str() + "'"});
    }
  }
  if (space.stats.practice_count() != space.corpus.size()) {
    out.push_back({"stats", "cached practice count differs from corpus size"});
  }
  return out;
}

DesignSpace parse_design_space(std::string_view text) {
  json root = json::parse(text, nullptr, false);
  if (root.is_discarded() || !root.is_object()) parse_fail("not a JSON object");
  if (root.value("schema", "") != kSchemaName) parse_fail("schema must be '" + std::string(kSchemaName) + "'");
  if (!root.contains("schema_version") || root.at("schema_version") != kDesignSpaceSchemaVersion) {
    throw Error(ErrorCode::SchemaVersionMismatch,
                "design space schema_version " + root.value("schema_version", json()).dump() +
                    " is not supported (expected " + std::to_string(kDesignSpaceSchemaVersion) + ")");
  }

  DesignSpace space;
  space.version = need_string(root, "version");
  for (auto& l : string_list(need(root, "labels"), "labels")) space.label_vocabulary.insert(l);

  for (const auto& d : need(root, "definitions")) {
    DecisionDef def;
    def.key = parse_key(need_string(d, "key"));
    def.category = parse_category(need_string(d, "category"));
    auto kind = parse_node_kind(need_string(d, "node_kind"));
    if (!kind) parse_fail("unknown node kind '" + need_string(d, "node_kind") + "'");
    def.node_kind = *kind;
    def.description = d.value("description", "");
    for (const auto& vs : need(d, "values")) {
      auto labels = string_list(need(vs, "labels"), "value set labels");
      auto [it, inserted] = def.value_sets.emplace(LabelSet(labels.begin(), labels.end()),
                                                   string_list(need(vs, "options"), "options"));
      if (!inserted) parse_fail("definition '" + def.key.str() + "' repeats a label set");
    }
    space.definitions.push_back(std::move(def));
  }

  for (const auto& p : need(root, "corpus")) {
    DataPractice practice;
    practice.id = need_string(p, "id");
    for (auto& l : string_list(need(p, "labels"), "practice labels")) practice.domain_labels.insert(l);
    const json& decisions = need(p, "decisions");
    if (!decisions.is_object()) parse_fail("practice decisions must be an object");
    for (const auto& [key, values] : decisions.items()) {
      DecisionKey k = parse_key(key);
      for (auto& v : string_list(values, "decision values")) practice.decisions.emplace(k, v);
    }
    practice.source_ref = p.value("source", "");
    space.corpus.push_back(std::move(practice));
  }
  recompute_cooccurrence(space);

  auto violations = validate_design_space(space);
  if (!violations.empty()) {
    std::string message = "design space has " + std::to_string(violations.size()) + " violation(s):";
    for (const auto& v : violations) message += "\n  " + v.locator + ": " + v.message;
    throw Error(ErrorCode::InvariantViolation, message);
  }
  return space;
}

DesignSpace load_design_space(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::ParseError, "cannot open design space file '" + path + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_design_space(buf.str());
}

std::string serialize_design_space(const DesignSpace& space) {
  json defs = json::array();
  for (const auto& def : space.definitions) {
    json values = json::array();
    for (const auto& [labels, options] : def.value_sets) {
      values.push_back({{"labels", labels}, {"options", options}});
    }
    defs.push_back({{"key", def.key.str()},
                    {"category", category_token(def.category)},
                    {"node_kind", to_string(def.node_kind)},
                    {"description", def.description},
                    {"values", values}});
  }
  json corpus = json::array();
  for (const auto& p : space.corpus) {
    json decisions = json::object();
    for (const auto& [key, value] : p.decisions) decisions[key.str()].push_back(value);
    corpus.push_back({{"id", p.id}, {"labels", p.domain_labels}, {"decisions", decisions}, {"source", p.source_ref}});
  }
  json root = {{"schema", kSchemaName},
               {"schema_version", kDesignSpaceSchemaVersion},
               {"version", space.version},
               {"labels", space.label_vocabulary},
               {"definitions", defs},
               {"corpus", corpus}};
  return root.dump(1) + "\n";
}

void save_design_space(const DesignSpace& space, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::InvalidArgument, "cannot write design space to '" + path + "'");
  out << serialize_design_space(space);
}

LabelSet load_label_vocabulary(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::ParseError, "cannot open label vocabulary '" + path + "'");
  json root = json::parse(in, nullptr, false);
  if (root.is_discarded()) parse_fail("label vocabulary is not valid JSON");
  auto labels = string_list(need(root, "labels"), "labels");
  return LabelSet(labels.begin(), labels.end());
}

}  // namespace elicit
