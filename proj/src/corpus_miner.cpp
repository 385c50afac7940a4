#include "elicit/corpus_miner.hpp"

#include "elicit/error.hpp"
#include "json_util.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <thread>

namespace elicit {

using namespace detail;

namespace {

std::string trim(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

std::vector<std::string> split_lines(std::string_view text) {
  std::vector<std::string> out;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string line(text.substr(pos, end - pos));
    if (!line.empty() && line.back() == '\r') line.pop_back();
    out.push_back(std::move(line));
    pos = end + 1;
  }
  return out;
}

char lower(char c) { return static_cast<char>(std::tolower(static_cast<unsigned char>(c))); }
bool alnum(char c) { return std::isalnum(static_cast<unsigned char>(c)) != 0; }

std::string read_text(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw Error(ErrorCode::InvalidArgument, "cannot open '" + p.string() + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

}  // namespace

// ---------------------------------------------------------------------------
// Documents

Document parse_document(std::string_view text, const std::string& fallback_id) {
  Document doc;
  doc.id = fallback_id;
  auto lines = split_lines(text);
  std::size_t body_start = 0;
  if (!lines.empty() && trim(lines[0]) == "---") {
    std::size_t i = 1;
    for (; i < lines.size() && trim(lines[i]) != "---"; ++i) {
      const std::string line = trim(lines[i]);
      if (line.empty()) continue;
      auto colon = line.find(':');
      if (colon == std::string::npos) parse_fail(fallback_id + ": front-matter line without ':'");
      std::string name = trim(line.substr(0, colon));
      std::string value = trim(line.substr(colon + 1));
      if (name == "id") {
        doc.id = value;
      } else if (name == "title") {
        doc.title = value;
      } else {
        doc.metadata[name] = value;
      }
    }
    if (i == lines.size()) parse_fail(fallback_id + ": unterminated front matter");
    body_start = i + 1;
  }
  std::string body;
  for (std::size_t i = body_start; i < lines.size(); ++i) {
    body += lines[i];
    if (i + 1 < lines.size()) body += '\n';
  }
  doc.body = trim(body);
  if (doc.id.empty()) parse_fail("document id is empty");
  if (doc.body.empty()) parse_fail(doc.id + ": document body is empty");
  return doc;
}

std::vector<Document> load_documents(const std::string& dir) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(dir)) throw Error(ErrorCode::InvalidArgument, "document directory '" + dir + "' not found");
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    const auto ext = entry.path().extension();
    if (entry.is_regular_file() && (ext == ".md" || ext == ".txt")) files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  std::vector<Document> docs;
  std::set<std::string> ids;
  for (const auto& f : files) {
    docs.push_back(parse_document(read_text(f), f.stem().string()));
    if (!ids.insert(docs.back().id).second) parse_fail("duplicate document id '" + docs.back().id + "'");
  }
  return docs;
}

// ---------------------------------------------------------------------------
// Rules

bool contains_cue(std::string_view text, std::string_view cue) {
  if (cue.empty() || cue.size() > text.size()) return false;
  for (std::size_t i = 0; i + cue.size() <= text.size(); ++i) {
    bool match = true;
    for (std::size_t k = 0; k < cue.size() && match; ++k) match = lower(text[i + k]) == lower(cue[k]);
    if (!match) continue;
    const bool left = i == 0 || !alnum(text[i - 1]) || !alnum(cue.front());
    const bool right = i + cue.size() == text.size() || !alnum(text[i + cue.size()]) || !alnum(cue.back());
    if (left && right) return true;
  }
  return false;
}

MiningRules parse_mining_rules(std::string_view text) {
  json j = parse_json(text, "mining rules");
  MiningRules r;
  r.relevance_terms = string_list(j, "relevance_terms");
  if (j.contains("min_relevance_hits")) {
    const json& v = j.at("min_relevance_hits");
    if (!v.is_number_unsigned()) parse_fail("'min_relevance_hits' must be a non-negative integer");
    r.min_relevance_hits = v.get<std::size_t>();
  }
  const json& labels = field(j, "labels");
  if (!labels.is_object()) parse_fail("'labels' must be an object");
  for (const auto& [label, cues] : labels.items()) {
    r.label_cues.emplace_back(label, string_list(json{{"cues", cues}}, "cues"));
  }
  for (const auto& v : field(j, "values")) {
    r.values.push_back({string_field(v, "key"), string_field(v, "value"), string_list(v, "cues")});
  }
  for (const auto& k : field(j, "new_keys")) {
    r.new_keys.push_back({string_field(k, "key"), string_field(k, "node_kind"), string_field(k, "value"),
                          string_or(k, "description", ""), string_list(k, "cues")});
  }
  return r;
}

MiningRules load_mining_rules(const std::string& path) { return parse_mining_rules(read_text(path)); }

namespace {

bool any_cue(std::string_view text, const std::vector<std::string>& cues) {
  return std::any_of(cues.begin(), cues.end(), [&](const auto& c) { return contains_cue(text, c); });
}

std::optional<DecisionKey> try_canonical(std::string_view raw) {
  try {
    return canonicalize_key(raw);
  } catch (const Error&) {
    return std::nullopt;
  }
}

}  // namespace

RuleAnnotator::RuleAnnotator(MiningRules rules) : rules_(std::move(rules)) {}

Relevance RuleAnnotator::is_privacy_design_relevant(const Document& doc) {
  const std::string text = doc.title + "\n" + doc.body;
  std::size_t hits = 0;
  for (const auto& t : rules_.relevance_terms) hits += contains_cue(text, t);
  const double need = static_cast<double>(std::max<std::size_t>(rules_.min_relevance_hits, 1));
  return {hits >= rules_.min_relevance_hits, std::min(1.0, static_cast<double>(hits) / (2 * need))};
}

std::vector<std::string> RuleAnnotator::segment_practices(const Document& doc) {
  std::vector<std::string> out;
  std::string para;
  auto flush = [&] {
    std::string p = trim(para);
    para.clear();
    if (!p.empty() && any_cue(p, rules_.relevance_terms)) out.push_back(std::move(p));
  };
  for (const auto& line : split_lines(doc.body)) {
    const std::string t = trim(line);
    if (t.empty() || t.front() == '#') {
      flush();
      continue;
    }
    para += (para.empty() ? "" : " ") + t;
  }
  flush();
  return out;
}

LabelSet RuleAnnotator::label_domains(const std::string& segment) {
  LabelSet out;
  for (const auto& [label, cues] : rules_.label_cues) {
    if (any_cue(segment, cues)) out.insert(label);
  }
  return out;
}

std::vector<ValueExtraction> RuleAnnotator::extract_known_values(const std::string& segment,
                                                                 const std::vector<DecisionDef>& known) {
  std::set<DecisionKey> keys;
  for (const auto& d : known) keys.insert(d.key);
  std::vector<ValueExtraction> out;
  for (const auto& rule : rules_.values) {
    auto key = try_canonical(rule.key);
    if (!key || !keys.count(*key) || !any_cue(segment, rule.cues)) continue;
    ValueExtraction v{rule.key, rule.value};
    if (std::find(out.begin(), out.end(), v) == out.end()) out.push_back(std::move(v));
  }
  return out;
}

std::vector<KeyDiscovery> RuleAnnotator::discover_new_keys(const std::string& segment,
                                                           const std::set<KindedKey>& excluded) {
  std::vector<KeyDiscovery> out;
  for (const auto& rule : rules_.new_keys) {
    if (!any_cue(segment, rule.cues)) continue;
    auto key = try_canonical(rule.key);
    auto kind = parse_node_kind(rule.node_kind);
    if (key && kind && excluded.count({*key, *kind})) continue;
    out.push_back({rule.key, rule.node_kind, rule.value, rule.description});
  }
  return out;
}

// ---------------------------------------------------------------------------
// Configuration

void MiningConfig::validate() const {
  if (max_iterations == 0) throw Error(ErrorCode::InvalidArgument, "max_iterations must be at least 1");
  if (!(new_key_fraction > 0.0 && new_key_fraction <= 1.0)) {
    throw Error(ErrorCode::InvalidArgument, "new_key_fraction must be in (0, 1]");
  }
  if (!(new_value_fraction > 0.0 && new_value_fraction <= 1.0)) {
    throw Error(ErrorCode::InvalidArgument, "new_value_fraction must be in (0, 1]");
  }
  if (min_practices_for_new_key == 0) throw Error(ErrorCode::InvalidArgument, "min_practices_for_new_key must be >= 1");
  if (parallelism == 0) throw Error(ErrorCode::InvalidArgument, "parallelism must be >= 1");
}

MiningConfig mining_config_from_json(const json& j) {
  if (!j.is_object()) parse_fail("mining config must be an object");
  MiningConfig c;
  auto count = [&](const char* name, std::size_t& out) {
    if (!j.contains(name)) return;
    const json& v = j.at(name);
    if (!v.is_number_integer() || v.get<std::int64_t>() < 0) parse_fail(std::string("'") + name + "' must be a non-negative integer");
    out = v.get<std::size_t>();
  };
  auto number = [&](const char* name, double& out) {
    if (!j.contains(name)) return;
    if (!j.at(name).is_number()) parse_fail(std::string("'") + name + "' must be a number");
    out = j.at(name).get<double>();
  };
  count("max_iterations", c.max_iterations);
  count("min_practices_for_new_key", c.min_practices_for_new_key);
  count("parallelism", c.parallelism);
  number("new_key_fraction", c.new_key_fraction);
  number("new_value_fraction", c.new_value_fraction);
  c.validate();
  return c;
}

// ---------------------------------------------------------------------------
// Mining loop

namespace {

struct SegmentOutput {
  std::string text;
  LabelSet labels;
  std::vector<ValueExtraction> values;
  std::vector<KeyDiscovery> discoveries;
};

struct DocumentOutput {
  std::optional<std::string> failure;
  bool relevant = false;
  std::vector<SegmentOutput> segments;
};

DocumentOutput annotate(Annotator& annotator, const Document& doc, const std::vector<DecisionDef>& known,
                        const std::set<KindedKey>& excluded) {
  DocumentOutput out;
  try {
    out.relevant = annotator.is_privacy_design_relevant(doc).relevant;
    if (!out.relevant) return out;
    auto segments = annotator.segment_practices(doc);
    if (segments.empty()) segments.push_back(doc.body);
    for (auto& text : segments) {
      SegmentOutput s;
      s.labels = annotator.label_domains(text);
      s.values = annotator.extract_known_values(text, known);
      s.discoveries = annotator.discover_new_keys(text, excluded);
      s.text = std::move(text);
      out.segments.push_back(std::move(s));
    }
  } catch (const std::exception& e) {
    out = DocumentOutput{};
    out.failure = e.what();
  }
  return out;
}

std::vector<DocumentOutput> annotate_all(Annotator& annotator, const std::vector<Document>& docs,
                                         const std::vector<DecisionDef>& known, const std::set<KindedKey>& excluded,
                                         std::size_t parallelism) {
  std::vector<DocumentOutput> out(docs.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < docs.size(); i = next++) out[i] = annotate(annotator, docs[i], known, excluded);
  };
  const std::size_t threads = std::min(parallelism, docs.size());
  if (threads <= 1) {
    worker();
    return out;
  }
  std::vector<std::jthread> pool;
  for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
  pool.clear();
  return out;
}

std::size_t value_total(const DesignSpace& space) {
  std::size_t n = 0;
  for (const auto& d : space.definitions) {
    std::set<std::string> uniq;
    for (const auto& [labels, values] : d.value_sets) uniq.insert(values.begin(), values.end());
    n += uniq.size();
  }
  return n;
}

bool has_value(const DecisionDef& def, const std::string& value) {
  for (const auto& [labels, values] : def.value_sets) {
    if (std::find(values.begin(), values.end(), value) != values.end()) return true;
  }
  return false;
}

DecisionDef* first_def(DesignSpace& space, const DecisionKey& key) {
  for (auto& d : space.definitions) {
    if (d.key == key) return &d;
  }
  return nullptr;
}

DecisionDef* find_def(DesignSpace& space, const DecisionKey& key, NodeKind kind) {
  for (auto& d : space.definitions) {
    if (d.key == key && d.node_kind == kind) return &d;
  }
  return nullptr;
}

struct PendingKey {
  std::string raw;
  std::string description;
  std::set<std::string> practices;
  std::vector<std::string> documents;
  struct Observation {
    LabelSet labels;
    std::string value;
    std::string document;
    std::size_t iteration;
    std::string raw_kind;
    std::string raw_value;
  };
  std::vector<Observation> seen;
};

struct PracticeDraft {
  std::string id;
  std::string document;
  LabelSet labels;
  std::set<std::pair<DecisionKey, std::string>> decisions;
  std::vector<std::pair<KindedKey, std::string>> pending;
};

}  // namespace

MiningResult mine(const std::vector<Document>& docs, const DesignSpace& seed, Annotator& annotator,
                  const MiningConfig& config) {
  config.validate();
  if (auto violations = validate_design_space(seed); !violations.empty()) {
    std::string msg = "seed design space is invalid:";
    for (const auto& v : violations) msg += "\n  " + v.locator + ": " + v.message;
    throw Error(ErrorCode::InvariantViolation, msg);
  }
  MiningResult result{seed, {}};
  MiningReport& report = result.report;
  if (docs.empty()) {
    report.saturated = true;
    return result;
  }

  DesignSpace& space = result.space;
  std::map<KindedKey, PendingKey> pending;
  std::vector<DataPractice> mined;
  std::set<std::string> irrelevant;
  bool consolidating = false;

  for (std::size_t it = 1; it <= config.max_iterations; ++it) {
    const std::vector<DecisionDef> known = space.definitions;
    std::set<KindedKey> excluded;
    for (const auto& d : known) excluded.emplace(d.key, d.node_kind);
    auto outputs = annotate_all(annotator, docs, known, excluded, config.parallelism);

    IterationStats stats;
    stats.iteration = it;
    auto quarantine = [&](const std::string& doc, std::string raw_key, std::string kind, std::string value,
                          std::string reason) {
      report.quarantine.push_back({doc, it, std::move(raw_key), std::move(kind), std::move(value), std::move(reason)});
    };
    auto add_value = [&](DecisionDef& def, const LabelSet& labels, const std::string& value,
                         const std::string& doc) {
      if (has_value(def, value)) return;
      const LabelSet target = def.category == DecisionCategory::UniversalKeyUniversalValue ? LabelSet{} : labels;
      def.value_sets[target].push_back(value);
      ++stats.new_values;
      report.additions.push_back({Addition::What::Value, def.key, def.node_kind, target, value, it, {doc}});
    };

    std::vector<PracticeDraft> drafts;
    for (std::size_t d = 0; d < docs.size(); ++d) {
      const Document& doc = docs[d];
      const DocumentOutput& out = outputs[d];
      if (out.failure) {
        report.failures.push_back({doc.id, it, *out.failure});
        continue;
      }
      ++stats.documents_annotated;
      if (!out.relevant) {
        irrelevant.insert(doc.id);
        continue;
      }
      for (std::size_t s = 0; s < out.segments.size(); ++s) {
        const SegmentOutput& seg = out.segments[s];
        ++stats.segments;
        PracticeDraft draft;
        draft.id = "mined:" + doc.id + "#" + std::to_string(s + 1);
        draft.document = doc.id;
        for (const auto& l : seg.labels) {
          if (space.label_vocabulary.count(l)) {
            draft.labels.insert(l);
          } else {
            report.dropped.push_back({doc.id, it, "label '" + l + "' is not in the vocabulary"});
          }
        }
        for (const auto& v : seg.values) {
          const std::string value = trim(v.value);
          auto key = try_canonical(v.key);
          if (!key) {
            quarantine(doc.id, v.key, "", v.value, "key is empty after canonicalization");
            continue;
          }
          if (value.empty()) {
            quarantine(doc.id, v.key, "", v.value, "empty value");
            continue;
          }
          DecisionDef* def = first_def(space, *key);
          if (!def) {
            quarantine(doc.id, v.key, "", v.value, "no definition for key '" + key->str() + "'");
            continue;
          }
          if (draft.labels.empty()) {
            quarantine(doc.id, v.key, "", v.value, "segment has no domain labels");
            continue;
          }
          add_value(*def, draft.labels, value, doc.id);
          draft.decisions.emplace(*key, value);
        }
        for (const auto& k : seg.discoveries) {
          const std::string value = trim(k.value);
          auto key = try_canonical(k.key);
          auto kind = parse_node_kind(k.node_kind);
          std::string reason;
          if (!key) {
            reason = "key is empty after canonicalization";
          } else if (!kind) {
            reason = "unknown node kind '" + k.node_kind + "'";
          } else if (value.empty()) {
            reason = "empty value";
          } else if (draft.labels.empty()) {
            reason = "segment has no domain labels";
          }
          if (!reason.empty()) {
            quarantine(doc.id, k.key, k.node_kind, k.value, reason);
            continue;
          }
          if (DecisionDef* def = find_def(space, *key, *kind)) {
            add_value(*def, draft.labels, value, doc.id);
            draft.decisions.emplace(*key, value);
            continue;
          }
          PendingKey& p = pending[{*key, *kind}];
          if (p.raw.empty()) {
            p.raw = k.key;
            p.description = trim(k.description);
          }
          if (p.practices.insert(draft.id).second) p.documents.push_back(doc.id);
          p.seen.push_back({draft.labels, value, doc.id, it, k.node_kind, k.value});
          draft.pending.push_back({{*key, *kind}, value});
        }
        drafts.push_back(std::move(draft));
      }
    }

    // Promotion out of quarantine happens once per iteration, in key order.
    for (auto p = pending.begin(); p != pending.end();) {
      if (p->second.practices.size() < config.min_practices_for_new_key) {
        ++p;
        continue;
      }
      const auto& [key, kind] = p->first;
      DecisionDef def;
      def.key = key;
      def.node_kind = kind;
      def.category = DecisionCategory::DomainKeyDomainValue;
      def.description = p->second.description.empty() ? "Mined decision: " + p->second.raw : p->second.description;
      std::set<std::string> values;
      for (const auto& o : p->second.seen) {
        auto& set = def.value_sets[o.labels];
        if (std::find(set.begin(), set.end(), o.value) == set.end()) set.push_back(o.value);
        values.insert(o.value);
      }
      space.definitions.push_back(def);
      ++stats.new_keys;
      stats.new_values += values.size();
      report.additions.push_back({Addition::What::Key, key, kind, {}, "", it, p->second.documents});
      for (const auto& [labels, opts] : def.value_sets) {
        for (const auto& v : opts) {
          std::vector<std::string> sources;
          for (const auto& o : p->second.seen) {
            if (o.value == v && o.labels == labels &&
                std::find(sources.begin(), sources.end(), o.document) == sources.end()) {
              sources.push_back(o.document);
            }
          }
          report.additions.push_back({Addition::What::Value, key, kind, labels, v, it, sources});
        }
      }
      p = pending.erase(p);
    }

    mined.clear();
    for (auto& draft : drafts) {
      for (const auto& [kk, value] : draft.pending) {
        if (find_def(space, kk.first, kk.second)) draft.decisions.emplace(kk.first, value);
      }
      if (draft.labels.empty() || draft.decisions.empty()) {
        report.dropped.push_back({draft.document, it,
                                  draft.id + " yields no practice (" +
                                      (draft.labels.empty() ? "no domain labels" : "no decisions") + ")"});
        continue;
      }
      DataPractice practice;
      practice.id = draft.id;
      practice.domain_labels = draft.labels;
      practice.decisions = draft.decisions;
      practice.source_ref = "document " + draft.document;
      mined.push_back(std::move(practice));
    }

    stats.total_keys = space.definitions.size();
    stats.total_values = value_total(space);
    report.iterations.push_back(stats);
    const bool few_keys = static_cast<double>(stats.new_keys) < config.new_key_fraction * static_cast<double>(stats.total_keys);
    const bool few_values =
        static_cast<double>(stats.new_values) < config.new_value_fraction * static_cast<double>(stats.total_values);
    if (consolidating) break;
    if (few_keys && few_values) {
      report.saturated = true;
      // Keys promoted in this pass were unknown to its extraction; give them
      // one more pass so their values reach the practices.
      if (stats.new_keys == 0) break;
      consolidating = true;
    }
  }

  for (const auto& [kk, p] : pending) {
    for (const auto& o : p.seen) {
      report.quarantine.push_back({o.document, o.iteration, p.raw, o.raw_kind, o.raw_value,
                                   "seen in " + std::to_string(p.practices.size()) + " practice(s), needs " +
                                       std::to_string(config.min_practices_for_new_key)});
    }
  }

  std::set<std::string> mined_ids;
  for (const auto& p : mined) mined_ids.insert(p.id);
  std::erase_if(space.corpus, [&](const DataPractice& p) { return mined_ids.count(p.id) > 0; });
  space.corpus.insert(space.corpus.end(), mined.begin(), mined.end());
  recompute_cooccurrence(space);
  report.practices = mined.size();
  report.irrelevant_documents.assign(irrelevant.begin(), irrelevant.end());

  if (auto violations = validate_design_space(space); !violations.empty()) {
    std::string msg = "mined design space is invalid:";
    for (const auto& v : violations) msg += "\n  " + v.locator + ": " + v.message;
    throw Error(ErrorCode::InvariantViolation, msg);
  }
  return result;
}

// ---------------------------------------------------------------------------
// Report

json mining_report_to_json(const MiningReport& r) {
  json iterations = json::array();
  for (const auto& s : r.iterations) {
    iterations.push_back({{"iteration", s.iteration},
                          {"documents_annotated", s.documents_annotated},
                          {"segments", s.segments},
                          {"new_keys", s.new_keys},
                          {"new_values", s.new_values},
                          {"total_keys", s.total_keys},
                          {"total_values", s.total_values}});
  }
  json additions = json::array();
  for (const auto& a : r.additions) {
    additions.push_back({{"what", a.what == Addition::What::Key ? "key" : "value"},
                         {"key", a.key.str()},
                         {"node_kind", to_string(a.node_kind)},
                         {"labels", json(std::vector<std::string>(a.labels.begin(), a.labels.end()))},
                         {"value", a.value},
                         {"iteration", a.iteration},
                         {"documents", a.documents}});
  }
  json quarantine = json::array();
  for (const auto& q : r.quarantine) {
    quarantine.push_back({{"document", q.document},
                          {"iteration", q.iteration},
                          {"raw_key", q.raw_key},
                          {"node_kind", q.node_kind},
                          {"value", q.value},
                          {"reason", q.reason}});
  }
  auto notes = [](const std::vector<DocumentNote>& list) {
    json arr = json::array();
    for (const auto& n : list) arr.push_back({{"document", n.document}, {"iteration", n.iteration}, {"message", n.message}});
    return arr;
  };
  return {{"iterations", iterations},
          {"saturated", r.saturated},
          {"practices", r.practices},
          {"irrelevant_documents", r.irrelevant_documents},
          {"additions", additions},
          {"quarantine", quarantine},
          {"failures", notes(r.failures)},
          {"dropped", notes(r.dropped)}};
}

std::string format_mining_report(const MiningReport& r) {
  std::ostringstream out;
  out << "iterations: " << r.iterations.size() << (r.saturated ? " (saturated)" : " (saturation not reached)")
      << "\n";
  for (const auto& s : r.iterations) {
    out << "  #" << s.iteration << ": " << s.documents_annotated << " documents, " << s.segments << " segments, +"
        << s.new_keys << " keys, +" << s.new_values << " values (totals " << s.total_keys << " keys, "
        << s.total_values << " values)\n";
  }
  out << "practices: " << r.practices << "\n";
  if (!r.irrelevant_documents.empty()) {
    out << "irrelevant documents:";
    for (const auto& d : r.irrelevant_documents) out << " " << d;
    out << "\n";
  }
  out << "additions: " << r.additions.size() << "\n";
  for (const auto& a : r.additions) {
    out << "  [" << a.iteration << "] " << (a.what == Addition::What::Key ? "key   " : "value ") << a.key.str() << " ("
        << to_string(a.node_kind) << ")";
    if (a.what == Addition::What::Value) out << " = " << a.value;
    out << "  from";
    for (const auto& d : a.documents) out << " " << d;
    out << "\n";
  }
  out << "quarantine: " << r.quarantine.size() << "\n";
  for (const auto& q : r.quarantine) {
    out << "  [" << q.iteration << "] " << q.document << ": " << q.raw_key << " = " << q.value << " (" << q.reason
        << ")\n";
  }
  out << "failures: " << r.failures.size() << "\n";
  for (const auto& f : r.failures) out << "  [" << f.iteration << "] " << f.document << ": " << f.message << "\n";
  for (const auto& d : r.dropped) out << "  dropped [" << d.iteration << "] " << d.document << ": " << d.message << "\n";
  return out.str();
}

}  // namespace elicit
