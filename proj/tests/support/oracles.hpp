#pragma once

// Independent reference implementations used by the unit and acceptance
// suites. Nothing here calls into the code paths it checks: set arithmetic,
// counting and sorting are redone from scratch.

#include "elicit/design_space.hpp"

#include <algorithm>
#include <cmath>
#include <iterator>
#include <random>
#include <string>
#include <vector>

namespace elicit::oracle {

inline double jaccard(const LabelSet& a, const LabelSet& b) {
  std::vector<std::string> inter, uni;
  std::set_intersection(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(inter));
  std::set_union(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(uni));
  if (uni.empty()) return 0.0;
  return static_cast<double>(inter.size()) / static_cast<double>(uni.size());
}

inline std::vector<std::string> relevant_ids(const std::vector<DataPractice>& corpus,
                                             const LabelSet& labels, double threshold) {
  std::vector<std::string> out;
  for (const auto& p : corpus) {
    // Compare |∩| > threshold * |∪| on integers scaled by 10 to avoid any
    // floating-point edge at exactly 0.4.
    std::vector<std::string> inter, uni;
    std::set_intersection(labels.begin(), labels.end(), p.domain_labels.begin(),
                          p.domain_labels.end(), std::back_inserter(inter));
    std::set_union(labels.begin(), labels.end(), p.domain_labels.begin(), p.domain_labels.end(),
                   std::back_inserter(uni));
    if (uni.empty()) continue;
    const long scaled = std::lround(threshold * 10.0);
    if (static_cast<long>(inter.size()) * 10 > scaled * static_cast<long>(uni.size())) {
      out.push_back(p.id);
    }
  }
  return out;
}

inline bool mentions(const DataPractice& p, const DecisionKey& key) {
  for (const auto& d : p.decisions) {
    if (d.first == key) return true;
  }
  return false;
}

struct Counts {
  double n = 0, c1 = 0, c2 = 0, c12 = 0;
};

inline Counts count(const std::vector<DataPractice>& practices, const DecisionKey& a,
                    const DecisionKey& b) {
  Counts c;
  for (const auto& p : practices) {
    bool ha = mentions(p, a), hb = mentions(p, b);
    c.n += 1;
    c.c1 += ha;
    c.c2 += hb;
    c.c12 += (ha && hb);
  }
  return c;
}

/// NaN stands in for "never co-occurs".
inline double pmi(const std::vector<DataPractice>& practices, const DecisionKey& a,
                  const DecisionKey& b) {
  Counts c = count(practices, a, b);
  if (c.c12 == 0 || c.c1 == 0 || c.c2 == 0) return std::nan("");
  return std::log(c.c12 * c.n / (c.c1 * c.c2));
}

struct Scored {
  std::string key;
  NodeKind kind;
  double score;
  double freq;
};

inline std::vector<std::pair<std::string, NodeKind>> rank(
    const std::vector<DataPractice>& relevant, const std::vector<DecisionDef>& candidates,
    const std::set<DecisionKey>& prior, double floor) {
  std::vector<Scored> scored;
  for (const auto& def : candidates) {
    double freq = 0;
    for (const auto& p : relevant) freq += mentions(p, def.key);
    double score;
    if (prior.empty()) {
      score = freq;
    } else {
      std::vector<double> terms;
      for (const auto& p : prior) {
        if (p == def.key) continue;
        double v = relevant.empty() ? std::nan("") : pmi(relevant, def.key, p);
        terms.push_back(std::isnan(v) ? floor : v);
      }
      if (terms.empty()) {
        score = floor;
      } else {
        double s = 0;
        for (double t : terms) s += t;
        score = s / static_cast<double>(terms.size());
      }
    }
    scored.push_back({def.key.str(), def.node_kind, score, freq});
  }
  // Selection sort with the documented comparator, written out longhand.
  std::vector<std::pair<std::string, NodeKind>> out;
  while (!scored.empty()) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < scored.size(); ++i) {
      const auto& x = scored[i];
      const auto& y = scored[best];
      bool better = false;
      if (x.score != y.score) {
        better = x.score > y.score;
      } else if (x.freq != y.freq) {
        better = x.freq > y.freq;
      } else if (x.key != y.key) {
        better = x.key < y.key;
      } else {
        better = static_cast<int>(x.kind) < static_cast<int>(y.kind);
      }
      if (better) best = i;
    }
    out.emplace_back(scored[best].key, scored[best].kind);
    scored.erase(scored.begin() + static_cast<std::ptrdiff_t>(best));
  }
  return out;
}

inline std::vector<std::string> vocabulary20() {
  return {"health",     "financial",  "location",      "biometric",     "genetic",
          "children",   "education",  "employment",    "government",    "law_enforcement",
          "social",     "communication", "meeting",    "iot",           "commerce",
          "advertising", "transportation", "entertainment", "identity",  "behavior"};
}

inline LabelSet random_labels(std::mt19937_64& rng, const std::vector<std::string>& vocab,
                              std::size_t max_size) {
  std::uniform_int_distribution<std::size_t> size_dist(1, max_size);
  std::uniform_int_distribution<std::size_t> pick(0, vocab.size() - 1);
  LabelSet out;
  std::size_t n = size_dist(rng);
  while (out.size() < n) out.insert(vocab[pick(rng)]);
  return out;
}

/// Random space: `keys` definitions spread over the ten reported categories
/// and `practices` practices drawing 1..6 keys each.
inline DesignSpace random_space(std::mt19937_64& rng, std::size_t practices, std::size_t keys,
                                std::size_t max_labels = 4) {
  DesignSpace space;
  space.version = "random";
  auto vocab = vocabulary20();
  space.label_vocabulary = LabelSet(vocab.begin(), vocab.end());
  for (std::size_t k = 0; k < keys; ++k) {
    DecisionDef def;
    def.key = DecisionKey::from_canonical("key_" + std::to_string(k));
    def.node_kind = kAllNodeKinds[k % 10];
    def.value_sets[{}] = {"a", "b", "c"};
    space.definitions.push_back(def);
  }
  std::uniform_int_distribution<std::size_t> key_pick(0, keys - 1);
  std::uniform_int_distribution<std::size_t> key_count(1, std::min<std::size_t>(6, keys));
  for (std::size_t i = 0; i < practices; ++i) {
    DataPractice p;
    p.id = "p" + std::to_string(i);
    p.domain_labels = random_labels(rng, vocab, max_labels);
    std::size_t n = key_count(rng);
    while (p.decisions.size() < n) {
      p.decisions.emplace(space.definitions[key_pick(rng)].key, "a");
    }
    space.corpus.push_back(std::move(p));
  }
  recompute_cooccurrence(space);
  return space;
}

}  // namespace elicit::oracle
