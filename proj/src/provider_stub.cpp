#include "elicit/error.hpp"
#include "elicit/provider.hpp"
#include "json_util.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>

namespace elicit {

using namespace detail;

namespace {

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return s;
}

bool contains_any(const std::string& haystack, const std::vector<std::string>& needles) {
  return std::any_of(needles.begin(), needles.end(), [&](const std::string& n) {
    return haystack.find(lower(n)) != std::string::npos;
  });
}

std::string substitute(std::string text, const std::vector<std::pair<std::string, std::string>>& vars) {
  for (const auto& [name, value] : vars) {
    const std::string token = "{" + name + "}";
    for (auto pos = text.find(token); pos != std::string::npos; pos = text.find(token, pos + value.size())) {
      text.replace(pos, token.size(), value);
    }
  }
  return text;
}

std::string join(const std::vector<std::string>& parts, const std::string& sep) {
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i) out += sep;
    out += parts[i];
  }
  return out;
}

}  // namespace

StubLexicon parse_stub_lexicon(std::string_view text) {
  json root = parse_json(text, "stub lexicon");
  StubLexicon lex;
  if (!root.is_object()) parse_fail("stub lexicon must be an object");
  lex.default_subject = string_or(root, "default_subject", lex.default_subject);
  lex.requirement_template = string_or(root, "requirement_template", lex.requirement_template);
  lex.issue_template = string_or(root, "issue_template", lex.issue_template);
  for (const auto& t : field(root, "topics")) {
    lex.topics.push_back({string_list(t, "cues"), string_field(t, "subject")});
  }
  lex.processing_cues = string_list(root, "processing_cues");
  for (const auto& [label, words] : field(root, "label_keywords").items()) {
    if (!words.is_array()) parse_fail("label_keywords." + label + " must be an array");
    lex.label_keywords.emplace_back(label, words.get<std::vector<std::string>>());
  }
  for (const auto& [kind_name, tpl] : field(root, "kind_templates").items()) {
    auto kind = parse_node_kind(kind_name);
    if (!kind) parse_fail("unknown node kind '" + kind_name + "' in kind_templates");
    lex.kind_templates.emplace_back(*kind, StubLexicon::KindTemplate{string_field(tpl, "label"),
                                                                     string_field(tpl, "question")});
  }
  return lex;
}

StubLexicon load_stub_lexicon(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::InvalidArgument, "cannot open stub lexicon '" + path + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_stub_lexicon(buf.str());
}

StubProvider::StubProvider(StubLexicon lexicon, StubOptions options)
    : lexicon_(std::move(lexicon)), options_(std::move(options)) {}

std::string StubProvider::subject_for(const std::string& goal) const {
  const std::string g = lower(goal);
  for (const auto& topic : lexicon_.topics) {
    if (contains_any(g, topic.cues)) return topic.subject;
  }
  return lexicon_.default_subject;
}

std::string StubProvider::subject_in(const PrivacyGraph& graph) const {
  for (const auto& id : graph.data_flow()) {
    const Node& n = graph.node(id);
    for (const auto& [kind, tpl] : lexicon_.kind_templates) {
      if (kind != n.kind) continue;
      auto pos = tpl.label.find("{subject}");
      if (pos == std::string::npos) continue;
      const std::string prefix = tpl.label.substr(0, pos);
      const std::string suffix = tpl.label.substr(pos + 9);
      if (n.label.size() > prefix.size() + suffix.size() && n.label.starts_with(prefix) &&
          n.label.ends_with(suffix)) {
        return n.label.substr(prefix.size(), n.label.size() - prefix.size() - suffix.size());
      }
    }
  }
  return lexicon_.default_subject;
}

RequirementsResult StubProvider::expand_requirements(const std::string& goal) {
  const std::string subject = subject_for(goal);
  RequirementsResult out;
  auto add = [&](NodeKind kind, const char* verb) {
    out.requirements.push_back(
        substitute(lexicon_.requirement_template, {{"verb", verb}, {"subject", subject}}));
    std::string label = std::string(to_string(kind)) + " " + subject;
    for (const auto& [k, tpl] : lexicon_.kind_templates) {
      if (k == kind) label = substitute(tpl.label, {{"subject", subject}});
    }
    out.data_actions.push_back({kind, label});
  };
  add(NodeKind::Collect, "collect");
  if (contains_any(lower(goal), lexicon_.processing_cues)) add(NodeKind::Process, "analyze");
  return out;
}

LabelSet StubProvider::annotate_session_domains(const std::string& goal,
                                                const std::vector<std::string>& requirements) {
  const std::string text = lower(goal + " " + join(requirements, " "));
  LabelSet out;
  for (const auto& [label, words] : lexicon_.label_keywords) {
    if (contains_any(text, words)) out.insert(label);
  }
  return out;
}

std::vector<Proposal> StubProvider::propose_exploratory(const PrivacyGraph& graph,
                                                        std::span<const AskedQuestion>) {
  std::vector<NodeKind> missing;
  for (NodeKind k : missing_kinds(graph)) {
    if (!options_.never_propose.count(k)) missing.push_back(k);
  }
  if (missing.empty()) return {};
  std::rotate(missing.begin(), missing.begin() + static_cast<std::ptrdiff_t>(options_.seed % missing.size()),
              missing.end());

  auto first_of = [&](NodeKind kind) -> std::optional<NodeId> {
    for (const auto& id : graph.data_flow()) {
      if (graph.node(id).kind == kind) return id;
    }
    return std::nullopt;
  };
  auto target_for = [&](NodeKind kind) -> std::optional<NodeId> {
    std::optional<NodeId> t;
    switch (kind) {
      case NodeKind::Consent:
      case NodeKind::Notice: t = first_of(NodeKind::Collect); break;
      case NodeKind::Control:
      case NodeKind::Access:
      case NodeKind::Request: t = first_of(NodeKind::Store); break;
      case NodeKind::Audit: t = first_of(NodeKind::Share); break;
      case NodeKind::Influence: t = first_of(NodeKind::Process); break;
      default: break;
    }
    if (!t && !graph.data_flow().empty()) t = graph.data_flow().front();
    return t;
  };

  const std::string subject = subject_in(graph);
  std::vector<Proposal> out;
  for (NodeKind kind : missing) {
    Proposal p;
    p.kind = kind;
    p.label = std::string(to_string(kind)) + " " + subject;
    p.question = "Should the design include: " + p.label + "?";
    for (const auto& [k, tpl] : lexicon_.kind_templates) {
      if (k != kind) continue;
      p.label = substitute(tpl.label, {{"subject", subject}});
      p.question = substitute(tpl.question, {{"subject", subject}});
    }
    if (is_interaction(kind)) {
      p.target = target_for(kind);
      if (!p.target) continue;
    }
    out.push_back(std::move(p));
  }
  return out;
}

RenderedQuestion StubProvider::contextualize_question(const DecisionDef& def,
                                                      const std::vector<std::string>& values,
                                                      const Node& target, const PrivacyGraph&,
                                                      std::span<const AskedQuestion>) {
  return {"For " + target.label + ", which applies to " + def.key.str() + "?", values};
}

std::optional<std::string> StubProvider::follow_up(const AskedQuestion& answered,
                                                   const PrivacyGraph& graph) {
  const Question& q = answered.question;
  if (q.kind != QuestionKind::Exploitative || !q.decision_key || is_skip(answered.response)) {
    return std::nullopt;
  }
  if (!options_.follow_up_keys.count(*q.decision_key)) return std::nullopt;
  const Node* n = graph.find(q.target_node);
  return "Any further details about " + q.decision_key->str() + " for " +
         (n ? n->label : q.target_node) + "?";
}

bool StubProvider::is_duplicate(const Question& candidate, std::span<const AskedQuestion> history,
                                const PrivacyGraph&) {
  if (!candidate.decision_key) return false;
  return std::any_of(history.begin(), history.end(), [&](const AskedQuestion& a) {
    return a.question.target_node == candidate.target_node &&
           a.question.decision_key == candidate.decision_key;
  });
}

std::vector<std::string> StubProvider::summarize_issues(const Node& data_action, const PrivacyGraph&) {
  std::vector<std::string> out;
  for (const auto& [key, value] : data_action.decisions) {
    out.push_back(substitute(lexicon_.issue_template, {{"label", data_action.label},
                                                       {"key", key.str()},
                                                       {"value", join(value.all_values(), ", ")}}));
  }
  return out;
}

}  // namespace elicit
