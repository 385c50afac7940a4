#include "elicit/question.hpp"

#include "elicit/question_codec.hpp"
#include "json_util.hpp"

namespace elicit {

using namespace detail;

std::string_view to_string(QuestionKind kind) {
  switch (kind) {
    case QuestionKind::Exploratory: return "exploratory";
    case QuestionKind::Exploitative: return "exploitative";
    case QuestionKind::FollowUp: return "follow_up";
  }
  return "?";
}

std::optional<QuestionKind> parse_question_kind(std::string_view text) {
  for (auto k : {QuestionKind::Exploratory, QuestionKind::Exploitative, QuestionKind::FollowUp}) {
    if (to_string(k) == text) return k;
  }
  return std::nullopt;
}

json proposal_to_json(const Proposal& p) {
  json j = {{"kind", to_string(p.kind)}, {"label", p.label}, {"question", p.question}};
  if (p.target) j["target"] = *p.target;
  return j;
}

Proposal proposal_from_json(const json& j) {
  Proposal p;
  p.kind = node_kind_from_json(field(j, "kind"));
  p.label = string_field(j, "label");
  p.question = string_or(j, "question", "");
  if (j.contains("target") && !j.at("target").is_null()) p.target = string_field(j, "target");
  return p;
}

json question_to_json(const Question& q) {
  json j = {{"id", q.id},
            {"kind", to_string(q.kind)},
            {"target_node", q.target_node},
            {"text", q.text},
            {"options", q.options},
            {"iteration", q.iteration},
            {"score", q.score}};
  if (q.decision_key) j["decision_key"] = q.decision_key->str();
  if (!q.values.empty()) j["values"] = q.values;
  if (q.proposal) j["proposal"] = proposal_to_json(*q.proposal);
  return j;
}

Question question_from_json(const json& j) {
  Question q;
  q.id = string_field(j, "id");
  auto kind = parse_question_kind(string_field(j, "kind"));
  if (!kind) parse_fail("unknown question kind");
  q.kind = *kind;
  q.target_node = string_field(j, "target_node");
  if (j.contains("decision_key")) q.decision_key = key_field(j, "decision_key");
  q.text = string_field(j, "text");
  q.options = string_list(j, "options");
  if (j.contains("values")) q.values = string_list(j, "values");
  if (j.contains("proposal")) q.proposal = proposal_from_json(j.at("proposal"));
  const json& it = field(j, "iteration");
  if (!it.is_number_unsigned()) parse_fail("'iteration' must be a non-negative integer");
  q.iteration = it.get<std::uint32_t>();
  if (j.contains("score")) {
    if (!j.at("score").is_number()) parse_fail("'score' must be a number");
    q.score = j.at("score").get<double>();
  }
  return q;
}

json response_to_json(const Response& r) {
  return std::visit(overloaded{
                        [](const response::Selected& s) { return json{{"selected", s.indices}}; },
                        [](const response::Custom& c) { return json{{"custom", c.text}}; },
                        [](const response::Skip&) { return json{{"skip", true}}; },
                    },
                    r);
}

Response response_from_json(const json& j) {
  if (!j.is_object()) parse_fail("response must be an object");
  int forms = j.contains("selected") + j.contains("custom") + j.contains("skip");
  if (forms != 1) parse_fail("response needs exactly one of selected, custom, skip");
  if (j.contains("skip")) {
    if (j.at("skip") != true) parse_fail("'skip' must be true");
    return response::Skip{};
  }
  if (j.contains("custom")) return response::Custom{string_field(j, "custom")};
  const json& sel = j.at("selected");
  if (!sel.is_array()) parse_fail("'selected' must be an array");
  response::Selected s;
  for (const auto& i : sel) {
    if (!i.is_number_integer()) parse_fail("'selected' must hold integers");
    // Negative indices are out of range rather than malformed.
    long long v = i.get<long long>();
    s.indices.push_back(v < 0 ? static_cast<std::size_t>(-1) : static_cast<std::size_t>(v));
  }
  return s;
}

json answer_to_json(const Answer& a) {
  return {{"question_id", a.question_id}, {"response", response_to_json(a.response)},
          {"revision", a.revision}};
}

Answer answer_from_json(const json& j) {
  Answer a;
  a.question_id = string_field(j, "question_id");
  a.response = response_from_json(j.contains("response") ? j.at("response") : j);
  if (j.contains("revision")) {
    if (!j.at("revision").is_boolean()) parse_fail("'revision' must be a boolean");
    a.revision = j.at("revision").get<bool>();
  }
  return a;
}

json asked_to_json(const AskedQuestion& a) {
  return {{"question", question_to_json(a.question)}, {"response", response_to_json(a.response)}};
}

AskedQuestion asked_from_json(const json& j) {
  return {question_from_json(field(j, "question")), response_from_json(field(j, "response"))};
}

json requirements_to_json(const RequirementsResult& r) {
  json actions = json::array();
  for (const auto& a : r.data_actions) {
    actions.push_back({{"kind", to_string(a.kind)}, {"label", a.label}});
  }
  return {{"requirements", r.requirements}, {"data_actions", actions}};
}

RequirementsResult requirements_from_json(const json& j) {
  RequirementsResult r;
  r.requirements = string_list(j, "requirements");
  const json& actions = field(j, "data_actions");
  if (!actions.is_array()) parse_fail("'data_actions' must be an array");
  for (const auto& a : actions) {
    r.data_actions.push_back({node_kind_from_json(field(a, "kind")), string_field(a, "label")});
  }
  return r;
}

json labels_to_json(const LabelSet& labels) { return json(std::vector<std::string>(labels.begin(), labels.end())); }

LabelSet labels_from_json(const json& j) {
  if (!j.is_array()) parse_fail("labels must be an array");
  LabelSet out;
  for (const auto& l : j) {
    if (!l.is_string()) parse_fail("labels must be strings");
    out.insert(l.get<std::string>());
  }
  return out;
}

}  // namespace elicit
