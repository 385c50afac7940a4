#include "elicit/question_codec.hpp"
#include "elicit/session.hpp"

#include "elicit/error.hpp"
#include "json_util.hpp"

namespace elicit {

using namespace detail;

std::string_view event_type(const SessionEvent& e) {
  return std::visit(overloaded{
                        [](const session_event::Created&) { return "created"; },
                        [](const session_event::Started&) { return "started"; },
                        [](const session_event::RequirementsSet&) { return "requirements_set"; },
                        [](const session_event::Served&) { return "served"; },
                        [](const session_event::Answered&) { return "answered"; },
                        [](const session_event::ModeChanged&) { return "mode"; },
                        [](const session_event::Terminated&) { return "terminated"; },
                        [](const session_event::Resumed&) { return "resumed"; },
                        [](const session_event::AssessmentBuilt&) { return "assessment_built"; },
                        [](const session_event::AssessmentEdited&) { return "assessment_edited"; },
                        [](const session_event::Exported&) { return "exported"; },
                    },
                    e);
}

json session_event_to_json(const SessionEvent& e) {
  json body = std::visit(
      overloaded{
          [](const session_event::Created& c) -> json {
            return {{"id", c.id}, {"goal", c.goal}, {"seed", c.seed}};
          },
          [](const session_event::Started& s) -> json {
            return {{"requirements", requirements_to_json(s.requirements)}, {"labels", labels_to_json(s.labels)}};
          },
          [](const session_event::RequirementsSet& r) -> json {
            return {{"requirements", r.requirements}, {"labels", labels_to_json(r.labels)}};
          },
          [](const session_event::Served& s) -> json {
            json discarded = json::array();
            for (const auto& q : s.discarded) discarded.push_back(question_to_json(q));
            return {{"question", question_to_json(s.question)}, {"discarded", discarded}};
          },
          [](const session_event::Answered& a) -> json {
            return {{"answer", answer_to_json(a.answer)},
                    {"follow_up", a.follow_up ? json(*a.follow_up) : json(nullptr)}};
          },
          [](const session_event::ModeChanged& m) -> json { return {{"mode", to_string(m.mode)}}; },
          [](const session_event::Terminated& t) -> json {
            return {{"reason", to_string(t.reason)}, {"note", t.note}};
          },
          [](const session_event::Resumed&) -> json { return json::object(); },
          [](const session_event::AssessmentBuilt& b) -> json { return {{"rows", rows_to_json(b.rows)}}; },
          [](const session_event::AssessmentEdited& a) -> json { return {{"edit", edit_to_json(a.edit)}}; },
          [](const session_event::Exported& x) -> json { return {{"format", to_string(x.format)}}; },
      },
      e);
  json out = {{"type", event_type(e)}};
  out.update(body);
  return out;
}

SessionEvent session_event_from_json(const json& j) {
  const std::string type = string_field(j, "type");
  if (type == "created") {
    const json& seed = field(j, "seed");
    if (!seed.is_number_unsigned()) parse_fail("'seed' must be a non-negative integer");
    return session_event::Created{string_field(j, "id"), string_field(j, "goal"), seed.get<std::uint64_t>()};
  }
  if (type == "started") {
    return session_event::Started{requirements_from_json(field(j, "requirements")),
                                  labels_from_json(field(j, "labels"))};
  }
  if (type == "requirements_set") {
    return session_event::RequirementsSet{string_list(j, "requirements"), labels_from_json(field(j, "labels"))};
  }
  if (type == "served") {
    session_event::Served s{question_from_json(field(j, "question")), {}};
    const json& discarded = field(j, "discarded");
    if (!discarded.is_array()) parse_fail("'discarded' must be an array");
    for (const auto& q : discarded) s.discarded.push_back(question_from_json(q));
    return s;
  }
  if (type == "answered") {
    session_event::Answered a{answer_from_json(field(j, "answer")), std::nullopt};
    if (j.contains("follow_up") && !j.at("follow_up").is_null()) a.follow_up = string_field(j, "follow_up");
    return a;
  }
  if (type == "mode") {
    auto mode = parse_mode(string_field(j, "mode"));
    if (!mode) parse_fail("unknown mode");
    return session_event::ModeChanged{*mode};
  }
  if (type == "terminated") {
    auto reason = parse_termination_reason(string_field(j, "reason"));
    if (!reason) parse_fail("unknown termination reason");
    return session_event::Terminated{*reason, string_or(j, "note", "")};
  }
  if (type == "resumed") return session_event::Resumed{};
  if (type == "assessment_built") return session_event::AssessmentBuilt{rows_from_json(field(j, "rows"))};
  if (type == "assessment_edited") return session_event::AssessmentEdited{edit_from_json(field(j, "edit"))};
  if (type == "exported") {
    auto format = parse_export_format(string_field(j, "format"));
    if (!format) parse_fail("unknown export format");
    return session_event::Exported{*format};
  }
  parse_fail("unknown session event type '" + type + "'");
}

std::string session_event_line(const SessionEvent& e) { return session_event_to_json(e).dump() + "\n"; }

std::vector<SessionEvent> read_session_log(std::string_view text) {
  std::vector<SessionEvent> out;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    ++line_no;
    if (end == std::string_view::npos) {
      throw Error(ErrorCode::CorruptLog, "line " + std::to_string(line_no) + " is incomplete");
    }
    std::string_view line = text.substr(pos, end - pos);
    pos = end + 1;
    if (line.empty()) continue;
    try {
      out.push_back(session_event_from_json(parse_json(line, "session event")));
    } catch (const Error& e) {
      throw Error(ErrorCode::CorruptLog, "line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace elicit
