#include "elicit/graph_codec.hpp"

#include "elicit/error.hpp"
#include "json_util.hpp"

#include <sstream>

namespace elicit {

using namespace detail;

NodeKind node_kind_from_json(const json& j) {
  if (!j.is_string()) parse_fail("node kind must be a string");
  auto kind = parse_node_kind(j.get<std::string>());
  if (!kind) parse_fail("unknown node kind '" + j.get<std::string>() + "'");
  return *kind;
}

json decision_value_to_json(const DecisionValue& value) {
  json j = {{"selected", value.selected}};
  if (value.custom) j["custom"] = *value.custom;
  return j;
}

DecisionValue decision_value_from_json(const json& j) {
  DecisionValue value;
  if (!j.is_object()) parse_fail("decision value must be an object");
  if (j.contains("selected")) {
    if (!j.at("selected").is_array()) parse_fail("'selected' must be an array");
    for (const auto& s : j.at("selected")) {
      if (!s.is_string()) parse_fail("selected options must be strings");
      value.selected.push_back(s.get<std::string>());
    }
  }
  if (j.contains("custom") && !j.at("custom").is_null()) value.custom = string_field(j, "custom");
  return value;
}

json event_to_json(const GraphEvent& ev) {
  json j = {{"seq", ev.sequence}};
  std::visit(overloaded{
                 [&](const event::AddDataAction& e) {
                   j["type"] = "add_data_action";
                   j["id"] = e.id;
                   j["kind"] = to_string(e.kind);
                   j["label"] = e.label;
                 },
                 [&](const event::AddInteraction& e) {
                   j["type"] = "add_interaction";
                   j["id"] = e.id;
                   j["kind"] = to_string(e.kind);
                   j["label"] = e.label;
                   j["target"] = e.target;
                 },
                 [&](const event::SetDecision& e) {
                   j["type"] = "set_decision";
                   j["node"] = e.node;
                   j["key"] = e.key.str();
                   j["value"] = decision_value_to_json(e.value);
                 },
                 [&](const event::ReviseDecision& e) {
                   j["type"] = "revise_decision";
                   j["node"] = e.node;
                   j["key"] = e.key.str();
                   j["value"] = decision_value_to_json(e.value);
                 },
                 [&](const event::RemoveNode& e) {
                   j["type"] = "remove_node";
                   j["node"] = e.node;
                 },
             },
             ev.payload);
  return j;
}

GraphEvent event_from_json(const json& j) {
  const json& seq = field(j, "seq");
  if (!seq.is_number_unsigned()) parse_fail("'seq' must be a positive integer");
  GraphEvent ev;
  ev.sequence = seq.get<std::uint64_t>();
  const std::string type = string_field(j, "type");
  if (type == "add_data_action") {
    ev.payload = event::AddDataAction{string_field(j, "id"), node_kind_from_json(field(j, "kind")),
                                      string_field(j, "label")};
  } else if (type == "add_interaction") {
    ev.payload = event::AddInteraction{string_field(j, "id"), node_kind_from_json(field(j, "kind")),
                                       string_field(j, "label"), string_field(j, "target")};
  } else if (type == "set_decision") {
    ev.payload = event::SetDecision{string_field(j, "node"), key_field(j, "key"),
                                    decision_value_from_json(field(j, "value"))};
  } else if (type == "revise_decision") {
    ev.payload = event::ReviseDecision{string_field(j, "node"), key_field(j, "key"),
                                       decision_value_from_json(field(j, "value"))};
  } else if (type == "remove_node") {
    ev.payload = event::RemoveNode{string_field(j, "node")};
  } else {
    parse_fail("unknown event type '" + type + "'");
  }
  return ev;
}

std::string write_event_log(std::span<const GraphEvent> events) {
  std::string out =
      json{{"schema", kGraphEventSchema}, {"version", kGraphSchemaVersion}}.dump() + "\n";
  for (const auto& ev : events) out += event_to_json(ev).dump() + "\n";
  return out;
}

std::vector<GraphEvent> read_event_log(std::string_view text) {
  std::istringstream in{std::string(text)};
  std::string line;
  if (!std::getline(in, line)) parse_fail("event log is empty");
  json header = json::parse(line, nullptr, false);
  if (header.is_discarded() || !header.is_object() || header.value("schema", "") != kGraphEventSchema) {
    parse_fail("event log header is missing or malformed");
  }
  if (header.value("version", 0) != kGraphSchemaVersion) {
    throw Error(ErrorCode::SchemaVersionMismatch,
                "unsupported event log version " + header.value("version", json()).dump());
  }
  std::vector<GraphEvent> events;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    json j = json::parse(line, nullptr, false);
    if (j.is_discarded()) parse_fail("line " + std::to_string(line_no) + " is not valid JSON");
    events.push_back(event_from_json(j));
  }
  return events;
}

json graph_snapshot(const PrivacyGraph& graph) {
  json flow = json::array();
  for (const auto& id : graph.data_flow()) {
    const Node& n = graph.node(id);
    flow.push_back({{"id", n.id}, {"kind", to_string(n.kind)}, {"label", n.label}});
  }
  json interactions = json::array();
  for (const auto& id : graph.interactions()) {
    const Node& n = graph.node(id);
    interactions.push_back({{"id", n.id},
                            {"kind", to_string(n.kind)},
                            {"label", n.label},
                            {"target", graph.attachments().at(id)}});
  }
  json nodes = json::array();
  for (const Node* n : graph.ordered_nodes()) {
    json decisions = json::object();
    for (const auto& [key, value] : n->decisions) {
      decisions[key.str()] = decision_value_to_json(value);
    }
    nodes.push_back(
        {{"id", n->id}, {"kind", to_string(n->kind)}, {"label", n->label}, {"decisions", decisions}});
  }
  return {{"schema", kGraphSnapshotSchema},
          {"version", kGraphSchemaVersion},
          {"data_flow", flow},
          {"interactions", interactions},
          {"nodes", nodes},
          {"event_count", graph.event_count()}};
}

PrivacyGraph graph_from_snapshot(const json& snapshot) {
  if (!snapshot.is_object() || snapshot.value("schema", "") != kGraphSnapshotSchema) {
    parse_fail("not a graph snapshot");
  }
  if (snapshot.value("version", 0) != kGraphSchemaVersion) {
    throw Error(ErrorCode::SchemaVersionMismatch, "unsupported graph snapshot version");
  }
  PrivacyGraph graph;
  for (const auto& n : field(snapshot, "data_flow")) {
    graph.apply(event::AddDataAction{string_field(n, "id"), node_kind_from_json(field(n, "kind")),
                                     string_field(n, "label")});
  }
  for (const auto& n : field(snapshot, "interactions")) {
    graph.apply(event::AddInteraction{string_field(n, "id"), node_kind_from_json(field(n, "kind")),
                                      string_field(n, "label"), string_field(n, "target")});
  }
  for (const auto& n : field(snapshot, "nodes")) {
    const std::string id = string_field(n, "id");
    for (const auto& [key, value] : field(n, "decisions").items()) {
      graph.apply(event::SetDecision{id, DecisionKey::from_canonical(key),
                                     decision_value_from_json(value)});
    }
  }
  return graph;
}

}  // namespace elicit
