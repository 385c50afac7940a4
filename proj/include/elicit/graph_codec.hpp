#pragma once

#include "elicit/graph.hpp"

#include <nlohmann/json.hpp>

#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace elicit {

using json = nlohmann::json;

inline constexpr std::string_view kGraphEventSchema = "elicit.graph-events";
inline constexpr std::string_view kGraphSnapshotSchema = "elicit.graph";
inline constexpr int kGraphSchemaVersion = 1;

NodeKind node_kind_from_json(const json& j);

json decision_value_to_json(const DecisionValue& value);
DecisionValue decision_value_from_json(const json& j);

json event_to_json(const GraphEvent& event);
/// Throws Error{ParseError} on malformed input.
GraphEvent event_from_json(const json& j);

/// Line-delimited event log: a schema header line then one event per line.
std::string write_event_log(std::span<const GraphEvent> events);
std::vector<GraphEvent> read_event_log(std::string_view text);

/// Full-graph document: overview layers plus per-node decisions.
json graph_snapshot(const PrivacyGraph& graph);

/// Rebuilds a graph equal in state (not log) to the one the snapshot was
/// taken from.
PrivacyGraph graph_from_snapshot(const json& snapshot);

}  // namespace elicit
