#pragma once

#include "elicit/decision_key.hpp"
#include "elicit/node_kind.hpp"

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <variant>
#include <vector>

namespace elicit {

using NodeId = std::string;

/// One or more selected options, optionally with a free-text response.
struct DecisionValue {
  std::vector<std::string> selected;
  std::optional<std::string> custom;

  bool valid() const;
  /// Selected options followed by the custom text, if any.
  std::vector<std::string> all_values() const;

  friend bool operator==(const DecisionValue&, const DecisionValue&) = default;
};

struct Node {
  NodeId id;
  NodeKind kind = NodeKind::Collect;
  std::string label;
  std::map<DecisionKey, DecisionValue> decisions;

  friend bool operator==(const Node&, const Node&) = default;
};

namespace event {

struct AddDataAction {
  NodeId id;
  NodeKind kind = NodeKind::Collect;
  std::string label;
  friend bool operator==(const AddDataAction&, const AddDataAction&) = default;
};

struct AddInteraction {
  NodeId id;
  NodeKind kind = NodeKind::Consent;
  std::string label;
  NodeId target;
  friend bool operator==(const AddInteraction&, const AddInteraction&) = default;
};

struct SetDecision {
  NodeId node;
  DecisionKey key;
  DecisionValue value;
  friend bool operator==(const SetDecision&, const SetDecision&) = default;
};

/// Like SetDecision but the key must already be present on the node.
struct ReviseDecision {
  NodeId node;
  DecisionKey key;
  DecisionValue value;
  friend bool operator==(const ReviseDecision&, const ReviseDecision&) = default;
};

/// Removing a data action also removes every interaction attached to it.
struct RemoveNode {
  NodeId node;
  friend bool operator==(const RemoveNode&, const RemoveNode&) = default;
};

}  // namespace event

using EventPayload = std::variant<event::AddDataAction, event::AddInteraction, event::SetDecision,
                                  event::ReviseDecision, event::RemoveNode>;

struct GraphEvent {
  std::uint64_t sequence = 0;
  EventPayload payload;

  friend bool operator==(const GraphEvent&, const GraphEvent&) = default;
};

/// Three-layer privacy representation: an ordered flow of data actions,
/// stakeholder interactions attached to exactly one data action each, and
/// per-node design decisions.
///
/// Mutation happens only through apply(), which validates the whole event
/// before touching any state, so a rejected event leaves the graph unchanged.
class PrivacyGraph {
 public:
  const std::vector<NodeId>& data_flow() const noexcept { return data_flow_; }
  /// Interaction ids in insertion order.
  const std::vector<NodeId>& interactions() const noexcept { return interactions_; }
  /// Interaction id -> data-action id.
  const std::map<NodeId, NodeId>& attachments() const noexcept { return attachments_; }
  const std::map<NodeId, Node>& nodes() const noexcept { return nodes_; }
  const std::vector<GraphEvent>& log() const noexcept { return log_; }
  std::uint64_t event_count() const noexcept { return log_.size(); }

  const Node* find(const NodeId& id) const;
  /// Throws Error{UnknownNode}.
  const Node& node(const NodeId& id) const;
  const Node* find_by_label(NodeKind kind, const std::string& label) const;
  /// Interactions attached to `data_action`, in insertion order.
  std::vector<NodeId> attached_to(const NodeId& data_action) const;
  /// Data-action nodes followed by interaction nodes.
  std::vector<const Node*> ordered_nodes() const;
  bool empty() const noexcept { return nodes_.empty(); }

  /// Throws on any precondition failure; the graph is untouched in that case.
  void apply(const GraphEvent& event);
  /// Convenience: stamps the next sequence number and applies.
  const GraphEvent& apply(EventPayload payload);

  /// Every broken invariant, one message each. Empty means well-formed.
  std::vector<std::string> check_invariants() const;

  friend bool operator==(const PrivacyGraph&, const PrivacyGraph&) = default;

 private:
  void validate(const GraphEvent& event) const;

  std::vector<NodeId> data_flow_;
  std::vector<NodeId> interactions_;
  std::map<NodeId, NodeId> attachments_;
  std::map<NodeId, Node> nodes_;
  std::vector<GraphEvent> log_;
};

/// Structural equality: same nodes, flow, attachments and decisions. The
/// event logs may differ.
bool same_state(const PrivacyGraph& a, const PrivacyGraph& b);

PrivacyGraph apply_event(const PrivacyGraph& graph, const GraphEvent& event);

/// Folds apply_event over `events` starting from an empty graph. A gap in
/// sequence numbers raises Error{SequenceGap} naming the missing number;
/// other failures are rethrown with the offending sequence number prefixed.
PrivacyGraph replay(std::span<const GraphEvent> events);

std::set<NodeKind> missing_kinds(const PrivacyGraph& graph);

}  // namespace elicit
