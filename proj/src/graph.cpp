#include "elicit/graph.hpp"

#include "elicit/error.hpp"

#include <algorithm>

namespace elicit {
namespace {

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

[[noreturn]] void fail(ErrorCode code, const std::string& message) { throw Error(code, message); }

void require_new_node(const std::map<NodeId, Node>& nodes, const NodeId& id, NodeKind kind,
                      const std::string& label) {
  if (id.empty()) fail(ErrorCode::InvalidArgument, "node id must not be empty");
  if (label.empty()) fail(ErrorCode::InvalidArgument, "node label must not be empty");
  if (nodes.count(id) != 0) fail(ErrorCode::DuplicateNode, "node id '" + id + "' already exists");
  for (const auto& [_, node] : nodes) {
    if (node.kind == kind && node.label == label) {
      fail(ErrorCode::DuplicateNode,
           std::string(to_string(kind)) + " node '" + label + "' already exists as " + node.id);
    }
  }
}

void erase_id(std::vector<NodeId>& ids, const NodeId& id) {
  ids.erase(std::remove(ids.begin(), ids.end(), id), ids.end());
}

}  // namespace

bool DecisionValue::valid() const {
  if (std::any_of(selected.begin(), selected.end(), [](const auto& s) { return s.empty(); })) {
    return false;
  }
  return !selected.empty() || (custom && !custom->empty());
}

std::vector<std::string> DecisionValue::all_values() const {
  std::vector<std::string> out = selected;
  if (custom && !custom->empty()) out.push_back(*custom);
  return out;
}

const Node* PrivacyGraph::find(const NodeId& id) const {
  auto it = nodes_.find(id);
  return it == nodes_.end() ? nullptr : &it->second;
}

const Node& PrivacyGraph::node(const NodeId& id) const {
  const Node* n = find(id);
  if (!n) fail(ErrorCode::UnknownNode, "unknown node '" + id + "'");
  return *n;
}

const Node* PrivacyGraph::find_by_label(NodeKind kind, const std::string& label) const {
  for (const auto& [_, node] : nodes_) {
    if (node.kind == kind && node.label == label) return &node;
  }
  return nullptr;
}

std::vector<NodeId> PrivacyGraph::attached_to(const NodeId& data_action) const {
  std::vector<NodeId> out;
  for (const auto& id : interactions_) {
    if (attachments_.at(id) == data_action) out.push_back(id);
  }
  return out;
}

std::vector<const Node*> PrivacyGraph::ordered_nodes() const {
  std::vector<const Node*> out;
  out.reserve(nodes_.size());
  for (const auto& id : data_flow_) out.push_back(&nodes_.at(id));
  for (const auto& id : interactions_) out.push_back(&nodes_.at(id));
  return out;
}

void PrivacyGraph::validate(const GraphEvent& event) const {
  if (event.sequence != log_.size() + 1) {
    fail(ErrorCode::SequenceGap, "expected sequence " + std::to_string(log_.size() + 1) +
                                     ", got " + std::to_string(event.sequence));
  }
  std::visit(
      overloaded{
          [&](const event::AddDataAction& e) {
            if (!is_data_action(e.kind)) {
              fail(ErrorCode::KindMismatch,
                   std::string(to_string(e.kind)) + " is not a data action");
            }
            require_new_node(nodes_, e.id, e.kind, e.label);
          },
          [&](const event::AddInteraction& e) {
            if (!is_interaction(e.kind)) {
              fail(ErrorCode::KindMismatch,
                   std::string(to_string(e.kind)) + " is not a stakeholder interaction");
            }
            const Node* target = find(e.target);
            if (!target) fail(ErrorCode::UnknownNode, "unknown attachment target '" + e.target + "'");
            if (!is_data_action(target->kind)) {
              fail(ErrorCode::KindMismatch, "attachment target '" + e.target +
                                                "' is a stakeholder interaction");
            }
            require_new_node(nodes_, e.id, e.kind, e.label);
          },
          [&](const event::SetDecision& e) {
            if (!find(e.node)) fail(ErrorCode::UnknownNode, "unknown node '" + e.node + "'");
            if (e.key.empty()) fail(ErrorCode::InvalidArgument, "decision key must not be empty");
            if (!e.value.valid()) {
              fail(ErrorCode::InvalidArgument, "decision value for '" + e.key.str() + "' is empty");
            }
          },
          [&](const event::ReviseDecision& e) {
            const Node* n = find(e.node);
            if (!n) fail(ErrorCode::UnknownNode, "unknown node '" + e.node + "'");
            if (n->decisions.count(e.key) == 0) {
              fail(ErrorCode::UnknownDecision,
                   "node '" + e.node + "' has no decision '" + e.key.str() + "' to revise");
            }
            if (!e.value.valid()) {
              fail(ErrorCode::InvalidArgument, "decision value for '" + e.key.str() + "' is empty");
            }
          },
          [&](const event::RemoveNode& e) {
            if (!find(e.node)) fail(ErrorCode::UnknownNode, "unknown node '" + e.node + "'");
          },
      },
      event.payload);
}

void PrivacyGraph::apply(const GraphEvent& ev) {
  validate(ev);
  std::visit(overloaded{
                 [&](const event::AddDataAction& e) {
                   nodes_.emplace(e.id, Node{e.id, e.kind, e.label, {}});
                   data_flow_.push_back(e.id);
                 },
                 [&](const event::AddInteraction& e) {
                   nodes_.emplace(e.id, Node{e.id, e.kind, e.label, {}});
                   interactions_.push_back(e.id);
                   attachments_.emplace(e.id, e.target);
                 },
                 [&](const event::SetDecision& e) { nodes_.at(e.node).decisions[e.key] = e.value; },
                 [&](const event::ReviseDecision& e) {
                   nodes_.at(e.node).decisions[e.key] = e.value;
                 },
                 [&](const event::RemoveNode& e) {
                   if (is_data_action(nodes_.at(e.node).kind)) {
                     for (const auto& attached : attached_to(e.node)) {
                       nodes_.erase(attached);
                       attachments_.erase(attached);
                       erase_id(interactions_, attached);
                     }
                     erase_id(data_flow_, e.node);
                   } else {
                     attachments_.erase(e.node);
                     erase_id(interactions_, e.node);
                   }
                   nodes_.erase(e.node);
                 },
             },
             ev.payload);
  log_.push_back(ev);
}

const GraphEvent& PrivacyGraph::apply(EventPayload payload) {
  apply(GraphEvent{log_.size() + 1, std::move(payload)});
  return log_.back();
}

std::vector<std::string> PrivacyGraph::check_invariants() const {
  std::vector<std::string> issues;
  std::set<NodeId> seen;
  for (const auto& id : data_flow_) {
    const Node* n = find(id);
    if (!n) {
      issues.push_back("data flow id '" + id + "' does not resolve");
    } else if (!is_data_action(n->kind)) {
      issues.push_back("data flow contains interaction '" + id + "'");
    }
    if (!seen.insert(id).second) issues.push_back("id '" + id + "' listed twice");
  }
  for (const auto& id : interactions_) {
    const Node* n = find(id);
    if (!n) {
      issues.push_back("interaction id '" + id + "' does not resolve");
    } else if (!is_interaction(n->kind)) {
      issues.push_back("interaction set contains data action '" + id + "'");
    }
    if (!seen.insert(id).second) issues.push_back("id '" + id + "' listed twice");
    auto att = attachments_.find(id);
    if (att == attachments_.end()) {
      issues.push_back("interaction '" + id + "' has no attachment edge");
    } else if (std::find(data_flow_.begin(), data_flow_.end(), att->second) == data_flow_.end()) {
      issues.push_back("interaction '" + id + "' attached to '" + att->second +
                       "' which is not in the data flow");
    }
  }
  if (attachments_.size() != interactions_.size()) {
    issues.push_back("attachment edges do not match interaction set");
  }
  if (seen.size() != nodes_.size()) issues.push_back("orphan nodes present");
  std::set<std::pair<NodeKind, std::string>> labels;
  for (const auto& [id, node] : nodes_) {
    if (node.id != id) issues.push_back("node key '" + id + "' does not match its id");
    if (node.label.empty()) issues.push_back("node '" + id + "' has an empty label");
    if (!labels.emplace(node.kind, node.label).second) {
      issues.push_back("duplicate (kind, label) for '" + node.label + "'");
    }
    for (const auto& [key, value] : node.decisions) {
      if (!is_canonical_key(key.str())) issues.push_back("non-canonical key on '" + id + "'");
      if (!value.valid()) issues.push_back("empty value for '" + key.str() + "' on '" + id + "'");
    }
  }
  for (std::size_t i = 0; i < log_.size(); ++i) {
    if (log_[i].sequence != i + 1) issues.push_back("event log has a sequence gap");
  }
  return issues;
}

bool same_state(const PrivacyGraph& a, const PrivacyGraph& b) {
  return a.data_flow() == b.data_flow() && a.interactions() == b.interactions() &&
         a.attachments() == b.attachments() && a.nodes() == b.nodes();
}

PrivacyGraph apply_event(const PrivacyGraph& graph, const GraphEvent& event) {
  PrivacyGraph next = graph;
  next.apply(event);
  return next;
}

PrivacyGraph replay(std::span<const GraphEvent> events) {
  PrivacyGraph graph;
  for (std::size_t i = 0; i < events.size(); ++i) {
    const auto& ev = events[i];
    if (ev.sequence != i + 1) {
      throw Error(ErrorCode::SequenceGap, "event log is missing sequence " + std::to_string(i + 1));
    }
    try {
      graph.apply(ev);
    } catch (const Error& e) {
      throw Error(e.code(), "event " + std::to_string(ev.sequence) + ": " + e.what());
    }
  }
  return graph;
}

std::set<NodeKind> missing_kinds(const PrivacyGraph& graph) {
  std::set<NodeKind> missing(kAllNodeKinds.begin(), kAllNodeKinds.end());
  for (const auto& [_, node] : graph.nodes()) missing.erase(node.kind);
  return missing;
}

}  // namespace elicit
