#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string_view>

namespace elicit {

/// Operation vocabulary of the representation. The first four are data
/// actions (the flow), the rest are stakeholder interactions attached to them.
enum class NodeKind : std::uint8_t {
  Collect,
  Process,
  Store,
  Share,
  Consent,
  Notice,
  Control,
  Access,
  Request,
  Audit,
  Influence,
};

inline constexpr std::array<NodeKind, 11> kAllNodeKinds = {
    NodeKind::Collect, NodeKind::Process, NodeKind::Store,   NodeKind::Share,
    NodeKind::Consent, NodeKind::Notice,  NodeKind::Control, NodeKind::Access,
    NodeKind::Request, NodeKind::Audit,   NodeKind::Influence,
};

constexpr bool is_data_action(NodeKind kind) {
  return kind == NodeKind::Collect || kind == NodeKind::Process || kind == NodeKind::Store ||
         kind == NodeKind::Share;
}

constexpr bool is_interaction(NodeKind kind) { return !is_data_action(kind); }

std::string_view to_string(NodeKind kind);

/// Case-insensitive.
std::optional<NodeKind> parse_node_kind(std::string_view text);

/// One-line definition of each operation.
std::string_view describe(NodeKind kind);

}  // namespace elicit
