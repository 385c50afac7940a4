#include "elicit/decision_key.hpp"
#include "elicit/error.hpp"
#include "elicit/node_kind.hpp"

#include <cctype>

namespace elicit {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::UnknownNode: return "UnknownNode";
    case ErrorCode::KindMismatch: return "KindMismatch";
    case ErrorCode::DuplicateNode: return "DuplicateNode";
    case ErrorCode::UnknownDecision: return "UnknownDecision";
    case ErrorCode::SequenceGap: return "SequenceGap";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::SchemaVersionMismatch: return "SchemaVersionMismatch";
    case ErrorCode::InvariantViolation: return "InvariantViolation";
    case ErrorCode::SameKey: return "SameKey";
    case ErrorCode::EmptyAfterCanonicalization: return "EmptyAfterCanonicalization";
    case ErrorCode::AnnotatorFailure: return "AnnotatorFailure";
    case ErrorCode::ProviderFailure: return "ProviderFailure";
    case ErrorCode::Timeout: return "Timeout";
    case ErrorCode::SchemaViolation: return "SchemaViolation";
    case ErrorCode::StaleQuestion: return "StaleQuestion";
    case ErrorCode::OptionOutOfRange: return "OptionOutOfRange";
    case ErrorCode::InvalidAnswer: return "InvalidAnswer";
    case ErrorCode::StageViolation: return "StageViolation";
    case ErrorCode::BudgetExhausted: return "BudgetExhausted";
    case ErrorCode::InvalidEdit: return "InvalidEdit";
    case ErrorCode::UnknownSession: return "UnknownSession";
    case ErrorCode::CorruptLog: return "CorruptLog";
  }
  return "Unknown";
}

std::string_view to_string(NodeKind kind) {
  switch (kind) {
    case NodeKind::Collect: return "Collect";
    case NodeKind::Process: return "Process";
    case NodeKind::Store: return "Store";
    case NodeKind::Share: return "Share";
    case NodeKind::Consent: return "Consent";
    case NodeKind::Notice: return "Notice";
    case NodeKind::Control: return "Control";
    case NodeKind::Access: return "Access";
    case NodeKind::Request: return "Request";
    case NodeKind::Audit: return "Audit";
    case NodeKind::Influence: return "Influence";
  }
  return "Unknown";
}

std::optional<NodeKind> parse_node_kind(std::string_view text) {
  for (NodeKind kind : kAllNodeKinds) {
    std::string_view name = to_string(kind);
    if (name.size() != text.size()) continue;
    bool same = true;
    for (std::size_t i = 0; i < name.size() && same; ++i) {
      same = std::tolower(static_cast<unsigned char>(name[i])) ==
             std::tolower(static_cast<unsigned char>(text[i]));
    }
    if (same) return kind;
  }
  return std::nullopt;
}

std::string_view describe(NodeKind kind) {
  switch (kind) {
    case NodeKind::Collect: return "Collect users' data or sensor inputs.";
    case NodeKind::Process: return "Process data to derive new information.";
    case NodeKind::Store: return "Keep data in a persistent storage system.";
    case NodeKind::Share: return "Share data to different parties.";
    case NodeKind::Consent: return "A data subject gives permission for specific data actions.";
    case NodeKind::Notice:
      return "A data observer informs data subjects about the data action or its results.";
    case NodeKind::Control:
      return "A data subject controls settings that determine how their data is stored or "
             "processed.";
    case NodeKind::Access:
      return "A data observer accesses and uses user data or derived data for a specific purpose.";
    case NodeKind::Request: return "A data subject asks to exercise their data rights.";
    case NodeKind::Audit:
      return "An auditor examines data actions for compliance with policies or regulations.";
    case NodeKind::Influence: return "A data beneficiary/victim is impacted by a data practice.";
  }
  return "";
}

DecisionKey canonicalize_key(std::string_view raw) {
  std::string out;
  out.reserve(raw.size());
  bool pending_sep = false;
  for (char c : raw) {
    auto uc = static_cast<unsigned char>(c);
    if (std::isalnum(uc)) {
      if (pending_sep && !out.empty()) out.push_back('_');
      pending_sep = false;
      out.push_back(static_cast<char>(std::tolower(uc)));
    } else {
      pending_sep = true;
    }
  }
  if (out.empty()) {
    throw Error(ErrorCode::EmptyAfterCanonicalization,
                "key '" + std::string(raw) + "' is empty after canonicalization");
  }
  return DecisionKey(std::move(out));
}

bool is_canonical_key(std::string_view text) {
  if (text.empty() || text.front() == '_' || text.back() == '_') return false;
  char prev = 0;
  for (char c : text) {
    auto uc = static_cast<unsigned char>(c);
    bool ok = (std::islower(uc) || std::isdigit(uc)) || (c == '_' && prev != '_');
    if (!ok) return false;
    prev = c;
  }
  return true;
}

DecisionKey DecisionKey::from_canonical(std::string_view canonical) {
  if (!is_canonical_key(canonical)) {
    throw Error(ErrorCode::InvalidArgument,
                "'" + std::string(canonical) + "' is not a canonical decision key");
  }
  return DecisionKey(std::string(canonical));
}

}  // namespace elicit
