#pragma once

#include "elicit/decision_key.hpp"
#include "elicit/graph.hpp"
#include "elicit/node_kind.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace elicit {

enum class QuestionKind { Exploratory, Exploitative, FollowUp };

std::string_view to_string(QuestionKind kind);
std::optional<QuestionKind> parse_question_kind(std::string_view text);

/// A node the provider suggests adding. `target` is set for interactions.
struct Proposal {
  NodeKind kind = NodeKind::Store;
  std::string label;
  std::string question;
  std::optional<NodeId> target;

  friend bool operator==(const Proposal&, const Proposal&) = default;
};

struct Question {
  std::string id;
  QuestionKind kind = QuestionKind::Exploitative;
  /// Existing node for exploitative and follow-up questions; the id the
  /// proposed node will receive for exploratory ones.
  NodeId target_node;
  std::optional<DecisionKey> decision_key;
  std::string text;
  std::vector<std::string> options;
  /// Canonical design-space values, one per option (exploitative only).
  std::vector<std::string> values;
  std::optional<Proposal> proposal;
  /// Provenance: how many questions had been served before this one, and the
  /// ranking score for exploitative questions.
  std::uint32_t iteration = 0;
  double score = 0.0;

  friend bool operator==(const Question&, const Question&) = default;
};

inline constexpr std::string_view kYes = "Yes";
inline constexpr std::string_view kNo = "No";

namespace response {
struct Selected {
  std::vector<std::size_t> indices;
  friend bool operator==(const Selected&, const Selected&) = default;
};
struct Custom {
  std::string text;
  friend bool operator==(const Custom&, const Custom&) = default;
};
struct Skip {
  friend bool operator==(const Skip&, const Skip&) = default;
};
}  // namespace response

using Response = std::variant<response::Selected, response::Custom, response::Skip>;

inline bool is_skip(const Response& r) { return std::holds_alternative<response::Skip>(r); }

/// `revision` re-answers the already answered question `question_id`.
struct Answer {
  std::string question_id;
  Response response;
  bool revision = false;

  friend bool operator==(const Answer&, const Answer&) = default;
};

struct AskedQuestion {
  Question question;
  Response response;

  friend bool operator==(const AskedQuestion&, const AskedQuestion&) = default;
};

}  // namespace elicit
