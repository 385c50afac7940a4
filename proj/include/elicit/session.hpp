#pragma once

#include "elicit/assessment.hpp"
#include "elicit/design_space.hpp"
#include "elicit/graph.hpp"
#include "elicit/provider.hpp"
#include "elicit/question.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <tuple>
#include <variant>
#include <vector>

namespace elicit {

enum class Stage { GoalEntry, Requirements, QuestionLoop, Assessment, Exported };
enum class Mode { Auto, Explore, Exploit };
enum class TerminationReason { HardLimit, EarlyStopHeuristic, UserStop };

std::string_view to_string(Stage stage);
std::optional<Stage> parse_stage(std::string_view text);
std::string_view to_string(Mode mode);
std::optional<Mode> parse_mode(std::string_view text);
std::string_view to_string(TerminationReason reason);
std::optional<TerminationReason> parse_termination_reason(std::string_view text);

inline constexpr std::uint32_t kQuestionBudget = 25;
inline constexpr std::size_t kTopK = 3;

struct EngineConfig {
  std::uint32_t max_questions = kQuestionBudget;
  std::size_t top_k = kTopK;
  double relevance_threshold = kRelevanceThreshold;
  /// Kinds whose absence makes the next automatic question exploratory.
  std::set<NodeKind> required_kinds = {NodeKind::Store, NodeKind::Share, NodeKind::Consent, NodeKind::Notice};
  /// p_explore(q) = max(explore_min, explore_start - explore_decay * q).
  double explore_start = 0.7;
  double explore_decay = 0.05;
  double explore_min = 0.1;
  RankingOptions ranking;

  /// Throws Error{InvalidArgument}.
  void validate() const;
};

double explore_probability(const EngineConfig& config, std::uint32_t questions_asked);

EngineConfig engine_config_from_json(const nlohmann::json& j);

// ---------------------------------------------------------------------------
// Session events. Every state change is one of these; replaying them
// reproduces the session without consulting the provider.

namespace session_event {
struct Created {
  std::string id;
  std::string goal;
  std::uint64_t seed = 0;
  friend bool operator==(const Created&, const Created&) = default;
};
struct Started {
  RequirementsResult requirements;
  LabelSet labels;
  friend bool operator==(const Started&, const Started&) = default;
};
struct RequirementsSet {
  std::vector<std::string> requirements;
  LabelSet labels;
  friend bool operator==(const RequirementsSet&, const RequirementsSet&) = default;
};
/// `discarded` holds candidates the provider judged duplicates on the way.
struct Served {
  Question question;
  std::vector<Question> discarded;
  friend bool operator==(const Served&, const Served&) = default;
};
struct Answered {
  Answer answer;
  std::optional<std::string> follow_up;
  friend bool operator==(const Answered&, const Answered&) = default;
};
struct ModeChanged {
  Mode mode = Mode::Auto;
  friend bool operator==(const ModeChanged&, const ModeChanged&) = default;
};
struct Terminated {
  TerminationReason reason = TerminationReason::UserStop;
  std::string note;
  friend bool operator==(const Terminated&, const Terminated&) = default;
};
struct Resumed {
  friend bool operator==(const Resumed&, const Resumed&) = default;
};
struct AssessmentBuilt {
  std::vector<AssessmentRow> rows;
  friend bool operator==(const AssessmentBuilt&, const AssessmentBuilt&) = default;
};
struct AssessmentEdited {
  AssessmentEdit edit;
  friend bool operator==(const AssessmentEdited&, const AssessmentEdited&) = default;
};
struct Exported {
  ExportFormat format = ExportFormat::Csv;
  friend bool operator==(const Exported&, const Exported&) = default;
};
}  // namespace session_event

using SessionEvent =
    std::variant<session_event::Created, session_event::Started, session_event::RequirementsSet,
                 session_event::Served, session_event::Answered, session_event::ModeChanged,
                 session_event::Terminated, session_event::Resumed, session_event::AssessmentBuilt,
                 session_event::AssessmentEdited, session_event::Exported>;

std::string_view event_type(const SessionEvent& e);
nlohmann::json session_event_to_json(const SessionEvent& e);
/// Throws Error{ParseError}.
SessionEvent session_event_from_json(const nlohmann::json& j);

// ---------------------------------------------------------------------------

struct SessionState {
  std::string id;
  std::string goal;
  std::uint64_t seed = 0;
  Stage stage = Stage::GoalEntry;
  std::vector<std::string> requirements;
  /// Data actions the session started with, in flow order.
  std::vector<std::pair<NodeId, DataActionProposal>> initial_actions;
  LabelSet labels;
  PrivacyGraph graph;
  std::vector<AskedQuestion> log;
  std::optional<Question> pending;
  /// Follow-ups waiting to be served, next first. Ids are assigned on serving.
  std::deque<Question> follow_ups;
  std::set<std::pair<NodeId, DecisionKey>> discarded;
  std::set<std::tuple<NodeKind, std::string, std::optional<NodeId>>> discarded_proposals;
  Mode mode = Mode::Auto;
  std::uint32_t questions_asked = 0;
  std::uint32_t served = 0;
  std::uint32_t node_counter = 0;
  bool last_exploratory_skipped = false;
  std::optional<TerminationReason> terminated;
  std::string termination_note;
  std::optional<std::vector<AssessmentRow>> assessment;
  std::vector<SessionEvent> events;
};

/// Throws on any event that does not fit the current state; `state` is left
/// untouched in that case.
void apply_session_event(SessionState& state, const SessionEvent& e);

/// The graph implied by the initial data actions and the answer log. Answers
/// whose node is gone are ignored.
PrivacyGraph fold_answers(const std::vector<std::pair<NodeId, DataActionProposal>>& initial,
                          std::span<const AskedQuestion> log);

/// Key under which a follow-up answer about `key` is stored.
DecisionKey details_key(const DecisionKey& key);

struct Termination {
  TerminationReason reason = TerminationReason::HardLimit;
  friend bool operator==(const Termination&, const Termination&) = default;
};

using NextResult = std::variant<Question, Termination>;

struct GraphDelta {
  std::vector<GraphEvent> events;
  /// True when the graph was rebuilt from the answer log; `events` is then
  /// the complete new log.
  bool rebuilt = false;
};

/// One elicitation session: a single-threaded state machine over SessionState.
/// Each operation computes its events (calling the provider where needed),
/// hands them to the sink and only then applies them.
class Session {
 public:
  using Sink = std::function<void(const SessionEvent&)>;

  /// Throws Error{InvalidArgument} for an empty goal. Stage is GoalEntry.
  Session(std::string id, std::string goal, std::uint64_t seed, std::shared_ptr<const DesignSpace> space,
          std::shared_ptr<Provider> provider, EngineConfig config = {}, Sink sink = {});

  /// Rebuilds a session from its events. Throws Error{CorruptLog}.
  static Session restore(std::span<const SessionEvent> events, std::shared_ptr<const DesignSpace> space,
                         std::shared_ptr<Provider> provider, EngineConfig config = {}, Sink sink = {});

  /// Expands requirements and labels. On a provider error the session stays
  /// in GoalEntry and start() may be retried.
  void start();
  /// Replaces the requirements, re-annotates labels and opens the question loop.
  void set_requirements(std::vector<std::string> requirements);

  NextResult next_question();
  GraphDelta submit_answer(const Answer& answer);
  void set_mode(Mode mode);
  void stop();
  void resume();

  const std::vector<AssessmentRow>& build_assessment();
  void edit_assessment(const AssessmentEdit& edit);
  std::string export_worksheet(ExportFormat format);

  const SessionState& state() const noexcept { return state_; }
  const std::string& id() const noexcept { return state_.id; }
  const std::vector<SessionEvent>& events() const noexcept { return state_.events; }
  const std::vector<DataPractice>& relevant() const noexcept { return *relevant_; }
  void set_sink(Sink sink) { sink_ = std::move(sink); }

 private:
  Session(std::shared_ptr<const DesignSpace> space, std::shared_ptr<Provider> provider, EngineConfig config,
          Sink sink);

  struct Selection {
    std::optional<Question> question;
    std::vector<Question> discarded;
    std::string note;
  };

  void commit(const SessionEvent& e);
  void refresh_relevant();
  void require_stage(Stage stage, const char* operation) const;
  Selection select();
  bool try_exploratory(Selection& out, bool prefer_required);
  bool try_exploitative(Selection& out);
  std::vector<Proposal> live_proposals(Selection& out);
  bool any_exploratory(Selection& scratch);

  std::shared_ptr<const DesignSpace> space_;
  std::shared_ptr<Provider> provider_;
  EngineConfig config_;
  Sink sink_;
  SessionState state_;
  LabelSet relevant_labels_;
  std::shared_ptr<const std::vector<DataPractice>> relevant_;
  std::shared_ptr<const Cooccurrence> counts_;
  std::map<std::pair<NodeId, DecisionKey>, RenderedQuestion> render_cache_;
};

/// Line-delimited session log: one JSON event per line.
std::string session_event_line(const SessionEvent& e);
/// Throws Error{CorruptLog} naming the first bad line.
std::vector<SessionEvent> read_session_log(std::string_view text);

}  // namespace elicit
