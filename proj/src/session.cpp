#include "elicit/session.hpp"

#include "elicit/error.hpp"
#include "json_util.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace elicit {

using namespace detail;

namespace {

[[noreturn]] void fail(ErrorCode code, const std::string& message) { throw Error(code, message); }

std::string node_id(std::uint32_t n) { return "n" + std::to_string(n); }
std::string question_id(std::uint32_t n) { return "q" + std::to_string(n); }

bool is_yes(const Response& r) {
  const auto* s = std::get_if<response::Selected>(&r);
  return s && s->indices.size() == 1 && s->indices.front() == 0;
}

void check_response(const Question& q, const Response& r) {
  if (is_skip(r)) return;
  if (const auto* c = std::get_if<response::Custom>(&r)) {
    if (q.kind == QuestionKind::Exploratory) fail(ErrorCode::InvalidAnswer, "exploratory questions take yes or no");
    if (c->text.empty()) fail(ErrorCode::InvalidAnswer, "custom response is empty");
    return;
  }
  const auto& s = std::get<response::Selected>(r);
  if (q.kind == QuestionKind::FollowUp) fail(ErrorCode::InvalidAnswer, "follow-up questions take free text");
  if (s.indices.empty()) fail(ErrorCode::InvalidAnswer, "no option selected");
  for (std::size_t i : s.indices) {
    if (i >= q.options.size()) {
      fail(ErrorCode::OptionOutOfRange, "option index out of range for question " + q.id);
    }
  }
  std::vector<std::size_t> sorted = s.indices;
  std::sort(sorted.begin(), sorted.end());
  if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) {
    fail(ErrorCode::InvalidAnswer, "option selected twice");
  }
  if (q.kind == QuestionKind::Exploratory && s.indices.size() != 1) {
    fail(ErrorCode::InvalidAnswer, "exploratory questions take exactly one option");
  }
}

/// The graph change an answer implies, if any.
std::optional<EventPayload> effect_of(const Question& q, const Response& r) {
  if (is_skip(r)) return std::nullopt;
  if (q.kind == QuestionKind::Exploratory) {
    if (!is_yes(r) || !q.proposal) return std::nullopt;
    const Proposal& p = *q.proposal;
    if (is_data_action(p.kind)) return event::AddDataAction{q.target_node, p.kind, p.label};
    return event::AddInteraction{q.target_node, p.kind, p.label, p.target.value_or("")};
  }
  DecisionValue value;
  if (const auto* c = std::get_if<response::Custom>(&r)) {
    value.custom = c->text;
  } else {
    std::vector<std::size_t> idx = std::get<response::Selected>(r).indices;
    std::sort(idx.begin(), idx.end());
    for (std::size_t i : idx) value.selected.push_back(i < q.values.size() ? q.values[i] : q.options.at(i));
  }
  return event::SetDecision{q.target_node, q.decision_key.value_or(DecisionKey{}), std::move(value)};
}

/// Whether every node `payload` refers to is present in `graph` and an added
/// node would not duplicate one already there. On a rebuild the earlier of
/// two answers proposing the same node wins.
bool applicable(const PrivacyGraph& graph, const EventPayload& payload) {
  return std::visit(overloaded{
                        [&](const event::AddDataAction& e) {
                          return !graph.find(e.id) && !graph.find_by_label(e.kind, e.label);
                        },
                        [&](const event::AddInteraction& e) {
                          return graph.find(e.target) != nullptr && !graph.find(e.id) &&
                                 !graph.find_by_label(e.kind, e.label);
                        },
                        [&](const event::SetDecision& e) { return graph.find(e.node) != nullptr; },
                        [&](const event::ReviseDecision& e) { return graph.find(e.node) != nullptr; },
                        [&](const event::RemoveNode& e) { return graph.find(e.node) != nullptr; },
                    },
                    payload);
}

/// Nodes a question needs in order to stay answerable.
bool question_live(const PrivacyGraph& graph, const Question& q) {
  if (q.kind == QuestionKind::Exploratory) {
    if (!q.proposal) return true;
    if (graph.find_by_label(q.proposal->kind, q.proposal->label)) return false;
    return !q.proposal->target || graph.find(*q.proposal->target);
  }
  return graph.find(q.target_node) != nullptr;
}

void withdraw_pending(SessionState& s) {
  if (!s.pending) return;
  if (s.pending->kind == QuestionKind::FollowUp) {
    Question back = *s.pending;
    back.id.clear();
    s.follow_ups.push_front(std::move(back));
  }
  s.pending.reset();
}

void drop_dead_questions(SessionState& s) {
  if (s.pending && !question_live(s.graph, *s.pending)) s.pending.reset();
  std::erase_if(s.follow_ups, [&](const Question& q) { return !question_live(s.graph, q); });
}

bool same_follow_up(const Question& a, const Question& b) {
  return a.target_node == b.target_node && a.decision_key == b.decision_key;
}

void require(bool ok, ErrorCode code, const std::string& message) {
  if (!ok) fail(code, message);
}

void apply_answer(SessionState& s, const session_event::Answered& e) {
  const Answer& a = e.answer;
  if (!a.revision) {
    if (!s.pending || s.pending->id != a.question_id) {
      bool answered = std::any_of(s.log.begin(), s.log.end(),
                                  [&](const AskedQuestion& x) { return x.question.id == a.question_id; });
      fail(ErrorCode::StaleQuestion, answered ? "question " + a.question_id + " was already answered"
                                              : "question " + a.question_id + " is not the current question");
    }
    const Question q = *s.pending;
    check_response(q, a.response);
    if (auto payload = effect_of(q, a.response)) s.graph.apply(*payload);
    if (e.follow_up) {
      require(q.kind == QuestionKind::Exploitative && !is_skip(a.response) && q.decision_key.has_value(),
              ErrorCode::InvalidAnswer, "follow-up recorded for a question that cannot have one");
      Question fu;
      fu.kind = QuestionKind::FollowUp;
      fu.target_node = q.target_node;
      fu.decision_key = details_key(*q.decision_key);
      fu.text = *e.follow_up;
      s.follow_ups.push_front(std::move(fu));
    }
    s.log.push_back({q, a.response});
    ++s.questions_asked;
    s.pending.reset();
    s.last_exploratory_skipped = q.kind == QuestionKind::Exploratory && is_skip(a.response);
    return;
  }

  require(s.stage == Stage::QuestionLoop || s.stage == Stage::Assessment, ErrorCode::StageViolation,
          "answers can only be revised during questions or assessment");
  auto it = std::find_if(s.log.begin(), s.log.end(),
                         [&](const AskedQuestion& x) { return x.question.id == a.question_id; });
  require(it != s.log.end(), ErrorCode::InvalidAnswer, "question " + a.question_id + " has not been answered");
  require(!is_skip(a.response), ErrorCode::InvalidAnswer, "a revision must give an answer");
  const Question& q = it->question;
  check_response(q, a.response);
  if (q.kind == QuestionKind::Exploratory) {
    if (is_yes(a.response) != is_yes(it->response)) {
      if (is_yes(a.response) && q.proposal && q.proposal->target) {
        require(s.graph.find(*q.proposal->target) != nullptr, ErrorCode::InvalidAnswer,
                "the node this proposal attaches to no longer exists");
      }
      it->response = a.response;
      s.graph = fold_answers(s.initial_actions, s.log);
      drop_dead_questions(s);
    }
    it->response = a.response;
    return;
  }
  require(s.graph.find(q.target_node) != nullptr, ErrorCode::InvalidAnswer,
          "node " + q.target_node + " no longer exists");
  auto set = std::get<event::SetDecision>(*effect_of(q, a.response));
  if (s.graph.node(set.node).decisions.count(set.key)) {
    s.graph.apply(event::ReviseDecision{set.node, set.key, set.value});
  } else {
    s.graph.apply(std::move(set));
  }
  it->response = a.response;
}

void apply_in_place(SessionState& s, const SessionEvent& event) {
  std::visit(
      overloaded{
          [&](const session_event::Created& e) {
            require(s.events.empty(), ErrorCode::StageViolation, "session already created");
            require(!e.goal.empty(), ErrorCode::InvalidArgument, "design goal is empty");
            s.id = e.id;
            s.goal = e.goal;
            s.seed = e.seed;
          },
          [&](const session_event::Started& e) {
            require(s.stage == Stage::GoalEntry, ErrorCode::StageViolation, "session already started");
            for (const auto& action : e.requirements.data_actions) {
              NodeId id = node_id(++s.node_counter);
              s.graph.apply(event::AddDataAction{id, action.kind, action.label});
              s.initial_actions.emplace_back(std::move(id), action);
            }
            s.requirements = e.requirements.requirements;
            s.labels = e.labels;
            s.stage = Stage::Requirements;
          },
          [&](const session_event::RequirementsSet& e) {
            require(s.stage == Stage::Requirements, ErrorCode::StageViolation,
                    "requirements can only be edited before the questions start");
            s.requirements = e.requirements;
            s.labels = e.labels;
            s.stage = Stage::QuestionLoop;
          },
          [&](const session_event::Served& e) {
            require(s.stage == Stage::QuestionLoop && !s.terminated, ErrorCode::StageViolation,
                    "questions are not being asked");
            require(!s.pending, ErrorCode::StageViolation, "a question is already pending");
            require(s.questions_asked < kQuestionBudget, ErrorCode::BudgetExhausted, "question budget exhausted");
            const Question& q = e.question;
            require(q.id == question_id(s.served + 1), ErrorCode::InvalidArgument, "unexpected question id " + q.id);
            if (q.kind == QuestionKind::Exploratory) {
              require(q.proposal.has_value() && q.target_node == node_id(s.node_counter + 1),
                      ErrorCode::InvalidArgument, "exploratory question must propose the next node");
              ++s.node_counter;
            } else {
              require(s.graph.find(q.target_node) != nullptr && q.decision_key.has_value(),
                      ErrorCode::InvalidArgument, "question targets no decision on an existing node");
            }
            if (q.kind == QuestionKind::FollowUp) {
              auto it = std::find_if(s.follow_ups.begin(), s.follow_ups.end(),
                                     [&](const Question& f) { return same_follow_up(f, q); });
              require(it != s.follow_ups.end(), ErrorCode::InvalidArgument, "no such follow-up queued");
              s.follow_ups.erase(it);
            }
            for (const auto& d : e.discarded) {
              if (d.kind == QuestionKind::Exploratory && d.proposal) {
                s.discarded_proposals.emplace(d.proposal->kind, d.proposal->label, d.proposal->target);
              } else if (d.decision_key) {
                s.discarded.emplace(d.target_node, *d.decision_key);
                if (d.kind == QuestionKind::FollowUp) {
                  std::erase_if(s.follow_ups, [&](const Question& f) { return same_follow_up(f, d); });
                }
              }
            }
            s.pending = q;
            ++s.served;
          },
          [&](const session_event::Answered& e) { apply_answer(s, e); },
          [&](const session_event::ModeChanged& e) {
            require(s.stage != Stage::GoalEntry, ErrorCode::StageViolation, "session not started");
            s.mode = e.mode;
            if (s.pending) {
              bool exploratory = s.pending->kind == QuestionKind::Exploratory;
              if ((e.mode == Mode::Explore && !exploratory) || (e.mode == Mode::Exploit && exploratory)) {
                withdraw_pending(s);
              }
            }
          },
          [&](const session_event::Terminated& e) {
            require(s.stage == Stage::QuestionLoop && !s.terminated, ErrorCode::StageViolation,
                    "questions are not being asked");
            withdraw_pending(s);
            s.terminated = e.reason;
            s.termination_note = e.note;
            s.stage = Stage::Assessment;
          },
          [&](const session_event::Resumed&) {
            require(s.stage == Stage::Assessment, ErrorCode::StageViolation, "nothing to resume");
            require(s.questions_asked < kQuestionBudget && s.terminated != TerminationReason::HardLimit,
                    ErrorCode::BudgetExhausted, "all questions have been asked");
            s.terminated.reset();
            s.termination_note.clear();
            s.stage = Stage::QuestionLoop;
          },
          [&](const session_event::AssessmentBuilt& e) {
            require(s.stage == Stage::Assessment || s.stage == Stage::Exported, ErrorCode::StageViolation,
                    "the assessment follows the questions");
            s.assessment = e.rows;
          },
          [&](const session_event::AssessmentEdited& e) {
            require(s.assessment.has_value(), ErrorCode::StageViolation, "no assessment to edit");
            apply_edit(*s.assessment, e.edit);
          },
          [&](const session_event::Exported&) {
            require(s.assessment.has_value(), ErrorCode::StageViolation, "no assessment to export");
            s.stage = Stage::Exported;
          },
      },
      event);
  s.events.push_back(event);
}

double unit_draw(std::uint64_t seed, std::uint32_t counter) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), counter};
  std::mt19937_64 gen(seq);
  return static_cast<double>(gen() >> 11) * 0x1.0p-53;
}

}  // namespace

// ---------------------------------------------------------------------------

std::string_view to_string(Stage stage) {
  switch (stage) {
    case Stage::GoalEntry: return "goal_entry";
    case Stage::Requirements: return "requirements";
    case Stage::QuestionLoop: return "question_loop";
    case Stage::Assessment: return "assessment";
    case Stage::Exported: return "exported";
  }
  return "?";
}

std::optional<Stage> parse_stage(std::string_view text) {
  for (auto v : {Stage::GoalEntry, Stage::Requirements, Stage::QuestionLoop, Stage::Assessment, Stage::Exported}) {
    if (to_string(v) == text) return v;
  }
  return std::nullopt;
}

std::string_view to_string(Mode mode) {
  switch (mode) {
    case Mode::Auto: return "auto";
    case Mode::Explore: return "explore";
    case Mode::Exploit: return "exploit";
  }
  return "?";
}

std::optional<Mode> parse_mode(std::string_view text) {
  for (auto v : {Mode::Auto, Mode::Explore, Mode::Exploit}) {
    if (to_string(v) == text) return v;
  }
  return std::nullopt;
}

std::string_view to_string(TerminationReason reason) {
  switch (reason) {
    case TerminationReason::HardLimit: return "HardLimit";
    case TerminationReason::EarlyStopHeuristic: return "EarlyStopHeuristic";
    case TerminationReason::UserStop: return "UserStop";
  }
  return "?";
}

std::optional<TerminationReason> parse_termination_reason(std::string_view text) {
  for (auto v : {TerminationReason::HardLimit, TerminationReason::EarlyStopHeuristic, TerminationReason::UserStop}) {
    if (to_string(v) == text) return v;
  }
  return std::nullopt;
}

void EngineConfig::validate() const {
  auto bad = [](const std::string& m) { throw Error(ErrorCode::InvalidArgument, m); };
  if (max_questions == 0 || max_questions > kQuestionBudget) {
    bad("max_questions must be between 1 and " + std::to_string(kQuestionBudget));
  }
  if (top_k == 0) bad("top_k must be positive");
  if (!(relevance_threshold >= 0.0 && relevance_threshold <= 1.0)) bad("relevance_threshold must be in [0, 1]");
  for (double p : {explore_start, explore_min}) {
    if (!(p >= 0.0 && p <= 1.0)) bad("explore probabilities must be in [0, 1]");
  }
  if (!(explore_decay >= 0.0)) bad("explore_decay must be non-negative");
  if (!std::isfinite(ranking.negative_evidence_floor)) bad("negative_evidence_floor must be finite");
}

double explore_probability(const EngineConfig& config, std::uint32_t questions_asked) {
  return std::max(config.explore_min, config.explore_start - config.explore_decay * questions_asked);
}

EngineConfig engine_config_from_json(const json& j) {
  EngineConfig c;
  if (!j.is_object()) parse_fail("engine config must be an object");
  auto number = [&](const char* name, double& out) {
    if (!j.contains(name)) return;
    if (!j.at(name).is_number()) parse_fail(std::string("'") + name + "' must be a number");
    out = j.at(name).get<double>();
  };
  auto count = [&](const char* name, auto& out) {
    if (!j.contains(name)) return;
    const json& v = j.at(name);
    if (!v.is_number_integer() || v.get<std::int64_t>() < 0) parse_fail(std::string("'") + name + "' must be a non-negative integer");
    out = j.at(name).get<std::remove_reference_t<decltype(out)>>();
  };
  count("max_questions", c.max_questions);
  count("top_k", c.top_k);
  number("relevance_threshold", c.relevance_threshold);
  number("explore_start", c.explore_start);
  number("explore_decay", c.explore_decay);
  number("explore_min", c.explore_min);
  number("negative_evidence_floor", c.ranking.negative_evidence_floor);
  if (j.contains("required_kinds")) {
    c.required_kinds.clear();
    for (const auto& name : string_list(j, "required_kinds")) {
      auto kind = parse_node_kind(name);
      if (!kind) parse_fail("unknown node kind '" + name + "'");
      c.required_kinds.insert(*kind);
    }
  }
  c.validate();
  return c;
}

DecisionKey details_key(const DecisionKey& key) { return DecisionKey::from_canonical(key.str() + "_details"); }

void apply_session_event(SessionState& state, const SessionEvent& e) {
  SessionState next = state;
  apply_in_place(next, e);
  state = std::move(next);
}

PrivacyGraph fold_answers(const std::vector<std::pair<NodeId, DataActionProposal>>& initial,
                          std::span<const AskedQuestion> log) {
  PrivacyGraph g;
  for (const auto& [id, action] : initial) g.apply(event::AddDataAction{id, action.kind, action.label});
  for (const auto& asked : log) {
    auto payload = effect_of(asked.question, asked.response);
    if (payload && applicable(g, *payload)) g.apply(std::move(*payload));
  }
  return g;
}

// ---------------------------------------------------------------------------

Session::Session(std::shared_ptr<const DesignSpace> space, std::shared_ptr<Provider> provider, EngineConfig config,
                 Sink sink)
    : space_(std::move(space)), provider_(std::move(provider)), config_(std::move(config)), sink_(std::move(sink)) {
  if (!space_ || !provider_) throw Error(ErrorCode::InvalidArgument, "session needs a design space and a provider");
  config_.validate();
  refresh_relevant();
}

Session::Session(std::string id, std::string goal, std::uint64_t seed, std::shared_ptr<const DesignSpace> space,
                 std::shared_ptr<Provider> provider, EngineConfig config, Sink sink)
    : Session(std::move(space), std::move(provider), std::move(config), std::move(sink)) {
  if (goal.find_first_not_of(" \t\r\n") == std::string::npos) {
    throw Error(ErrorCode::InvalidArgument, "design goal is empty");
  }
  commit(session_event::Created{std::move(id), std::move(goal), seed});
}

Session Session::restore(std::span<const SessionEvent> events, std::shared_ptr<const DesignSpace> space,
                         std::shared_ptr<Provider> provider, EngineConfig config, Sink sink) {
  Session s(std::move(space), std::move(provider), std::move(config), {});
  if (events.empty() || !std::holds_alternative<session_event::Created>(events.front())) {
    throw Error(ErrorCode::CorruptLog, "session log does not begin with a created event");
  }
  for (std::size_t i = 0; i < events.size(); ++i) {
    try {
      apply_in_place(s.state_, events[i]);
    } catch (const Error& e) {
      throw Error(ErrorCode::CorruptLog, "event " + std::to_string(i + 1) + " (" +
                                             std::string(event_type(events[i])) + "): " + e.what());
    }
  }
  s.refresh_relevant();
  s.sink_ = std::move(sink);
  return s;
}

void Session::commit(const SessionEvent& e) {
  SessionState next = state_;
  apply_in_place(next, e);
  if (sink_) sink_(e);
  state_ = std::move(next);
  if (state_.labels != relevant_labels_) refresh_relevant();
}

void Session::refresh_relevant() {
  relevant_labels_ = state_.labels;
  relevant_ = std::make_shared<const std::vector<DataPractice>>(
      relevant_practices(*space_, relevant_labels_, config_.relevance_threshold));
  counts_ = std::make_shared<const Cooccurrence>(*relevant_);
  render_cache_.clear();
}

void Session::require_stage(Stage stage, const char* operation) const {
  if (state_.stage != stage) {
    throw Error(ErrorCode::StageViolation, std::string(operation) + " is not allowed in stage " +
                                               std::string(to_string(state_.stage)));
  }
}

void Session::start() {
  require_stage(Stage::GoalEntry, "start");
  RequirementsResult r = provider_->expand_requirements(state_.goal);
  LabelSet labels = provider_->annotate_session_domains(state_.goal, r.requirements);
  commit(session_event::Started{std::move(r), std::move(labels)});
}

void Session::set_requirements(std::vector<std::string> requirements) {
  require_stage(Stage::Requirements, "editing requirements");
  LabelSet labels = provider_->annotate_session_domains(state_.goal, requirements);
  commit(session_event::RequirementsSet{std::move(requirements), std::move(labels)});
}

NextResult Session::next_question() {
  if (state_.terminated) return Termination{*state_.terminated};
  require_stage(Stage::QuestionLoop, "asking questions");
  if (state_.pending) return *state_.pending;
  if (state_.questions_asked >= config_.max_questions) {
    commit(session_event::Terminated{TerminationReason::HardLimit, ""});
    return Termination{TerminationReason::HardLimit};
  }
  Selection sel = select();
  if (!sel.question) {
    std::string note = sel.note.empty() ? "no candidate questions remain" : sel.note;
    commit(session_event::Terminated{TerminationReason::EarlyStopHeuristic, std::move(note)});
    return Termination{TerminationReason::EarlyStopHeuristic};
  }
  commit(session_event::Served{std::move(*sel.question), std::move(sel.discarded)});
  return *state_.pending;
}

Session::Selection Session::select() {
  Selection out;
  bool explore = false;
  switch (state_.mode) {
    case Mode::Explore: explore = true; break;
    case Mode::Exploit: explore = false; break;
    case Mode::Auto: {
      if (!state_.follow_ups.empty() || state_.last_exploratory_skipped) break;
      std::set<NodeKind> missing;
      for (NodeKind k : missing_kinds(state_.graph)) {
        if (config_.required_kinds.count(k)) missing.insert(k);
      }
      Selection scratch;
      auto proposals = missing.empty() ? std::vector<Proposal>{} : live_proposals(scratch);
      bool gap = std::any_of(proposals.begin(), proposals.end(), [&](const Proposal& p) { return missing.count(p.kind); });
      explore = gap || unit_draw(state_.seed, state_.served) < explore_probability(config_, state_.questions_asked);
      break;
    }
  }
  if (explore) {
    if (!try_exploratory(out, true)) try_exploitative(out);
  } else {
    if (!try_exploitative(out)) try_exploratory(out, true);
  }
  return out;
}

std::vector<Proposal> Session::live_proposals(Selection& out) {
  std::vector<Proposal> proposals;
  try {
    proposals = provider_->propose_exploratory(state_.graph, state_.log);
  } catch (const Error& e) {
    out.note = std::string("exploratory proposals failed: ") + e.what();
    return {};
  }
  std::set<std::tuple<NodeKind, std::string, std::optional<NodeId>>> asked;
  for (const auto& a : state_.log) {
    if (a.question.proposal) asked.emplace(a.question.proposal->kind, a.question.proposal->label, a.question.proposal->target);
  }
  std::vector<Proposal> live;
  for (auto& p : proposals) {
    auto identity = std::make_tuple(p.kind, p.label, p.target);
    if (asked.count(identity) || state_.discarded_proposals.count(identity)) continue;
    if (state_.graph.find_by_label(p.kind, p.label)) continue;
    if (p.target && !state_.graph.find(*p.target)) continue;
    live.push_back(std::move(p));
  }
  return live;
}

bool Session::try_exploratory(Selection& out, bool prefer_required) {
  std::vector<Proposal> proposals = live_proposals(out);
  if (prefer_required) {
    std::set<NodeKind> missing = missing_kinds(state_.graph);
    std::stable_partition(proposals.begin(), proposals.end(), [&](const Proposal& p) {
      return missing.count(p.kind) && config_.required_kinds.count(p.kind);
    });
  }
  for (auto& p : proposals) {
    Question q;
    q.id = question_id(state_.served + 1);
    q.kind = QuestionKind::Exploratory;
    q.target_node = node_id(state_.node_counter + 1);
    q.text = p.question;
    q.options = {std::string(kYes), std::string(kNo)};
    q.iteration = state_.questions_asked;
    q.proposal = std::move(p);
    bool duplicate = false;
    try {
      duplicate = provider_->is_duplicate(q, state_.log, state_.graph);
    } catch (const Error&) {
    }
    if (duplicate) {
      out.discarded.push_back(std::move(q));
      continue;
    }
    out.question = std::move(q);
    return true;
  }
  return false;
}

bool Session::try_exploitative(Selection& out) {
  std::set<std::pair<NodeId, DecisionKey>> asked;
  for (const auto& a : state_.log) {
    if (a.question.decision_key) asked.emplace(a.question.target_node, *a.question.decision_key);
  }
  auto duplicate = [&](const Question& q) {
    if (asked.count({q.target_node, *q.decision_key})) return true;
    try {
      if (provider_->is_duplicate(q, state_.log, state_.graph)) {
        out.discarded.push_back(q);
        return true;
      }
    } catch (const Error&) {
    }
    return false;
  };

  for (const auto& fu : state_.follow_ups) {
    Question q = fu;
    q.id = question_id(state_.served + 1);
    q.iteration = state_.questions_asked;
    if (duplicate(q)) continue;
    out.question = std::move(q);
    return true;
  }

  std::set<DecisionKey> prior;
  for (const auto& [id, node] : state_.graph.nodes()) {
    for (const auto& [key, value] : node.decisions) {
      if (space_->defines(key)) prior.insert(key);
    }
  }

  struct Candidate {
    const Node* node;
    std::size_t order;
    RankedDecision ranked;
  };
  std::vector<Candidate> candidates;
  const auto nodes = state_.graph.ordered_nodes();
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    const Node& node = *nodes[i];
    std::set<DecisionKey> answered;
    for (const auto& [key, value] : node.decisions) answered.insert(key);
    for (const auto& [nid, key] : asked) {
      if (nid == node.id) answered.insert(key);
    }
    for (const auto& [nid, key] : state_.discarded) {
      if (nid == node.id) answered.insert(key);
    }
    auto defs = candidate_decisions(*space_, *relevant_, node.kind, answered);
    for (auto& r : rank_by_prior_choices(*counts_, defs, prior, config_.ranking)) {
      if (!prior.empty() && r.from_prior && r.score <= config_.ranking.negative_evidence_floor) continue;
      candidates.push_back({&node, i, std::move(r)});
    }
  }
  std::stable_sort(candidates.begin(), candidates.end(), [](const Candidate& a, const Candidate& b) {
    if (a.ranked.score != b.ranked.score) return a.ranked.score > b.ranked.score;
    if (a.ranked.frequency != b.ranked.frequency) return a.ranked.frequency > b.ranked.frequency;
    if (a.ranked.def.key != b.ranked.def.key) return a.ranked.def.key < b.ranked.def.key;
    return a.order < b.order;
  });

  for (std::size_t start = 0; start < candidates.size(); start += config_.top_k) {
    const std::size_t end = std::min(candidates.size(), start + config_.top_k);
    std::vector<bool> rendered(end - start, true);
    for (std::size_t i = start; i < end; ++i) {
      const Candidate& c = candidates[i];
      auto cache_key = std::make_pair(c.node->id, c.ranked.def.key);
      if (render_cache_.count(cache_key)) continue;
      try {
        render_cache_[cache_key] = provider_->contextualize_question(
            c.ranked.def, c.ranked.def.applicable_values(state_.labels), *c.node, state_.graph, state_.log);
      } catch (const Error& e) {
        rendered[i - start] = false;
        out.note = "rendering " + c.ranked.def.key.str() + " failed: " + e.what();
      }
    }
    for (std::size_t i = start; i < end; ++i) {
      if (!rendered[i - start]) continue;
      const Candidate& c = candidates[i];
      const RenderedQuestion& r = render_cache_.at({c.node->id, c.ranked.def.key});
      Question q;
      q.id = question_id(state_.served + 1);
      q.kind = QuestionKind::Exploitative;
      q.target_node = c.node->id;
      q.decision_key = c.ranked.def.key;
      q.text = r.text;
      q.options = r.options;
      q.values = c.ranked.def.applicable_values(state_.labels);
      q.iteration = state_.questions_asked;
      q.score = c.ranked.score;
      if (q.options.size() != q.values.size()) continue;
      if (duplicate(q)) continue;
      out.question = std::move(q);
      return true;
    }
  }
  return false;
}

GraphDelta Session::submit_answer(const Answer& answer) {
  std::optional<std::string> follow_up;
  const std::size_t before = state_.graph.log().size();
  if (!answer.revision && state_.pending && state_.pending->id == answer.question_id &&
      state_.pending->kind == QuestionKind::Exploitative && !is_skip(answer.response)) {
    check_response(*state_.pending, answer.response);
    SessionState probe = state_;
    apply_in_place(probe, session_event::Answered{answer, std::nullopt});
    try {
      follow_up = provider_->follow_up(probe.log.back(), probe.graph);
    } catch (const Error&) {
      follow_up.reset();
    }
    if (follow_up && follow_up->empty()) follow_up.reset();
  }
  const std::vector<GraphEvent> old_log = state_.graph.log();
  commit(session_event::Answered{answer, std::move(follow_up)});
  GraphDelta delta;
  const auto& log = state_.graph.log();
  bool prefix = log.size() >= before && std::equal(old_log.begin(), old_log.end(), log.begin());
  if (prefix) {
    delta.events.assign(log.begin() + static_cast<std::ptrdiff_t>(before), log.end());
  } else {
    delta.rebuilt = true;
    delta.events = log;
  }
  return delta;
}

void Session::set_mode(Mode mode) { commit(session_event::ModeChanged{mode}); }

void Session::stop() {
  require_stage(Stage::QuestionLoop, "stop");
  commit(session_event::Terminated{TerminationReason::UserStop, ""});
}

void Session::resume() { commit(session_event::Resumed{}); }

const std::vector<AssessmentRow>& Session::build_assessment() {
  if (state_.stage != Stage::Assessment && state_.stage != Stage::Exported) {
    throw Error(ErrorCode::StageViolation, "the assessment follows the questions");
  }
  commit(session_event::AssessmentBuilt{elicit::build_assessment(state_.graph, *provider_)});
  return *state_.assessment;
}

void Session::edit_assessment(const AssessmentEdit& edit) { commit(session_event::AssessmentEdited{edit}); }

std::string Session::export_worksheet(ExportFormat format) {
  if (!state_.assessment) throw Error(ErrorCode::StageViolation, "no assessment to export");
  std::string bytes = format == ExportFormat::Csv ? export_csv(*state_.assessment) : export_xlsx(*state_.assessment);
  commit(session_event::Exported{format});
  return bytes;
}

}  // namespace elicit
