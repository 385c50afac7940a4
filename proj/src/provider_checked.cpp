#include "elicit/error.hpp"
#include "elicit/provider.hpp"

#include <set>

namespace elicit {

namespace {

[[noreturn]] void violation(const std::string& message) {
  throw ProviderError(ErrorCode::SchemaViolation, message);
}

bool blank(const std::string& s) { return s.find_first_not_of(" \t\r\n") == std::string::npos; }

}  // namespace

void check_rendered_question(const RenderedQuestion& q, const std::vector<std::string>& values) {
  if (blank(q.text)) violation("question text is empty");
  if (q.options.size() != values.size()) {
    violation("expected " + std::to_string(values.size()) + " options, got " +
              std::to_string(q.options.size()));
  }
  for (std::size_t i = 0; i < q.options.size(); ++i) {
    if (blank(q.options[i])) violation("option " + std::to_string(i) + " is empty");
  }
}

void check_proposals(const std::vector<Proposal>& proposals, const PrivacyGraph& graph) {
  for (const auto& p : proposals) {
    if (blank(p.label)) violation("proposal label is empty");
    if (blank(p.question)) violation("proposal question is empty");
    if (is_data_action(p.kind)) {
      if (p.target) violation("data-action proposal '" + p.label + "' must not have a target");
      continue;
    }
    if (!p.target) violation("interaction proposal '" + p.label + "' has no target");
    const Node* t = graph.find(*p.target);
    if (!t) violation("proposal target '" + *p.target + "' does not exist");
    if (!is_data_action(t->kind)) violation("proposal target '" + *p.target + "' is not a data action");
  }
}

void check_requirements(const RequirementsResult& r) {
  std::set<std::pair<NodeKind, std::string>> seen;
  for (const auto& a : r.data_actions) {
    if (!is_data_action(a.kind)) violation("initial proposal '" + a.label + "' is not a data action");
    if (blank(a.label)) violation("initial proposal label is empty");
    if (!seen.emplace(a.kind, a.label).second) violation("duplicate initial proposal '" + a.label + "'");
  }
  for (const auto& req : r.requirements) {
    if (blank(req)) violation("empty requirement");
  }
}

CheckedProvider::CheckedProvider(std::shared_ptr<Provider> inner) : inner_(std::move(inner)) {}

RequirementsResult CheckedProvider::expand_requirements(const std::string& goal) {
  auto r = inner_->expand_requirements(goal);
  check_requirements(r);
  return r;
}

LabelSet CheckedProvider::annotate_session_domains(const std::string& goal,
                                                   const std::vector<std::string>& requirements) {
  return inner_->annotate_session_domains(goal, requirements);
}

std::vector<Proposal> CheckedProvider::propose_exploratory(const PrivacyGraph& graph,
                                                           std::span<const AskedQuestion> history) {
  auto out = inner_->propose_exploratory(graph, history);
  check_proposals(out, graph);
  return out;
}

RenderedQuestion CheckedProvider::contextualize_question(const DecisionDef& def,
                                                         const std::vector<std::string>& values,
                                                         const Node& target, const PrivacyGraph& graph,
                                                         std::span<const AskedQuestion> history) {
  auto q = inner_->contextualize_question(def, values, target, graph, history);
  check_rendered_question(q, values);
  return q;
}

std::optional<std::string> CheckedProvider::follow_up(const AskedQuestion& answered,
                                                      const PrivacyGraph& graph) {
  auto f = inner_->follow_up(answered, graph);
  if (f && blank(*f)) violation("follow-up question is empty");
  return f;
}

bool CheckedProvider::is_duplicate(const Question& candidate, std::span<const AskedQuestion> history,
                                   const PrivacyGraph& graph) {
  return inner_->is_duplicate(candidate, history, graph);
}

std::vector<std::string> CheckedProvider::summarize_issues(const Node& data_action,
                                                           const PrivacyGraph& graph) {
  auto issues = inner_->summarize_issues(data_action, graph);
  for (const auto& i : issues) {
    if (blank(i)) violation("empty issue text");
  }
  return issues;
}

// ---------------------------------------------------------------------------

ProviderGate::ProviderGate(std::shared_ptr<Provider> inner, std::shared_ptr<Semaphore> slots)
    : inner_(std::move(inner)), slots_(std::move(slots)) {}

template <class F>
auto ProviderGate::guarded(F&& f) {
  struct Slot {
    Semaphore& s;
    explicit Slot(Semaphore& sem) : s(sem) { s.acquire(); }
    ~Slot() { s.release(); }
  } slot(*slots_);
  return f();
}

RequirementsResult ProviderGate::expand_requirements(const std::string& goal) {
  return guarded([&] { return inner_->expand_requirements(goal); });
}

LabelSet ProviderGate::annotate_session_domains(const std::string& goal,
                                                const std::vector<std::string>& requirements) {
  return guarded([&] { return inner_->annotate_session_domains(goal, requirements); });
}

std::vector<Proposal> ProviderGate::propose_exploratory(const PrivacyGraph& graph,
                                                        std::span<const AskedQuestion> history) {
  return guarded([&] { return inner_->propose_exploratory(graph, history); });
}

RenderedQuestion ProviderGate::contextualize_question(const DecisionDef& def,
                                                      const std::vector<std::string>& values,
                                                      const Node& target, const PrivacyGraph& graph,
                                                      std::span<const AskedQuestion> history) {
  return guarded([&] { return inner_->contextualize_question(def, values, target, graph, history); });
}

std::optional<std::string> ProviderGate::follow_up(const AskedQuestion& answered,
                                                   const PrivacyGraph& graph) {
  return guarded([&] { return inner_->follow_up(answered, graph); });
}

bool ProviderGate::is_duplicate(const Question& candidate, std::span<const AskedQuestion> history,
                                const PrivacyGraph& graph) {
  return guarded([&] { return inner_->is_duplicate(candidate, history, graph); });
}

std::vector<std::string> ProviderGate::summarize_issues(const Node& data_action,
                                                        const PrivacyGraph& graph) {
  return guarded([&] { return inner_->summarize_issues(data_action, graph); });
}

}  // namespace elicit
