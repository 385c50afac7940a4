#pragma once

#include "elicit/design_space.hpp"
#include "elicit/graph.hpp"
#include "elicit/question.hpp"

#include <nlohmann/json_fwd.hpp>

#include <chrono>
#include <map>
#include <memory>
#include <optional>
#include <semaphore>
#include <span>
#include <string>
#include <vector>

namespace elicit {

struct DataActionProposal {
  NodeKind kind = NodeKind::Collect;
  std::string label;

  friend bool operator==(const DataActionProposal&, const DataActionProposal&) = default;
};

struct RequirementsResult {
  std::vector<std::string> requirements;
  std::vector<DataActionProposal> data_actions;

  friend bool operator==(const RequirementsResult&, const RequirementsResult&) = default;
};

struct RenderedQuestion {
  std::string text;
  std::vector<std::string> options;

  friend bool operator==(const RenderedQuestion&, const RenderedQuestion&) = default;
};

/// Every language-model-dependent capability the engine needs. Implementations
/// must be safe to call from one thread per session at a time.
class Provider {
 public:
  virtual ~Provider() = default;

  virtual RequirementsResult expand_requirements(const std::string& goal) = 0;
  virtual LabelSet annotate_session_domains(const std::string& goal,
                                            const std::vector<std::string>& requirements) = 0;
  virtual std::vector<Proposal> propose_exploratory(const PrivacyGraph& graph,
                                                    std::span<const AskedQuestion> history) = 0;
  /// Options must be rephrasings of `values`, same count, same order.
  virtual RenderedQuestion contextualize_question(const DecisionDef& def,
                                                  const std::vector<std::string>& values,
                                                  const Node& target, const PrivacyGraph& graph,
                                                  std::span<const AskedQuestion> history) = 0;
  /// A free-text follow-up to an exploitative answer, if any.
  virtual std::optional<std::string> follow_up(const AskedQuestion& answered,
                                               const PrivacyGraph& graph) = 0;
  virtual bool is_duplicate(const Question& candidate, std::span<const AskedQuestion> history,
                            const PrivacyGraph& graph) = 0;
  virtual std::vector<std::string> summarize_issues(const Node& data_action,
                                                    const PrivacyGraph& graph) = 0;
};

// ---------------------------------------------------------------------------
// Deterministic stub

/// Keyword tables driving the stub. Loaded from data/stub_lexicon.json.
struct StubLexicon {
  struct Topic {
    std::vector<std::string> cues;
    std::string subject;
  };
  struct KindTemplate {
    std::string label;     // "{subject}" is substituted
    std::string question;  // ditto
  };
  std::vector<Topic> topics;
  std::string default_subject = "user data";
  std::vector<std::string> processing_cues;
  std::vector<std::pair<Label, std::vector<std::string>>> label_keywords;
  std::vector<std::pair<NodeKind, KindTemplate>> kind_templates;
  std::string requirement_template = "The feature must {verb} {subject}.";
  std::string issue_template = "{label}: review whether {key} = {value} is appropriate.";
};

StubLexicon parse_stub_lexicon(std::string_view text);
StubLexicon load_stub_lexicon(const std::string& path);

struct StubOptions {
  std::uint64_t seed = 0;
  /// Kinds the stub never proposes.
  std::set<NodeKind> never_propose = {NodeKind::Influence};
  /// Keys that trigger a follow-up question; empty means none.
  std::set<DecisionKey> follow_up_keys;
};

class StubProvider : public Provider {
 public:
  StubProvider(StubLexicon lexicon, StubOptions options);

  RequirementsResult expand_requirements(const std::string& goal) override;
  LabelSet annotate_session_domains(const std::string& goal,
                                    const std::vector<std::string>& requirements) override;
  std::vector<Proposal> propose_exploratory(const PrivacyGraph& graph,
                                            std::span<const AskedQuestion> history) override;
  RenderedQuestion contextualize_question(const DecisionDef& def,
                                          const std::vector<std::string>& values,
                                          const Node& target, const PrivacyGraph& graph,
                                          std::span<const AskedQuestion> history) override;
  std::optional<std::string> follow_up(const AskedQuestion& answered,
                                       const PrivacyGraph& graph) override;
  bool is_duplicate(const Question& candidate, std::span<const AskedQuestion> history,
                    const PrivacyGraph& graph) override;
  std::vector<std::string> summarize_issues(const Node& data_action,
                                            const PrivacyGraph& graph) override;

  /// The subject phrase the goal maps to (first matching topic).
  std::string subject_for(const std::string& goal) const;
  /// Recovers the subject from data-action labels produced by the templates.
  std::string subject_in(const PrivacyGraph& graph) const;

 private:
  StubLexicon lexicon_;
  StubOptions options_;
};

// ---------------------------------------------------------------------------
// Contract enforcement and concurrency limits

/// Rejects provider output that breaks the contract with
/// ProviderError{SchemaViolation}: option count or order changes, unknown
/// kinds, targets that do not exist or are not data actions.
class CheckedProvider final : public Provider {
 public:
  explicit CheckedProvider(std::shared_ptr<Provider> inner);

  RequirementsResult expand_requirements(const std::string& goal) override;
  LabelSet annotate_session_domains(const std::string& goal,
                                    const std::vector<std::string>& requirements) override;
  std::vector<Proposal> propose_exploratory(const PrivacyGraph& graph,
                                            std::span<const AskedQuestion> history) override;
  RenderedQuestion contextualize_question(const DecisionDef& def,
                                          const std::vector<std::string>& values,
                                          const Node& target, const PrivacyGraph& graph,
                                          std::span<const AskedQuestion> history) override;
  std::optional<std::string> follow_up(const AskedQuestion& answered,
                                       const PrivacyGraph& graph) override;
  bool is_duplicate(const Question& candidate, std::span<const AskedQuestion> history,
                    const PrivacyGraph& graph) override;
  std::vector<std::string> summarize_issues(const Node& data_action,
                                            const PrivacyGraph& graph) override;

 private:
  std::shared_ptr<Provider> inner_;
};

void check_rendered_question(const RenderedQuestion& q, const std::vector<std::string>& values);
void check_proposals(const std::vector<Proposal>& proposals, const PrivacyGraph& graph);
void check_requirements(const RequirementsResult& r);

/// Caps concurrent calls into `inner` across every session sharing the gate.
class ProviderGate final : public Provider {
 public:
  using Semaphore = std::counting_semaphore<1024>;

  ProviderGate(std::shared_ptr<Provider> inner, std::shared_ptr<Semaphore> slots);

  RequirementsResult expand_requirements(const std::string& goal) override;
  LabelSet annotate_session_domains(const std::string& goal,
                                    const std::vector<std::string>& requirements) override;
  std::vector<Proposal> propose_exploratory(const PrivacyGraph& graph,
                                            std::span<const AskedQuestion> history) override;
  RenderedQuestion contextualize_question(const DecisionDef& def,
                                          const std::vector<std::string>& values,
                                          const Node& target, const PrivacyGraph& graph,
                                          std::span<const AskedQuestion> history) override;
  std::optional<std::string> follow_up(const AskedQuestion& answered,
                                       const PrivacyGraph& graph) override;
  bool is_duplicate(const Question& candidate, std::span<const AskedQuestion> history,
                    const PrivacyGraph& graph) override;
  std::vector<std::string> summarize_issues(const Node& data_action,
                                            const PrivacyGraph& graph) override;

 private:
  template <class F>
  auto guarded(F&& f);

  std::shared_ptr<Provider> inner_;
  std::shared_ptr<Semaphore> slots_;
};

// ---------------------------------------------------------------------------
// External chat-completion backend

enum class ProviderBackend { Stub, External };

struct ProviderConfig {
  ProviderBackend backend = ProviderBackend::Stub;
  std::string endpoint;  // e.g. http://localhost:8000/v1/chat/completions
  std::string model;
  /// Name of the environment variable holding the bearer token.
  std::string credential_env = "ELICIT_PROVIDER_TOKEN";
  double temperature = 0.0;
  double top_p = 0.95;
  int max_output_tokens = 1024;
  std::chrono::milliseconds timeout{30000};
  int max_retries = 2;
  std::chrono::milliseconds backoff{200};
  std::string prompt_dir;
  std::string lexicon_path;
  std::uint64_t seed = 0;

  /// Throws Error{InvalidArgument} on out-of-range sampling parameters or a
  /// missing endpoint for the external backend.
  void validate() const;
};

struct ChatRequest {
  std::string body;  // JSON text
};

struct ChatResponse {
  int status = 0;
  std::string body;
};

/// Moves one request to the model endpoint. Implementations throw
/// ProviderError{Timeout} or ProviderError{ProviderFailure} on transport
/// errors.
class ChatTransport {
 public:
  virtual ~ChatTransport() = default;
  virtual ChatResponse send(const ChatRequest& request) = 0;
};

/// Process-wide count of requests handed to any HttpTransport.
std::uint64_t network_request_count();

class HttpTransport final : public ChatTransport {
 public:
  HttpTransport(std::string endpoint, std::string bearer_token, std::chrono::milliseconds timeout);
  ChatResponse send(const ChatRequest& request) override;

 private:
  std::string scheme_host_port_;
  std::string path_;
  std::string token_;
  std::chrono::milliseconds timeout_;
};

/// Prompt files named <operation>.txt with {{name}} placeholders.
class PromptTemplates {
 public:
  static PromptTemplates load(const std::string& dir);
  void set(const std::string& name, std::string text);
  /// Throws Error{InvalidArgument} for an unknown template or placeholder.
  std::string render(const std::string& name,
                     const std::vector<std::pair<std::string, std::string>>& vars) const;
  const std::string& version() const noexcept { return version_; }

 private:
  std::map<std::string, std::string> templates_;
  std::string version_ = "unversioned";
};

class ExternalProvider final : public Provider {
 public:
  ExternalProvider(ProviderConfig config, std::shared_ptr<ChatTransport> transport,
                   PromptTemplates prompts);

  RequirementsResult expand_requirements(const std::string& goal) override;
  LabelSet annotate_session_domains(const std::string& goal,
                                    const std::vector<std::string>& requirements) override;
  std::vector<Proposal> propose_exploratory(const PrivacyGraph& graph,
                                            std::span<const AskedQuestion> history) override;
  RenderedQuestion contextualize_question(const DecisionDef& def,
                                          const std::vector<std::string>& values,
                                          const Node& target, const PrivacyGraph& graph,
                                          std::span<const AskedQuestion> history) override;
  std::optional<std::string> follow_up(const AskedQuestion& answered,
                                       const PrivacyGraph& graph) override;
  bool is_duplicate(const Question& candidate, std::span<const AskedQuestion> history,
                    const PrivacyGraph& graph) override;
  std::vector<std::string> summarize_issues(const Node& data_action,
                                            const PrivacyGraph& graph) override;

  /// The request body sent for a rendered prompt; exposed for fixture tests.
  std::string request_body(const std::string& operation, const std::string& prompt) const;

 private:
  /// Sends, parses the structured payload and validates it with `check`.
  /// Retries parse failures; contract violations surface immediately.
  template <class T, class Parse>
  T call(const std::string& operation, const std::string& prompt, Parse&& parse);

  ProviderConfig config_;
  std::shared_ptr<ChatTransport> transport_;
  PromptTemplates prompts_;
};

/// Parses the assistant message content out of a chat-completion response.
std::string extract_message_content(const std::string& response_body);

ProviderConfig provider_config_from_json(const nlohmann::json& j);

/// Builds stub or external per `config`, wrapped in CheckedProvider.
std::shared_ptr<Provider> make_provider(const ProviderConfig& config);

}  // namespace elicit
