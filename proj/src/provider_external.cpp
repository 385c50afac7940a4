#include "elicit/error.hpp"
#include "elicit/provider.hpp"
#include "elicit/question_codec.hpp"
#include "json_util.hpp"

#include <httplib.h>

#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <thread>

namespace elicit {

using namespace detail;

namespace {

std::atomic<std::uint64_t> g_network_requests{0};

std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p);
  if (!in) throw Error(ErrorCode::InvalidArgument, "cannot open '" + p.string() + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

json string_array_schema() { return {{"type", "array"}, {"items", {{"type", "string"}}}}; }

json object_schema(json properties, std::vector<std::string> required) {
  return {{"type", "object"},
          {"properties", std::move(properties)},
          {"required", std::move(required)},
          {"additionalProperties", false}};
}

// Structured-output schema sent with each operation.
json schema_for(const std::string& op) {
  if (op == "expand_requirements") {
    return object_schema(
        {{"requirements", string_array_schema()},
         {"data_actions",
          {{"type", "array"},
           {"items", object_schema({{"kind", {{"type", "string"}}}, {"label", {{"type", "string"}}}},
                                   {"kind", "label"})}}}},
        {"requirements", "data_actions"});
  }
  if (op == "annotate_session_domains") return object_schema({{"labels", string_array_schema()}}, {"labels"});
  if (op == "propose_exploratory") {
    json item = object_schema({{"kind", {{"type", "string"}}},
                               {"label", {{"type", "string"}}},
                               {"question", {{"type", "string"}}},
                               {"target", {{"type", {"string", "null"}}}}},
                              {"kind", "label", "question", "target"});
    return object_schema({{"proposals", {{"type", "array"}, {"items", item}}}}, {"proposals"});
  }
  if (op == "contextualize_question") {
    json item = object_schema({{"value", {{"type", "string"}}}, {"text", {{"type", "string"}}}},
                              {"value", "text"});
    return object_schema({{"question", {{"type", "string"}}}, {"options", {{"type", "array"}, {"items", item}}}},
                         {"question", "options"});
  }
  if (op == "follow_up") return object_schema({{"follow_up", {{"type", {"string", "null"}}}}}, {"follow_up"});
  if (op == "is_duplicate") return object_schema({{"duplicate", {{"type", "boolean"}}}}, {"duplicate"});
  if (op == "summarize_issues") return object_schema({{"issues", string_array_schema()}}, {"issues"});
  throw Error(ErrorCode::InvalidArgument, "unknown provider operation '" + op + "'");
}

std::string history_text(std::span<const AskedQuestion> history) {
  json arr = json::array();
  for (const auto& a : history) {
    json q = {{"question", a.question.text}, {"response", response_to_json(a.response)}};
    if (a.question.decision_key) q["key"] = a.question.decision_key->str();
    arr.push_back(std::move(q));
  }
  return arr.dump();
}

// Thrown by response parsers for malformed (retryable) output.
struct Malformed {
  std::string message;
};

const json& need(const json& j, const char* name) {
  if (!j.is_object() || !j.contains(name)) throw Malformed{std::string("missing '") + name + "'"};
  return j.at(name);
}

std::vector<std::string> need_strings(const json& j, const char* name) {
  const json& v = need(j, name);
  if (!v.is_array()) throw Malformed{std::string("'") + name + "' is not an array"};
  std::vector<std::string> out;
  for (const auto& s : v) {
    if (!s.is_string()) throw Malformed{std::string("'") + name + "' holds a non-string"};
    out.push_back(s.get<std::string>());
  }
  return out;
}

std::string need_string(const json& j, const char* name) {
  const json& v = need(j, name);
  if (!v.is_string()) throw Malformed{std::string("'") + name + "' is not a string"};
  return v.get<std::string>();
}

}  // namespace

std::uint64_t network_request_count() { return g_network_requests.load(); }

void ProviderConfig::validate() const {
  if (!(temperature >= 0.0)) throw Error(ErrorCode::InvalidArgument, "temperature must be >= 0");
  if (!(top_p > 0.0 && top_p <= 1.0)) throw Error(ErrorCode::InvalidArgument, "top_p must be in (0, 1]");
  if (max_output_tokens <= 0) throw Error(ErrorCode::InvalidArgument, "max_output_tokens must be positive");
  if (max_retries < 0) throw Error(ErrorCode::InvalidArgument, "max_retries must be >= 0");
  if (backend == ProviderBackend::External && endpoint.empty()) {
    throw Error(ErrorCode::InvalidArgument, "external provider needs an endpoint");
  }
}

ProviderConfig provider_config_from_json(const json& j) {
  ProviderConfig c;
  if (!j.is_object()) parse_fail("provider config must be an object");
  const std::string backend = string_or(j, "backend", "stub");
  if (backend == "stub") {
    c.backend = ProviderBackend::Stub;
  } else if (backend == "external") {
    c.backend = ProviderBackend::External;
  } else {
    parse_fail("unknown provider backend '" + backend + "'");
  }
  c.endpoint = string_or(j, "endpoint", "");
  c.model = string_or(j, "model", "");
  c.credential_env = string_or(j, "credential_env", c.credential_env);
  c.prompt_dir = string_or(j, "prompt_dir", "");
  c.lexicon_path = string_or(j, "lexicon", "");
  auto number = [&](const char* name, auto fallback) {
    using T = decltype(fallback);
    if (!j.contains(name)) return fallback;
    if (!j.at(name).is_number()) parse_fail(std::string("'") + name + "' must be a number");
    return j.at(name).get<T>();
  };
  c.temperature = number("temperature", c.temperature);
  c.top_p = number("top_p", c.top_p);
  c.max_output_tokens = number("max_output_tokens", c.max_output_tokens);
  c.timeout = std::chrono::milliseconds(number("timeout_ms", static_cast<long long>(c.timeout.count())));
  c.max_retries = number("max_retries", c.max_retries);
  c.backoff = std::chrono::milliseconds(number("backoff_ms", static_cast<long long>(c.backoff.count())));
  c.seed = number("seed", c.seed);
  c.validate();
  return c;
}

// ---------------------------------------------------------------------------

HttpTransport::HttpTransport(std::string endpoint, std::string bearer_token,
                             std::chrono::milliseconds timeout)
    : token_(std::move(bearer_token)), timeout_(timeout) {
  auto scheme_end = endpoint.find("://");
  if (scheme_end == std::string::npos) {
    throw Error(ErrorCode::InvalidArgument, "endpoint must include a scheme: " + endpoint);
  }
  auto path_start = endpoint.find('/', scheme_end + 3);
  scheme_host_port_ = endpoint.substr(0, path_start);
  path_ = path_start == std::string::npos ? "/" : endpoint.substr(path_start);
}

ChatResponse HttpTransport::send(const ChatRequest& request) {
  ++g_network_requests;
  httplib::Client client(scheme_host_port_);
  const auto secs = std::chrono::duration_cast<std::chrono::seconds>(timeout_);
  const auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(timeout_ - secs);
  client.set_connection_timeout(secs.count(), usecs.count());
  client.set_read_timeout(secs.count(), usecs.count());
  client.set_write_timeout(secs.count(), usecs.count());
  httplib::Headers headers;
  if (!token_.empty()) headers.emplace("Authorization", "Bearer " + token_);
  auto res = client.Post(path_, headers, request.body, "application/json");
  if (!res) {
    if (res.error() == httplib::Error::Read || res.error() == httplib::Error::ConnectionTimeout) {
      throw ProviderError(ErrorCode::Timeout, "provider request timed out");
    }
    throw ProviderError(ErrorCode::ProviderFailure,
                        "provider request failed: " + httplib::to_string(res.error()));
  }
  return {res->status, res->body};
}

// ---------------------------------------------------------------------------

PromptTemplates PromptTemplates::load(const std::string& dir) {
  PromptTemplates t;
  namespace fs = std::filesystem;
  if (!fs::is_directory(dir)) throw Error(ErrorCode::InvalidArgument, "prompt directory '" + dir + "' not found");
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.path().extension() == ".txt") t.templates_[entry.path().stem().string()] = read_file(entry.path());
  }
  if (fs::exists(fs::path(dir) / "VERSION")) {
    t.version_ = read_file(fs::path(dir) / "VERSION");
    while (!t.version_.empty() && std::isspace(static_cast<unsigned char>(t.version_.back()))) t.version_.pop_back();
  }
  return t;
}

void PromptTemplates::set(const std::string& name, std::string text) { templates_[name] = std::move(text); }

std::string PromptTemplates::render(const std::string& name,
                                    const std::vector<std::pair<std::string, std::string>>& vars) const {
  auto it = templates_.find(name);
  if (it == templates_.end()) throw Error(ErrorCode::InvalidArgument, "no prompt template '" + name + "'");
  const std::string& text = it->second;
  std::string out;
  std::size_t pos = 0;
  while (true) {
    auto open = text.find("{{", pos);
    if (open == std::string::npos) {
      out.append(text, pos);
      break;
    }
    auto close = text.find("}}", open);
    if (close == std::string::npos) throw Error(ErrorCode::InvalidArgument, "unterminated placeholder in " + name);
    out.append(text, pos, open - pos);
    const std::string var = text.substr(open + 2, close - open - 2);
    auto v = std::find_if(vars.begin(), vars.end(), [&](const auto& kv) { return kv.first == var; });
    if (v == vars.end()) throw Error(ErrorCode::InvalidArgument, "template " + name + " needs '" + var + "'");
    out += v->second;
    pos = close + 2;
  }
  return out;
}

// ---------------------------------------------------------------------------

namespace {

std::string message_content(const std::string& response_body) {
  json j = json::parse(response_body, nullptr, false);
  if (j.is_discarded()) throw Malformed{"response body is not JSON"};
  const json& choices = need(j, "choices");
  if (!choices.is_array() || choices.empty()) throw Malformed{"no choices in response"};
  const json& message = need(choices.at(0), "message");
  return need_string(message, "content");
}

}  // namespace

std::string extract_message_content(const std::string& response_body) {
  try {
    return message_content(response_body);
  } catch (const Malformed& m) {
    throw ProviderError(ErrorCode::ProviderFailure, m.message, response_body);
  }
}

ExternalProvider::ExternalProvider(ProviderConfig config, std::shared_ptr<ChatTransport> transport,
                                   PromptTemplates prompts)
    : config_(std::move(config)), transport_(std::move(transport)), prompts_(std::move(prompts)) {
  config_.validate();
}

std::string ExternalProvider::request_body(const std::string& operation, const std::string& prompt) const {
  json body = {
      {"model", config_.model},
      {"temperature", config_.temperature},
      {"top_p", config_.top_p},
      {"max_tokens", config_.max_output_tokens},
      {"messages", json::array({{{"role", "user"}, {"content", prompt}}})},
      {"response_format",
       {{"type", "json_schema"},
        {"json_schema", {{"name", operation}, {"strict", true}, {"schema", schema_for(operation)}}}}},
      {"metadata", {{"prompt_version", prompts_.version()}}},
  };
  return body.dump();
}

template <class T, class Parse>
T ExternalProvider::call(const std::string& operation, const std::string& prompt, Parse&& parse) {
  const ChatRequest request{request_body(operation, prompt)};
  thread_local std::mt19937_64 jitter{std::random_device{}()};
  std::string last_payload;
  std::string last_problem;
  ErrorCode last_code = ErrorCode::ProviderFailure;
  for (int attempt = 0; attempt <= config_.max_retries; ++attempt) {
    if (attempt > 0 && config_.backoff.count() > 0) {
      std::uniform_real_distribution<double> u(0.5, 1.5);
      auto wait = config_.backoff * (1 << (attempt - 1));
      std::this_thread::sleep_for(std::chrono::duration_cast<std::chrono::milliseconds>(wait * u(jitter)));
    }
    ChatResponse response;
    try {
      response = transport_->send(request);
    } catch (const ProviderError& e) {
      last_code = e.code();
      last_problem = e.what();
      continue;
    }
    last_payload = response.body;
    if (response.status < 200 || response.status >= 300) {
      last_code = ErrorCode::ProviderFailure;
      last_problem = "HTTP status " + std::to_string(response.status);
      continue;
    }
    try {
      std::string content = message_content(response.body);
      last_payload = content;
      json payload = json::parse(content, nullptr, false);
      if (payload.is_discarded()) throw Malformed{"content is not JSON"};
      try {
        return parse(payload);
      } catch (const ProviderError& e) {
        throw ProviderError(e.code(), operation + ": " + e.what(), content);
      }
    } catch (const Malformed& m) {
      last_code = ErrorCode::ProviderFailure;
      last_problem = m.message;
    }
  }
  if (last_code == ErrorCode::Timeout) {
    throw ProviderError(ErrorCode::Timeout, operation + ": " + last_problem, last_payload);
  }
  throw ProviderError(ErrorCode::ProviderFailure,
                      operation + " failed after " + std::to_string(config_.max_retries + 1) +
                          " attempts: " + last_problem,
                      last_payload);
}

RequirementsResult ExternalProvider::expand_requirements(const std::string& goal) {
  return call<RequirementsResult>(
      "expand_requirements", prompts_.render("expand_requirements", {{"goal", goal}}), [](const json& p) {
        RequirementsResult r;
        r.requirements = need_strings(p, "requirements");
        const json& actions = need(p, "data_actions");
        if (!actions.is_array()) throw Malformed{"'data_actions' is not an array"};
        for (const auto& a : actions) {
          auto kind = parse_node_kind(need_string(a, "kind"));
          if (!kind) throw ProviderError(ErrorCode::SchemaViolation, "unknown node kind");
          r.data_actions.push_back({*kind, need_string(a, "label")});
        }
        check_requirements(r);
        return r;
      });
}

LabelSet ExternalProvider::annotate_session_domains(const std::string& goal,
                                                    const std::vector<std::string>& requirements) {
  return call<LabelSet>("annotate_session_domains",
                        prompts_.render("annotate_session_domains",
                                        {{"goal", goal}, {"requirements", json(requirements).dump()}}),
                        [](const json& p) {
                          auto labels = need_strings(p, "labels");
                          return LabelSet(labels.begin(), labels.end());
                        });
}

std::vector<Proposal> ExternalProvider::propose_exploratory(const PrivacyGraph& graph,
                                                            std::span<const AskedQuestion> history) {
  std::string missing;
  for (NodeKind k : missing_kinds(graph)) missing += std::string(missing.empty() ? "" : ", ") + std::string(to_string(k));
  return call<std::vector<Proposal>>(
      "propose_exploratory",
      prompts_.render("propose_exploratory", {{"graph", graph_snapshot(graph).dump()},
                                              {"history", history_text(history)},
                                              {"missing_kinds", missing}}),
      [&](const json& p) {
        const json& arr = need(p, "proposals");
        if (!arr.is_array()) throw Malformed{"'proposals' is not an array"};
        std::vector<Proposal> out;
        for (const auto& item : arr) {
          Proposal prop;
          auto kind = parse_node_kind(need_string(item, "kind"));
          if (!kind) throw ProviderError(ErrorCode::SchemaViolation, "unknown node kind in proposal");
          prop.kind = *kind;
          prop.label = need_string(item, "label");
          prop.question = need_string(item, "question");
          if (item.contains("target") && item.at("target").is_string()) prop.target = item.at("target").get<std::string>();
          out.push_back(std::move(prop));
        }
        check_proposals(out, graph);
        return out;
      });
}

RenderedQuestion ExternalProvider::contextualize_question(const DecisionDef& def,
                                                          const std::vector<std::string>& values,
                                                          const Node& target, const PrivacyGraph& graph,
                                                          std::span<const AskedQuestion> history) {
  return call<RenderedQuestion>(
      "contextualize_question",
      prompts_.render("contextualize_question", {{"key", def.key.str()},
                                                 {"description", def.description},
                                                 {"values", json(values).dump()},
                                                 {"node_label", target.label},
                                                 {"node_kind", std::string(to_string(target.kind))},
                                                 {"graph", graph_snapshot(graph).dump()},
                                                 {"history", history_text(history)}}),
      [&](const json& p) {
        RenderedQuestion q;
        q.text = need_string(p, "question");
        const json& opts = need(p, "options");
        if (!opts.is_array()) throw Malformed{"'options' is not an array"};
        std::vector<std::string> echoed;
        for (const auto& o : opts) {
          echoed.push_back(need_string(o, "value"));
          q.options.push_back(need_string(o, "text"));
        }
        check_rendered_question(q, values);
        if (echoed != values) {
          throw ProviderError(ErrorCode::SchemaViolation, "options do not follow the value order");
        }
        return q;
      });
}

std::optional<std::string> ExternalProvider::follow_up(const AskedQuestion& answered,
                                                       const PrivacyGraph& graph) {
  return call<std::optional<std::string>>(
      "follow_up",
      prompts_.render("follow_up", {{"question", answered.question.text},
                                    {"answer", response_to_json(answered.response).dump()},
                                    {"graph", graph_snapshot(graph).dump()}}),
      [](const json& p) -> std::optional<std::string> {
        const json& f = need(p, "follow_up");
        if (f.is_null()) return std::nullopt;
        if (!f.is_string()) throw Malformed{"'follow_up' is not a string"};
        return f.get<std::string>();
      });
}

bool ExternalProvider::is_duplicate(const Question& candidate, std::span<const AskedQuestion> history,
                                    const PrivacyGraph& graph) {
  return call<bool>("is_duplicate",
                    prompts_.render("is_duplicate", {{"candidate", candidate.text},
                                                     {"history", history_text(history)},
                                                     {"graph", graph_snapshot(graph).dump()}}),
                    [](const json& p) {
                      const json& d = need(p, "duplicate");
                      if (!d.is_boolean()) throw Malformed{"'duplicate' is not a boolean"};
                      return d.get<bool>();
                    });
}

std::vector<std::string> ExternalProvider::summarize_issues(const Node& data_action,
                                                            const PrivacyGraph& graph) {
  json decisions = json::object();
  for (const auto& [k, v] : data_action.decisions) decisions[k.str()] = v.all_values();
  return call<std::vector<std::string>>(
      "summarize_issues",
      prompts_.render("summarize_issues", {{"node_label", data_action.label},
                                           {"decisions", decisions.dump()},
                                           {"graph", graph_snapshot(graph).dump()}}),
      [](const json& p) { return need_strings(p, "issues"); });
}

std::shared_ptr<Provider> make_provider(const ProviderConfig& config) {
  config.validate();
  if (config.backend == ProviderBackend::Stub) {
    if (config.lexicon_path.empty()) throw Error(ErrorCode::InvalidArgument, "stub provider needs a lexicon path");
    StubOptions options;
    options.seed = config.seed;
    return std::make_shared<CheckedProvider>(
        std::make_shared<StubProvider>(load_stub_lexicon(config.lexicon_path), options));
  }
  const char* token = std::getenv(config.credential_env.c_str());
  auto transport = std::make_shared<HttpTransport>(config.endpoint, token ? token : "", config.timeout);
  return std::make_shared<CheckedProvider>(
      std::make_shared<ExternalProvider>(config, transport, PromptTemplates::load(config.prompt_dir)));
}

}  // namespace elicit
