#include "elicit/corpus_miner.hpp"

#include "elicit/error.hpp"
#include "json_util.hpp"

#include <chrono>
#include <thread>

namespace elicit {

using namespace detail;

namespace {

json strings_schema() { return {{"type", "array"}, {"items", {{"type", "string"}}}}; }

json object_schema(json properties) {
  json required = json::array();
  for (const auto& [name, _] : properties.items()) required.push_back(name);
  return {{"type", "object"}, {"properties", std::move(properties)}, {"required", required}, {"additionalProperties", false}};
}

json schema_for(const std::string& op) {
  if (op == "mining_relevance") {
    return object_schema({{"relevant", {{"type", "boolean"}}}, {"confidence", {{"type", "number"}}}});
  }
  if (op == "mining_segment") return object_schema({{"segments", strings_schema()}});
  if (op == "mining_labels") return object_schema({{"labels", strings_schema()}});
  if (op == "mining_extract") {
    json item = object_schema({{"key", {{"type", "string"}}}, {"value", {{"type", "string"}}}});
    return object_schema({{"values", {{"type", "array"}, {"items", item}}}});
  }
  if (op == "mining_discover") {
    json item = object_schema({{"question", {{"type", "string"}}},
                               {"key", {{"type", "string"}}},
                               {"node_kind", {{"type", "string"}}},
                               {"value", {{"type", "string"}}},
                               {"description", {{"type", "string"}}}});
    return object_schema({{"keys", {{"type", "array"}, {"items", item}}}});
  }
  throw Error(ErrorCode::InvalidArgument, "unknown mining operation '" + op + "'");
}

// Malformed payloads are retried like transport failures.
struct Malformed {
  std::string message;
};

const json& need(const json& j, const char* name) {
  if (!j.is_object() || !j.contains(name)) throw Malformed{std::string("missing '") + name + "'"};
  return j.at(name);
}

std::string need_string(const json& j, const char* name) {
  const json& v = need(j, name);
  if (!v.is_string()) throw Malformed{std::string("'") + name + "' is not a string"};
  return v.get<std::string>();
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

const json& need_array(const json& j, const char* name) {
  const json& v = need(j, name);
  if (!v.is_array()) throw Malformed{std::string("'") + name + "' is not an array"};
  return v;
}

}  // namespace

ExternalAnnotator::ExternalAnnotator(ProviderConfig config, std::shared_ptr<ChatTransport> transport,
                                     PromptTemplates prompts, LabelSet vocabulary)
    : config_(std::move(config)), transport_(std::move(transport)), prompts_(std::move(prompts)),
      vocabulary_(std::move(vocabulary)) {
  config_.validate();
}

json ExternalAnnotator::call(const std::string& operation, const std::string& prompt) {
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
  const ChatRequest request{body.dump()};
  std::string problem;
  for (int attempt = 0; attempt <= config_.max_retries; ++attempt) {
    if (attempt > 0) std::this_thread::sleep_for(config_.backoff * (1 << (attempt - 1)));
    try {
      ChatResponse response = transport_->send(request);
      if (response.status < 200 || response.status >= 300) {
        problem = "HTTP status " + std::to_string(response.status);
        continue;
      }
      json payload = json::parse(extract_message_content(response.body), nullptr, false);
      if (payload.is_discarded() || !payload.is_object()) {
        problem = "content is not a JSON object";
        continue;
      }
      return payload;
    } catch (const ProviderError& e) {
      problem = e.what();
    }
  }
  throw Error(ErrorCode::AnnotatorFailure,
              operation + " failed after " + std::to_string(config_.max_retries + 1) + " attempts: " + problem);
}

namespace {

// Runs `parse` on the payload; malformed payloads become AnnotatorFailure.
template <class F>
auto parsed(const std::string& operation, const json& payload, F&& parse) {
  try {
    return parse(payload);
  } catch (const Malformed& m) {
    throw Error(ErrorCode::AnnotatorFailure, operation + ": " + m.message);
  }
}

}  // namespace

Relevance ExternalAnnotator::is_privacy_design_relevant(const Document& doc) {
  const std::string op = "mining_relevance";
  json p = call(op, prompts_.render(op, {{"title", doc.title}, {"body", doc.body}}));
  return parsed(op, p, [](const json& j) {
    const json& r = need(j, "relevant");
    const json& c = need(j, "confidence");
    if (!r.is_boolean() || !c.is_number()) throw Malformed{"relevance has the wrong types"};
    return Relevance{r.get<bool>(), c.get<double>()};
  });
}

std::vector<std::string> ExternalAnnotator::segment_practices(const Document& doc) {
  const std::string op = "mining_segment";
  json p = call(op, prompts_.render(op, {{"title", doc.title}, {"body", doc.body}}));
  return parsed(op, p, [](const json& j) { return need_strings(j, "segments"); });
}

LabelSet ExternalAnnotator::label_domains(const std::string& segment) {
  const std::string op = "mining_labels";
  json vocab(std::vector<std::string>(vocabulary_.begin(), vocabulary_.end()));
  json p = call(op, prompts_.render(op, {{"segment", segment}, {"labels", vocab.dump()}}));
  return parsed(op, p, [](const json& j) {
    auto labels = need_strings(j, "labels");
    return LabelSet(labels.begin(), labels.end());
  });
}

std::vector<ValueExtraction> ExternalAnnotator::extract_known_values(const std::string& segment,
                                                                     const std::vector<DecisionDef>& known) {
  const std::string op = "mining_extract";
  json keys = json::array();
  for (const auto& d : known) {
    json values = json::array();
    for (const auto& [labels, opts] : d.value_sets) {
      for (const auto& o : opts) values.push_back(o);
    }
    keys.push_back({{"key", d.key.str()}, {"node_kind", to_string(d.node_kind)}, {"description", d.description},
                    {"values", values}});
  }
  json p = call(op, prompts_.render(op, {{"segment", segment}, {"keys", keys.dump()}}));
  return parsed(op, p, [](const json& j) {
    std::vector<ValueExtraction> out;
    for (const auto& item : need_array(j, "values")) out.push_back({need_string(item, "key"), need_string(item, "value")});
    return out;
  });
}

std::vector<KeyDiscovery> ExternalAnnotator::discover_new_keys(const std::string& segment,
                                                               const std::set<KindedKey>& excluded) {
  const std::string op = "mining_discover";
  json pairs = json::array();
  for (const auto& [key, kind] : excluded) pairs.push_back({key.str(), to_string(kind)});
  json p = call(op, prompts_.render(op, {{"segment", segment}, {"excluded", pairs.dump()}}));
  return parsed(op, p, [](const json& j) {
    std::vector<KeyDiscovery> out;
    for (const auto& item : need_array(j, "keys")) {
      out.push_back({need_string(item, "key"), need_string(item, "node_kind"), need_string(item, "value"),
                     need_string(item, "description")});
    }
    return out;
  });
}

}  // namespace elicit
