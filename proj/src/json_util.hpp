#pragma once

// Field accessors shared by the JSON codecs. Every failure is a ParseError.

#include "elicit/decision_key.hpp"
#include "elicit/error.hpp"

#include <nlohmann/json.hpp>

#include <string>
#include <vector>

namespace elicit::detail {

using json = nlohmann::json;

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

[[noreturn]] inline void parse_fail(const std::string& message) {
  throw Error(ErrorCode::ParseError, message);
}

inline const json& field(const json& j, const char* name) {
  if (!j.is_object() || !j.contains(name)) parse_fail(std::string("missing field '") + name + "'");
  return j.at(name);
}

inline std::string string_field(const json& j, const char* name) {
  const json& v = field(j, name);
  if (!v.is_string()) parse_fail(std::string("field '") + name + "' must be a string");
  return v.get<std::string>();
}

inline std::string string_or(const json& j, const char* name, std::string fallback) {
  if (!j.is_object() || !j.contains(name) || j.at(name).is_null()) return fallback;
  return string_field(j, name);
}

inline std::vector<std::string> string_list(const json& j, const char* name) {
  const json& v = field(j, name);
  if (!v.is_array()) parse_fail(std::string("field '") + name + "' must be an array");
  std::vector<std::string> out;
  for (const auto& s : v) {
    if (!s.is_string()) parse_fail(std::string("field '") + name + "' must hold strings");
    out.push_back(s.get<std::string>());
  }
  return out;
}

inline DecisionKey key_field(const json& j, const char* name) {
  try {
    return DecisionKey::from_canonical(string_field(j, name));
  } catch (const Error& e) {
    parse_fail(e.what());
  }
}

inline json parse_json(std::string_view text, const char* what) {
  try {
    return json::parse(text);
  } catch (const json::exception& e) {
    parse_fail(std::string(what) + ": " + e.what());
  }
}

}  // namespace elicit::detail
