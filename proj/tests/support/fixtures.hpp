#pragma once

#include "elicit/design_space.hpp"
#include "elicit/provider.hpp"

#include <fstream>
#include <memory>
#include <sstream>
#include <string>

namespace elicit::testing {

inline std::string data_path(const std::string& name) { return std::string(ELICIT_DATA_DIR) + "/" + name; }
inline std::string fixture_path(const std::string& name) {
  return std::string(ELICIT_FIXTURE_DIR) + "/" + name;
}

inline std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

inline const StubLexicon& lexicon() {
  static const StubLexicon lex = load_stub_lexicon(data_path("stub_lexicon.json"));
  return lex;
}

inline std::shared_ptr<StubProvider> stub(std::uint64_t seed = 0, StubOptions options = {}) {
  options.seed = seed;
  return std::make_shared<StubProvider>(lexicon(), options);
}

inline std::shared_ptr<Provider> checked_stub(std::uint64_t seed = 0, StubOptions options = {}) {
  return std::make_shared<CheckedProvider>(stub(seed, std::move(options)));
}

inline const DesignSpace& seed_space() {
  static const DesignSpace space = load_design_space(data_path("seed_design_space.json"));
  return space;
}

inline constexpr const char* kZoomGoal =
    "Design an attendee attention tracking feature for a video conferencing application";

}  // namespace elicit::testing
