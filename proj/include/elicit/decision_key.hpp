#pragma once

#include <compare>
#include <functional>
#include <string>
#include <string_view>

namespace elicit {

/// Canonical snake_case identifier of a design decision (e.g. consent_mode).
/// Only constructible from text that is already canonical, or through
/// canonicalize_key().
class DecisionKey {
 public:
  DecisionKey() = default;

  /// Throws Error{InvalidArgument} unless `canonical` is already canonical.
  static DecisionKey from_canonical(std::string_view canonical);

  const std::string& str() const noexcept { return value_; }
  bool empty() const noexcept { return value_.empty(); }

  friend auto operator<=>(const DecisionKey&, const DecisionKey&) = default;
  friend bool operator==(const DecisionKey&, const DecisionKey&) = default;

 private:
  explicit DecisionKey(std::string value) : value_(std::move(value)) {}
  friend DecisionKey canonicalize_key(std::string_view raw);

  std::string value_;
};

/// Lowercases, collapses every run of non-alphanumeric characters into a single
/// underscore and trims leading/trailing underscores. Idempotent.
/// Throws Error{EmptyAfterCanonicalization} when nothing remains.
DecisionKey canonicalize_key(std::string_view raw);

bool is_canonical_key(std::string_view text);

}  // namespace elicit

template <>
struct std::hash<elicit::DecisionKey> {
  std::size_t operator()(const elicit::DecisionKey& key) const noexcept {
    return std::hash<std::string>{}(key.str());
  }
};
