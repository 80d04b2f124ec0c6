#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace stayers {

/// Flat `key = value` configuration with `#` comments. Keys are dotted
/// (`dgp.theta`, `bootstrap.draws`). Typed getters record which keys were
/// read so that typos surface as errors instead of silently using defaults.
class KeyValues {
 public:
  static KeyValues parse(std::istream& in, const std::string& source = "<config>");
  static KeyValues load(const std::string& path);

  void set(const std::string& key, const std::string& value);
  [[nodiscard]] bool has(const std::string& key) const;
  [[nodiscard]] std::optional<std::string> find(const std::string& key) const;

  [[nodiscard]] std::string get_string(const std::string& key, const std::string& fallback) const;
  [[nodiscard]] double get_double(const std::string& key, double fallback) const;
  [[nodiscard]] std::int64_t get_int(const std::string& key, std::int64_t fallback) const;
  [[nodiscard]] std::uint64_t get_uint(const std::string& key, std::uint64_t fallback) const;
  [[nodiscard]] bool get_bool(const std::string& key, bool fallback) const;
  /// Comma-separated list of numbers.
  [[nodiscard]] std::vector<double> get_doubles(const std::string& key,
                                                std::vector<double> fallback) const;
  [[nodiscard]] std::vector<std::string> get_strings(const std::string& key,
                                                     std::vector<std::string> fallback) const;

  /// Throws ConfigError naming every key that no getter has read.
  void require_all_used() const;

  /// Canonical text: sorted `key = value` lines.
  [[nodiscard]] std::string dump() const;
  [[nodiscard]] const std::map<std::string, std::string>& entries() const { return values_; }

 private:
  std::map<std::string, std::string> values_;
  mutable std::set<std::string> used_;
};

/// Shortest text that parses back to the same double.
[[nodiscard]] std::string format_double(double v);

}  // namespace stayers
