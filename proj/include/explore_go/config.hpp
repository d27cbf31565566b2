// Plain-text `key = value` configuration files. Lines starting with '#' are
// comments. Keys are dotted (`ppo.gamma`). Every key present in a file must
// be consumed by some loader; leftovers are reported by check_all_consumed().
#pragma once

#include "explore_go/env.hpp"

#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace explore_go {

class KeyValueConfig {
 public:
  KeyValueConfig() = default;

  static KeyValueConfig parse(const std::string& text, const std::string& origin = "<string>");
  static KeyValueConfig load(const std::filesystem::path& path);

  bool has(const std::string& key) const { return values_.count(key) != 0; }
  void set(const std::string& key, std::string value) { values_[key] = std::move(value); }

  std::optional<std::string> raw(const std::string& key) const;

  std::string get_string(const std::string& key, const std::string& fallback) const;
  double get_double(const std::string& key, double fallback) const;
  long get_long(const std::string& key, long fallback) const;
  int get_int(const std::string& key, int fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;

  // Whitespace- or comma-separated list of reals.
  std::vector<double> get_doubles(const std::string& key) const;

  // Keys sharing `prefix.`, in lexical order.
  std::vector<std::string> keys_with_prefix(const std::string& prefix) const;

  void check_all_consumed() const;

 private:
  std::string origin_ = "<empty>";
  std::map<std::string, std::string> values_;
  mutable std::set<std::string> consumed_;
};

}  // namespace explore_go
