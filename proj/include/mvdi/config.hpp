#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

namespace mvdi {

/// Flat `key = value` text; `#` starts a comment. Dotted prefixes
/// (`train.iters`) act as sections. Unknown keys are reported by the consumer.
class ConfigMap {
 public:
  static ConfigMap parse(const std::string& text, const std::string& origin = "<config>");
  static ConfigMap load(const std::string& path);

  bool has(const std::string& key) const { return values_.count(key) != 0; }
  void set(const std::string& key, std::string value) { values_[key] = std::move(value); }

  std::optional<std::string> get(const std::string& key) const;
  std::string get_string(const std::string& key, const std::string& fallback) const;
  int get_int(const std::string& key, int fallback) const;
  double get_double(const std::string& key, double fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;
  std::vector<int> get_int_list(const std::string& key, const std::vector<int>& fallback) const;
  std::vector<double> get_double_list(const std::string& key,
                                      const std::vector<double>& fallback) const;
  std::vector<std::string> get_string_list(const std::string& key) const;

  const std::map<std::string, std::string>& values() const { return values_; }
  /// Canonical text: one `key = value` line per key, sorted.
  std::string to_text() const;

 private:
  std::map<std::string, std::string> values_;
};

std::string format_double(double v);

}  // namespace mvdi
