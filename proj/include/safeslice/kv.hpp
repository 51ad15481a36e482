#pragma once

// Line-oriented key-value files shared by experiment configs, scenario files
// and data-generation plans:
//
//   # comment
//   key = value
//
// Keys are dotted identifiers, values run to end of line (trimmed). A later
// assignment of the same key replaces the earlier one.

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace safeslice {

class KeyValueFile {
 public:
  KeyValueFile() = default;

  static KeyValueFile parse(std::string_view text, std::string_view source = "<memory>");
  static KeyValueFile load(const std::filesystem::path& path);

  /// Applies a `key=value` override; throws ParseError when '=' is missing.
  void apply_override(std::string_view assignment);

  void set(const std::string& key, std::string value);
  bool contains(const std::string& key) const { return entries_.count(key) != 0; }
  std::optional<std::string> get(const std::string& key) const;

  std::string get_string(const std::string& key, const std::string& fallback) const;
  double get_double(const std::string& key, double fallback) const;
  std::int64_t get_int(const std::string& key, std::int64_t fallback) const;
  std::uint64_t get_uint(const std::string& key, std::uint64_t fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;
  std::vector<double> get_doubles(const std::string& key, const std::vector<double>& fallback) const;
  std::vector<std::string> get_strings(const std::string& key, const std::vector<std::string>& fallback) const;

  /// Keys starting with `prefix`, in lexicographic order.
  std::vector<std::string> keys_with_prefix(std::string_view prefix) const;

  const std::map<std::string, std::string>& entries() const { return entries_; }
  std::string dump() const;

  bool operator==(const KeyValueFile&) const = default;

 private:
  std::map<std::string, std::string> entries_;
};

/// Shortest round-trippable decimal form of `v`.
std::string format_double(double v);

std::string trim(std::string_view s);
std::vector<std::string> split(std::string_view s, char sep);

}  // namespace safeslice
