#pragma once

// Flat key-value config with [section] headers:
//
//   # comment
//   [problem]
//   d = 100
//   K = 5, 10, 20
//
// Keys are addressed as "section.key". Command-line overrides use the same
// form ("solver.max_iters=200") and replace or add entries.

#include <cstddef>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace obnc {

class Config {
 public:
  struct Entry {
    std::string value;
    std::size_t line = 0;    // 1-based; 0 for command-line overrides
    std::size_t column = 0;  // 1-based column of the value
    std::size_t offset = 0;  // byte offset of the value
  };

  /// Throws ParseError with the line and column of the offending text.
  static Config parse(const std::string& text);
  static Config load(const std::string& path);

  /// "section.key=value". Throws ParseError (line 0, column within the
  /// override) when malformed.
  void apply_override(const std::string& kv);

  bool has(const std::string& key) const { return entries_.count(key) != 0; }
  const std::map<std::string, Entry>& entries() const { return entries_; }

  // Typed getters throw ParseError at the value's position when the text
  // does not convert; the fallback is returned when the key is absent.
  std::string get_string(const std::string& key, const std::string& fallback) const;
  int get_int(const std::string& key, int fallback) const;
  std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) const;
  double get_double(const std::string& key, double fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;
  std::vector<int> get_int_list(const std::string& key, const std::vector<int>& fallback) const;
  std::vector<double> get_double_list(const std::string& key,
                                      const std::vector<double>& fallback) const;
  std::vector<std::string> get_string_list(const std::string& key,
                                           const std::vector<std::string>& fallback) const;

  /// ParseError pointing at the entry for key (or line 0 if absent).
  [[noreturn]] void fail(const std::string& key, const std::string& why) const;

 private:
  std::map<std::string, Entry> entries_;
};

}  // namespace obnc
