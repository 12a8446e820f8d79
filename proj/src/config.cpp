#include "obnc/config.hpp"

#include <cctype>
#include <charconv>
#include <fstream>
#include <sstream>

#include "obnc/errors.hpp"

namespace obnc {
namespace {

bool is_space(char c) { return c == ' ' || c == '\t' || c == '\r'; }

// [b, e) trimmed of blanks.
void trim(const std::string& s, std::size_t& b, std::size_t& e) {
  while (b < e && is_space(s[b])) ++b;
  while (e > b && is_space(s[e - 1])) --e;
}

bool valid_key(const std::string& k) {
  if (k.empty()) return false;
  for (char c : k)
    if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '.' || c == '-'))
      return false;
  return true;
}

std::vector<std::string> split_list(const std::string& v) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (;;) {
    const std::size_t comma = v.find(',', start);
    std::size_t b = start, e = comma == std::string::npos ? v.size() : comma;
    trim(v, b, e);
    out.push_back(v.substr(b, e - b));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return out;
}

template <typename T>
bool convert(const std::string& s, T& out) {
  const char* first = s.data();
  const char* last = s.data() + s.size();
  if (first != last && *first == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, last, out);
  return ec == std::errc() && ptr == last && first != last;
}

}  // namespace

Config Config::parse(const std::string& text) {
  Config cfg;
  std::string section;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    std::size_t eol = text.find('\n', pos);
    if (eol == std::string::npos) eol = text.size();
    ++line_no;
    std::size_t b = pos, e = eol;
    const std::size_t hash = text.find('#', b);
    if (hash != std::string::npos && hash < e) e = hash;
    trim(text, b, e);
    auto fail_at = [&](std::size_t at, const std::string& why) {
      throw ParseError(why, line_no, at - pos + 1, at);
    };

    if (b < e) {
      if (text[b] == '[') {
        if (text[e - 1] != ']') fail_at(e, "expected ']' to close the section header");
        std::size_t sb = b + 1, se = e - 1;
        trim(text, sb, se);
        section = text.substr(sb, se - sb);
        if (!valid_key(section)) fail_at(sb, "invalid section name '" + section + "'");
      } else {
        const std::size_t eq = text.find('=', b);
        if (eq == std::string::npos || eq >= e) fail_at(b, "expected 'key = value'");
        std::size_t kb = b, ke = eq;
        trim(text, kb, ke);
        const std::string key = text.substr(kb, ke - kb);
        if (!valid_key(key)) fail_at(kb, "invalid key '" + key + "'");
        std::size_t vb = eq + 1, ve = e;
        trim(text, vb, ve);
        if (vb == ve) fail_at(eq + 1, "missing value for '" + key + "'");
        const std::string full = section.empty() ? key : section + "." + key;
        if (cfg.entries_.count(full)) fail_at(kb, "duplicate key '" + full + "'");
        cfg.entries_[full] = Entry{text.substr(vb, ve - vb), line_no, vb - pos + 1, vb};
      }
    }
    if (eol == text.size()) break;
    pos = eol + 1;
  }
  return cfg;
}

Config Config::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open config file '" + path + "'", 0, 0, 0);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

void Config::apply_override(const std::string& kv) {
  const std::size_t eq = kv.find('=');
  if (eq == std::string::npos)
    throw ParseError("override '" + kv + "' is not key=value", 0, 1, 0);
  std::size_t kb = 0, ke = eq, vb = eq + 1, ve = kv.size();
  trim(kv, kb, ke);
  trim(kv, vb, ve);
  const std::string key = kv.substr(kb, ke - kb);
  if (!valid_key(key)) throw ParseError("invalid override key '" + key + "'", 0, kb + 1, kb);
  if (vb == ve) throw ParseError("missing value in override '" + kv + "'", 0, eq + 2, eq + 1);
  entries_[key] = Entry{kv.substr(vb, ve - vb), 0, vb + 1, vb};
}

void Config::fail(const std::string& key, const std::string& why) const {
  const auto it = entries_.find(key);
  if (it == entries_.end()) throw ParseError(key + ": " + why, 0, 0, 0);
  throw ParseError(key + ": " + why, it->second.line, it->second.column, it->second.offset);
}

std::string Config::get_string(const std::string& key, const std::string& fallback) const {
  const auto it = entries_.find(key);
  return it == entries_.end() ? fallback : it->second.value;
}

int Config::get_int(const std::string& key, int fallback) const {
  const auto it = entries_.find(key);
  if (it == entries_.end()) return fallback;
  int v = 0;
  if (!convert(it->second.value, v)) fail(key, "expected an integer, got '" + it->second.value + "'");
  return v;
}

std::uint64_t Config::get_u64(const std::string& key, std::uint64_t fallback) const {
  const auto it = entries_.find(key);
  if (it == entries_.end()) return fallback;
  std::uint64_t v = 0;
  if (!convert(it->second.value, v))
    fail(key, "expected an unsigned integer, got '" + it->second.value + "'");
  return v;
}

double Config::get_double(const std::string& key, double fallback) const {
  const auto it = entries_.find(key);
  if (it == entries_.end()) return fallback;
  double v = 0;
  if (!convert(it->second.value, v)) fail(key, "expected a number, got '" + it->second.value + "'");
  return v;
}

bool Config::get_bool(const std::string& key, bool fallback) const {
  const auto it = entries_.find(key);
  if (it == entries_.end()) return fallback;
  const std::string& v = it->second.value;
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  fail(key, "expected true/false, got '" + v + "'");
}

std::vector<int> Config::get_int_list(const std::string& key,
                                      const std::vector<int>& fallback) const {
  const auto it = entries_.find(key);
  if (it == entries_.end()) return fallback;
  std::vector<int> out;
  for (const std::string& item : split_list(it->second.value)) {
    int v = 0;
    if (!convert(item, v)) fail(key, "expected a list of integers, got '" + item + "'");
    out.push_back(v);
  }
  return out;
}

std::vector<double> Config::get_double_list(const std::string& key,
                                            const std::vector<double>& fallback) const {
  const auto it = entries_.find(key);
  if (it == entries_.end()) return fallback;
  std::vector<double> out;
  for (const std::string& item : split_list(it->second.value)) {
    double v = 0;
    if (!convert(item, v)) fail(key, "expected a list of numbers, got '" + item + "'");
    out.push_back(v);
  }
  return out;
}

std::vector<std::string> Config::get_string_list(
    const std::string& key, const std::vector<std::string>& fallback) const {
  const auto it = entries_.find(key);
  if (it == entries_.end()) return fallback;
  std::vector<std::string> out = split_list(it->second.value);
  for (const std::string& item : out)
    if (item.empty()) fail(key, "empty list item");
  return out;
}

}  // namespace obnc
