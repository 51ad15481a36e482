#include "safeslice/kv.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "safeslice/errors.hpp"

namespace safeslice {

std::string trim(std::string_view s) {
  auto begin = s.find_first_not_of(" \t\r\n");
  if (begin == std::string_view::npos) return {};
  auto end = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(begin, end - begin + 1));
}

std::vector<std::string> split(std::string_view s, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    auto pos = s.find(sep, start);
    out.push_back(trim(s.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

KeyValueFile KeyValueFile::parse(std::string_view text, std::string_view source) {
  KeyValueFile kv;
  std::size_t line_no = 0;
  std::size_t start = 0;
  while (start <= text.size()) {
    auto end = text.find('\n', start);
    auto raw = text.substr(start, end == std::string_view::npos ? std::string_view::npos : end - start);
    ++line_no;
    auto line = trim(raw);
    if (!line.empty() && line.front() != '#') {
      auto eq = line.find('=');
      if (eq == std::string::npos) {
        throw ParseError(std::string(source) + ":" + std::to_string(line_no) + ": expected 'key = value'");
      }
      auto key = trim(std::string_view(line).substr(0, eq));
      if (key.empty()) {
        throw ParseError(std::string(source) + ":" + std::to_string(line_no) + ": empty key");
      }
      kv.entries_[key] = trim(std::string_view(line).substr(eq + 1));
    }
    if (end == std::string_view::npos) break;
    start = end + 1;
  }
  return kv;
}

KeyValueFile KeyValueFile::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str(), path.string());
}

void KeyValueFile::apply_override(std::string_view assignment) {
  auto eq = assignment.find('=');
  if (eq == std::string_view::npos) throw ParseError("override '" + std::string(assignment) + "' is not key=value");
  auto key = trim(assignment.substr(0, eq));
  if (key.empty()) throw ParseError("override '" + std::string(assignment) + "' has an empty key");
  entries_[key] = trim(assignment.substr(eq + 1));
}

void KeyValueFile::set(const std::string& key, std::string value) { entries_[key] = std::move(value); }

std::optional<std::string> KeyValueFile::get(const std::string& key) const {
  auto it = entries_.find(key);
  if (it == entries_.end()) return std::nullopt;
  return it->second;
}

std::string KeyValueFile::get_string(const std::string& key, const std::string& fallback) const {
  return get(key).value_or(fallback);
}

namespace {

template <typename T>
T parse_number(const std::string& key, const std::string& value) {
  T out{};
  auto res = std::from_chars(value.data(), value.data() + value.size(), out);
  if (res.ec != std::errc{} || res.ptr != value.data() + value.size()) {
    throw ParseError("key '" + key + "': cannot parse '" + value + "' as a number");
  }
  return out;
}

}  // namespace

double KeyValueFile::get_double(const std::string& key, double fallback) const {
  auto v = get(key);
  return v ? parse_number<double>(key, *v) : fallback;
}

std::int64_t KeyValueFile::get_int(const std::string& key, std::int64_t fallback) const {
  auto v = get(key);
  return v ? parse_number<std::int64_t>(key, *v) : fallback;
}

std::uint64_t KeyValueFile::get_uint(const std::string& key, std::uint64_t fallback) const {
  auto v = get(key);
  return v ? parse_number<std::uint64_t>(key, *v) : fallback;
}

bool KeyValueFile::get_bool(const std::string& key, bool fallback) const {
  auto v = get(key);
  if (!v) return fallback;
  if (*v == "true" || *v == "1" || *v == "yes") return true;
  if (*v == "false" || *v == "0" || *v == "no") return false;
  throw ParseError("key '" + key + "': expected a boolean, got '" + *v + "'");
}

std::vector<double> KeyValueFile::get_doubles(const std::string& key, const std::vector<double>& fallback) const {
  auto v = get(key);
  if (!v) return fallback;
  std::vector<double> out;
  for (const auto& item : split(*v, ',')) out.push_back(parse_number<double>(key, item));
  return out;
}

std::vector<std::string> KeyValueFile::get_strings(const std::string& key,
                                                   const std::vector<std::string>& fallback) const {
  auto v = get(key);
  if (!v) return fallback;
  if (v->empty()) return {};
  return split(*v, ',');
}

std::vector<std::string> KeyValueFile::keys_with_prefix(std::string_view prefix) const {
  std::vector<std::string> out;
  for (auto it = entries_.lower_bound(std::string(prefix)); it != entries_.end(); ++it) {
    if (it->first.compare(0, prefix.size(), prefix) != 0) break;
    out.push_back(it->first);
  }
  return out;
}

std::string KeyValueFile::dump() const {
  std::string out;
  for (const auto& [k, v] : entries_) {
    out += k;
    out += " = ";
    out += v;
    out += '\n';
  }
  return out;
}

}  // namespace safeslice
