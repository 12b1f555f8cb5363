#include <cctype>
#include <charconv>
#include <fstream>
#include <sstream>

#include "defog/bench.hpp"
#include "defog/error.hpp"

namespace defog {

namespace {

std::string trim(const std::string& s) {
  std::size_t a = 0, b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return s.substr(a, b - a);
}

bool valid_name(const std::string& s) {
  if (s.empty()) return false;
  for (char c : s)
    if (!std::isalnum(static_cast<unsigned char>(c)) && c != '_' && c != '-' && c != '.') return false;
  return true;
}

}  // namespace

Config Config::parse(const std::string& text) {
  Config cfg;
  std::istringstream in(text);
  std::string raw;
  std::string section;
  int line = 0;
  auto fail = [&](const std::string& msg) { throw ConfigError("line " + std::to_string(line) + ": " + msg); };
  while (std::getline(in, raw)) {
    ++line;
    const auto cut = raw.find_first_of("#;");
    std::string s = trim(cut == std::string::npos ? raw : raw.substr(0, cut));
    if (s.empty()) continue;
    if (s.front() == '[') {
      if (s.back() != ']') fail("unterminated section header '" + s + "'");
      section = trim(s.substr(1, s.size() - 2));
      if (!valid_name(section)) fail("invalid section name '" + section + "'");
      cfg.data_[section];
      continue;
    }
    const auto eq = s.find('=');
    if (eq == std::string::npos) fail("expected 'key = value', got '" + s + "'");
    const std::string key = trim(s.substr(0, eq));
    const std::string value = trim(s.substr(eq + 1));
    if (!valid_name(key)) fail("invalid key '" + key + "'");
    if (value.empty()) fail("missing value for '" + key + "'");
    auto& lines = cfg.lines_[section];
    if (lines.count(key))
      fail("duplicate key '" + key + "' (first set on line " + std::to_string(lines[key]) + ")");
    lines[key] = line;
    cfg.data_[section][key] = value;
  }
  return cfg;
}

Config Config::load(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open config file '" + path + "'");
  std::stringstream ss;
  ss << f.rdbuf();
  return parse(ss.str());
}

bool Config::has(const std::string& section, const std::string& key) const {
  auto s = data_.find(section);
  return s != data_.end() && s->second.count(key);
}

std::string Config::get(const std::string& section, const std::string& key, const std::string& fallback) const {
  auto s = data_.find(section);
  if (s == data_.end()) return fallback;
  auto k = s->second.find(key);
  return k == s->second.end() ? fallback : k->second;
}

namespace {

std::string where(const std::map<std::string, std::map<std::string, int>>& lines, const std::string& section,
                  const std::string& key) {
  auto s = lines.find(section);
  if (s != lines.end()) {
    auto k = s->second.find(key);
    if (k != s->second.end()) return "line " + std::to_string(k->second) + ": ";
  }
  return "";
}

}  // namespace

double Config::get_double(const std::string& section, const std::string& key, double fallback) const {
  if (!has(section, key)) return fallback;
  const std::string v = get(section, key, "");
  double out = 0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size())
    throw ConfigError(where(lines_, section, key) + "'" + key + "' expects a number, got '" + v + "'");
  return out;
}

long long Config::get_int(const std::string& section, const std::string& key, long long fallback) const {
  if (!has(section, key)) return fallback;
  const std::string v = get(section, key, "");
  long long out = 0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size())
    throw ConfigError(where(lines_, section, key) + "'" + key + "' expects an integer, got '" + v + "'");
  return out;
}

bool Config::get_bool(const std::string& section, const std::string& key, bool fallback) const {
  if (!has(section, key)) return fallback;
  const std::string v = get(section, key, "");
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw ConfigError(where(lines_, section, key) + "'" + key + "' expects true or false, got '" + v + "'");
}

void Config::set(const std::string& section, const std::string& key, const std::string& value) {
  data_[section][key] = value;
}

}  // namespace defog
