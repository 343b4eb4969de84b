// SPDX-License-Identifier: Apache-2.0
#include "rmies/config.hpp"

#include "rmies/io.hpp"

#include <cerrno>
#include <cstdlib>
#include <sstream>

namespace rmies {
namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace

double parse_number(const std::string& text, const std::string& context) {
  const std::string t = trim(text);
  errno = 0;
  char* end = nullptr;
  const double v = std::strtod(t.c_str(), &end);
  if (t.empty() || end != t.c_str() + t.size() || errno == ERANGE) {
    throw ParseError(context + ": expected a number, got '" + t + "'");
  }
  return v;
}

std::vector<double> parse_number_list(const std::string& text, const std::string& context) {
  std::string s = text;
  for (char& c : s) {
    if (c == ',') c = ' ';
  }
  std::istringstream in(s);
  std::vector<double> out;
  std::string tok;
  while (in >> tok) out.push_back(parse_number(tok, context));
  return out;
}

std::optional<std::string> KeyValueConfig::Section::find(const std::string& key) const {
  std::optional<std::string> found;
  for (const auto& [k, v] : entries) {
    if (k == key) found = v;
  }
  return found;
}

std::vector<std::string> KeyValueConfig::Section::all(const std::string& key) const {
  std::vector<std::string> out;
  for (const auto& [k, v] : entries) {
    if (k == key) out.push_back(v);
  }
  return out;
}

KeyValueConfig KeyValueConfig::parse(const std::string& text, const std::string& origin) {
  KeyValueConfig cfg;
  cfg.sections_.push_back(Section{"", {}});
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const std::string where = origin + ":" + std::to_string(lineno);
    if (line.front() == '[') {
      if (line.back() != ']') throw ParseError(where + ": unterminated section header");
      cfg.sections_.push_back(Section{trim(line.substr(1, line.size() - 2)), {}});
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ParseError(where + ": expected 'key = value'");
    const std::string key = trim(line.substr(0, eq));
    if (key.empty()) throw ParseError(where + ": empty key");
    cfg.sections_.back().entries.emplace_back(key, trim(line.substr(eq + 1)));
  }
  if (auto schema = cfg.get("", "schema")) {
    if (parse_number(*schema, origin + ": schema") != kSchemaVersion) {
      throw ConfigError(origin + ": unsupported config schema " + *schema);
    }
  }
  return cfg;
}

KeyValueConfig KeyValueConfig::load(const std::filesystem::path& path) {
  return parse(io::read_text_file(path), path.string());
}

const KeyValueConfig::Section* KeyValueConfig::section(const std::string& name) const {
  for (const auto& s : sections_) {
    if (s.name == name) return &s;
  }
  return nullptr;
}

std::optional<std::string> KeyValueConfig::get(const std::string& sec, const std::string& key) const {
  const Section* s = section(sec);
  return s ? s->find(key) : std::nullopt;
}

double KeyValueConfig::get_double(const std::string& sec, const std::string& key, double fallback) const {
  const auto v = get(sec, key);
  return v ? parse_number(*v, sec + "." + key) : fallback;
}

long long KeyValueConfig::get_int(const std::string& sec, const std::string& key, long long fallback) const {
  const auto v = get(sec, key);
  if (!v) return fallback;
  const double d = parse_number(*v, sec + "." + key);
  if (d != static_cast<double>(static_cast<long long>(d))) {
    throw ConfigError(sec + "." + key + ": expected an integer, got '" + *v + "'");
  }
  return static_cast<long long>(d);
}

bool KeyValueConfig::get_bool(const std::string& sec, const std::string& key, bool fallback) const {
  const auto v = get(sec, key);
  if (!v) return fallback;
  if (*v == "true" || *v == "1" || *v == "on" || *v == "yes") return true;
  if (*v == "false" || *v == "0" || *v == "off" || *v == "no") return false;
  throw ConfigError(sec + "." + key + ": expected a boolean, got '" + *v + "'");
}

std::vector<double> KeyValueConfig::get_list(const std::string& sec, const std::string& key,
                                             std::vector<double> fallback) const {
  const auto v = get(sec, key);
  return v ? parse_number_list(*v, sec + "." + key) : fallback;
}

KeyValueConfig::Section& KeyValueConfig::ensure(const std::string& name) {
  for (auto& s : sections_) {
    if (s.name == name) return s;
  }
  sections_.push_back(Section{name, {}});
  return sections_.back();
}

void KeyValueConfig::set(const std::string& sec, const std::string& key, const std::string& value) {
  Section& s = ensure(sec);
  for (auto& [k, v] : s.entries) {
    if (k == key) {
      v = value;
      return;
    }
  }
  s.entries.emplace_back(key, value);
}

std::string KeyValueConfig::dump() const {
  std::string out;
  for (const auto& s : sections_) {
    if (s.name.empty() && s.entries.empty()) continue;
    if (!s.name.empty()) out += "[" + s.name + "]\n";
    for (const auto& [k, v] : s.entries) out += k + " = " + v + "\n";
  }
  return out;
}

}  // namespace rmies
