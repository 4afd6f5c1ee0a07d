#include "tscm/textconfig.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

namespace tscm {

namespace {

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

}  // namespace

long parse_long(const std::string& text, const std::string& what) {
  long value = 0;
  const char* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (ec != std::errc() || ptr != end) throw ConfigError(what + ": expected an integer, got '" + text + "'");
  return value;
}

double parse_double(const std::string& text, const std::string& what) {
  try {
    std::size_t used = 0;
    const double v = std::stod(text, &used);
    if (used != text.size()) throw ConfigError(what + ": trailing characters in '" + text + "'");
    return v;
  } catch (const std::logic_error&) {
    throw ConfigError(what + ": expected a number, got '" + text + "'");
  }
}

std::string ConfigSection::get(const std::string& key) const {
  auto it = values.find(key);
  if (it == values.end()) {
    throw ConfigError("section [" + kind + (label.empty() ? "" : " " + label) + "] (line " + std::to_string(line) +
                      ") is missing key '" + key + "'");
  }
  return it->second;
}

std::string ConfigSection::get_or(const std::string& key, const std::string& fallback) const {
  auto it = values.find(key);
  return it == values.end() ? fallback : it->second;
}

long ConfigSection::get_int(const std::string& key) const { return parse_long(get(key), kind + "." + key); }

long ConfigSection::get_int_or(const std::string& key, long fallback) const {
  return has(key) ? get_int(key) : fallback;
}

double ConfigSection::get_double(const std::string& key) const { return parse_double(get(key), kind + "." + key); }

double ConfigSection::get_double_or(const std::string& key, double fallback) const {
  return has(key) ? get_double(key) : fallback;
}

std::vector<const ConfigSection*> ConfigDocument::all(const std::string& kind) const {
  std::vector<const ConfigSection*> out;
  for (const auto& s : sections) {
    if (s.kind == kind) out.push_back(&s);
  }
  return out;
}

const ConfigSection* ConfigDocument::first(const std::string& kind) const {
  for (const auto& s : sections) {
    if (s.kind == kind) return &s;
  }
  return nullptr;
}

ConfigDocument parse_config(const std::string& text) {
  ConfigDocument doc;
  std::istringstream in(text);
  std::string raw;
  int line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    const auto hash = raw.find('#');
    const std::string line = trim(hash == std::string::npos ? raw : raw.substr(0, hash));
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError("line " + std::to_string(line_no) + ": unterminated section header");
      const std::string header = trim(line.substr(1, line.size() - 2));
      if (header.empty()) throw ConfigError("line " + std::to_string(line_no) + ": empty section header");
      ConfigSection section;
      const auto space = header.find_first_of(" \t");
      section.kind = header.substr(0, space);
      section.label = space == std::string::npos ? "" : trim(header.substr(space));
      section.line = line_no;
      doc.sections.push_back(std::move(section));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("line " + std::to_string(line_no) + ": expected 'key = value'");
    const std::string key = trim(line.substr(0, eq));
    if (key.empty()) throw ConfigError("line " + std::to_string(line_no) + ": empty key");
    if (doc.sections.empty()) doc.sections.push_back(ConfigSection{"", "", {}, 0});
    auto& values = doc.sections.back().values;
    if (values.count(key)) throw ConfigError("line " + std::to_string(line_no) + ": duplicate key '" + key + "'");
    values[key] = trim(line.substr(eq + 1));
  }
  return doc;
}

ConfigDocument load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path);
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_config(buffer.str());
}

}  // namespace tscm
