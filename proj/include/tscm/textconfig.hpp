#pragma once

// Line-oriented key/value text with section blocks:
//
//   # comment
//   [stage res2]
//   blocks = 3
//   width = 64
//
// Sections may repeat (one per stage, pool, head). Keys before the first
// header land in an unnamed section.

#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace tscm {

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct ConfigSection {
  std::string kind;      // first word of the header, e.g. "stage"
  std::string label;     // remainder of the header, e.g. "res2"
  std::map<std::string, std::string> values;
  int line = 0;

  bool has(const std::string& key) const { return values.count(key) != 0; }
  std::string get(const std::string& key) const;
  std::string get_or(const std::string& key, const std::string& fallback) const;
  long get_int(const std::string& key) const;
  long get_int_or(const std::string& key, long fallback) const;
  double get_double(const std::string& key) const;
  double get_double_or(const std::string& key, double fallback) const;
};

struct ConfigDocument {
  std::vector<ConfigSection> sections;

  std::vector<const ConfigSection*> all(const std::string& kind) const;
  const ConfigSection* first(const std::string& kind) const;
};

ConfigDocument parse_config(const std::string& text);
ConfigDocument load_config(const std::string& path);

long parse_long(const std::string& text, const std::string& what);
double parse_double(const std::string& text, const std::string& what);

}  // namespace tscm
