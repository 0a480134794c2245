#pragma once

// Schema-driven run configuration. Files use a TOML subset:
//
//   # comment
//   [section]
//   key = 1.5            # int, float, bool, "string", or [list, of, numbers]
//
// Keys are addressed as "section.key". Resolution order: schema defaults,
// then the config file, then command-line overrides ("section.key=value").
// Unknown keys and ill-typed values raise ConfigError.

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <variant>
#include <vector>

#include "inbed/network.hpp"

namespace inbed {

enum class ValueType { integer, real, boolean, string, real_list, integer_list };

using ConfigValue = std::variant<std::int64_t, double, bool, std::string, std::vector<double>, std::vector<std::int64_t>>;

struct SchemaKey {
  std::string key;
  ValueType type;
  ConfigValue default_value;
  std::string help;
};

const std::vector<SchemaKey>& config_schema();
// One line per key: "section.key  <type>  default  help".
std::string schema_help();

class Config {
 public:
  Config();  // schema defaults

  void merge_text(const std::string& text, const std::string& origin);
  void merge_file(const std::filesystem::path& path);
  // "section.key=value"
  void apply_override(const std::string& assignment);

  std::int64_t get_int(const std::string& key) const;
  double get_real(const std::string& key) const;
  bool get_bool(const std::string& key) const;
  const std::string& get_string(const std::string& key) const;
  std::vector<double> get_real_list(const std::string& key) const;
  std::vector<std::int64_t> get_int_list(const std::string& key) const;

  void set(const std::string& key, const std::string& literal, const std::string& origin = "override");

  // Canonical text of every resolved key (sorted), the input to digests.
  std::string canonical() const;
  std::string digest() const;
  nlohmann::json to_json() const;

 private:
  const SchemaKey& schema_for(const std::string& key, const std::string& origin) const;
  const ConfigValue& value(const std::string& key, ValueType type) const;
  std::map<std::string, ConfigValue> values_;
};

ConfigValue parse_value(const std::string& literal, ValueType type, const std::string& where);
std::string format_value(const ConfigValue& v);

}  // namespace inbed
