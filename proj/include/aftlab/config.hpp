#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

namespace aftlab::cli {

/// Config problems exit with code 2, data problems with code 3.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Flat, line-oriented `key = value` configuration with dotted sections and
/// `#` comments. Typed getters record the value actually used (default or
/// explicit), so the fully resolved configuration can be emitted into the
/// run manifest; keys that are never read are reported as errors.
class Config {
 public:
  static Config parse_file(const std::string& path);
  static Config parse_string(const std::string& text, const std::string& origin = "<string>");

  bool has(const std::string& key) const { return values_.count(key) > 0; }

  std::string get_str(const std::string& key, const std::string& fallback);
  int64_t get_i64(const std::string& key, int64_t fallback);
  double get_f64(const std::string& key, double fallback);
  bool get_bool(const std::string& key, bool fallback);
  std::vector<double> get_f64_list(const std::string& key, const std::string& fallback);
  std::vector<int64_t> get_i64_list(const std::string& key, const std::string& fallback);
  std::vector<std::string> get_str_list(const std::string& key, const std::string& fallback);

  /// Throws ConfigError when the file holds keys that neither this command
  /// consumed nor any other command recognizes (typo protection that still
  /// allows one config file to drive several subcommands).
  void ensure_all_known(const std::set<std::string>& other_known) const;

  /// Every key with the value actually in effect, defaults expanded.
  const std::map<std::string, std::string>& resolved() const { return resolved_; }
  void override_value(const std::string& key, const std::string& value);

 private:
  std::string raw(const std::string& key, const std::string& fallback);
  std::map<std::string, std::string> values_;
  std::map<std::string, std::string> resolved_;
  std::set<std::string> consumed_;
  std::string origin_;
};

}  // namespace aftlab::cli
