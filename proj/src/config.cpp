#include "aftlab/config.hpp"

#include <fstream>
#include <sstream>

namespace aftlab::cli {

namespace {

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream ss(s);
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

}  // namespace

Config Config::parse_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open config file: " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_string(ss.str(), path);
}

Config Config::parse_string(const std::string& text, const std::string& origin) {
  Config cfg;
  cfg.origin_ = origin;
  std::istringstream ss(text);
  std::string line;
  int lineno = 0;
  while (std::getline(ss, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError(origin + ":" + std::to_string(lineno) + ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty())
      throw ConfigError(origin + ":" + std::to_string(lineno) + ": empty key");
    if (cfg.values_.count(key))
      throw ConfigError(origin + ":" + std::to_string(lineno) + ": duplicate key " + key);
    cfg.values_[key] = value;
  }
  return cfg;
}

std::string Config::raw(const std::string& key, const std::string& fallback) {
  consumed_.insert(key);
  auto it = values_.find(key);
  const std::string value = it == values_.end() ? fallback : it->second;
  resolved_[key] = value;
  return value;
}

std::string Config::get_str(const std::string& key, const std::string& fallback) {
  return raw(key, fallback);
}

int64_t Config::get_i64(const std::string& key, int64_t fallback) {
  const std::string s = raw(key, std::to_string(fallback));
  try {
    size_t pos = 0;
    const int64_t v = std::stoll(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw ConfigError("config key " + key + ": expected integer, got '" + s + "'");
  }
}

double Config::get_f64(const std::string& key, double fallback) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", fallback);
  const std::string s = raw(key, buf);
  try {
    size_t pos = 0;
    const double v = std::stod(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw ConfigError("config key " + key + ": expected number, got '" + s + "'");
  }
}

bool Config::get_bool(const std::string& key, bool fallback) {
  const std::string s = raw(key, fallback ? "true" : "false");
  if (s == "true" || s == "1" || s == "yes") return true;
  if (s == "false" || s == "0" || s == "no") return false;
  throw ConfigError("config key " + key + ": expected boolean, got '" + s + "'");
}

std::vector<double> Config::get_f64_list(const std::string& key, const std::string& fallback) {
  std::vector<double> out;
  for (const std::string& item : split_list(raw(key, fallback))) {
    try {
      out.push_back(std::stod(item));
    } catch (const std::exception&) {
      throw ConfigError("config key " + key + ": bad number '" + item + "'");
    }
  }
  return out;
}

std::vector<int64_t> Config::get_i64_list(const std::string& key, const std::string& fallback) {
  std::vector<int64_t> out;
  for (const std::string& item : split_list(raw(key, fallback))) {
    try {
      out.push_back(std::stoll(item));
    } catch (const std::exception&) {
      throw ConfigError("config key " + key + ": bad integer '" + item + "'");
    }
  }
  return out;
}

std::vector<std::string> Config::get_str_list(const std::string& key,
                                              const std::string& fallback) {
  return split_list(raw(key, fallback));
}

void Config::ensure_all_known(const std::set<std::string>& other_known) const {
  std::string unknown;
  for (const auto& [key, value] : values_)
    if (!consumed_.count(key) && !other_known.count(key))
      unknown += (unknown.empty() ? "" : ", ") + key;
  if (!unknown.empty())
    throw ConfigError(origin_ + ": unknown config keys: " + unknown);
}

void Config::override_value(const std::string& key, const std::string& value) {
  values_[key] = value;
}

}  // namespace aftlab::cli
