#include "aftlab/manifest.hpp"

#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "aftlab/config.hpp"
#include "aftlab/version.hpp"

namespace aftlab::cli {

std::string file_digest(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot open input for hashing: " + path);
  uint64_t h = 0xcbf29ce484222325ull;
  char buf[1 << 14];
  while (f.read(buf, sizeof(buf)) || f.gcount() > 0) {
    const std::streamsize n = f.gcount();
    for (std::streamsize i = 0; i < n; ++i) {
      h ^= static_cast<unsigned char>(buf[i]);
      h *= 0x100000001b3ull;
    }
  }
  char hex[17];
  std::snprintf(hex, sizeof(hex), "%016llx", static_cast<unsigned long long>(h));
  return hex;
}

void RunManifest::add_input(const std::string& path) { input_digests[path] = file_digest(path); }

void RunManifest::write(const std::string& dir) const {
  nlohmann::json j;
  j["command"] = command;
  j["version"] = aftlab::kVersion;
  j["resolved_config"] = resolved_config;
  j["input_digests"] = input_digests;
  j["outputs"] = outputs;
  j["wall_clock_sec"] = wall_clock_sec;

  std::ofstream f(std::filesystem::path(dir) / "manifest.json");
  if (!f) throw std::runtime_error("cannot write manifest in " + dir);
  f << j.dump(2) << "\n";

  // the resolved config in config-file form, directly reusable with --config
  std::ofstream cfg(std::filesystem::path(dir) / "resolved_config.cfg");
  for (const auto& [key, value] : resolved_config) cfg << key << " = " << value << "\n";
}

}  // namespace aftlab::cli
