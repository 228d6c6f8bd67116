#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace aftlab::cli {

/// Run manifest: resolved configuration, software version, digests of every
/// input file, output paths, and wall-clock totals. Written exactly once per
/// run. All numeric outputs except wall-clock timings are reproducible
/// bitwise from the resolved configuration.
struct RunManifest {
  std::string command;
  std::map<std::string, std::string> resolved_config;
  std::map<std::string, std::string> input_digests;  // path -> fnv1a-64 hex
  std::vector<std::string> outputs;
  double wall_clock_sec = 0;

  void add_input(const std::string& path);  // hashes the file
  void write(const std::string& dir) const;  // dir/manifest.json + resolved_config.cfg
};

/// FNV-1a 64-bit digest of a file's bytes, hex-encoded.
std::string file_digest(const std::string& path);

}  // namespace aftlab::cli
