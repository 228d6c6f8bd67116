#pragma once

#include <cstdint>
#include <string>

namespace aftlab::cli {

struct Options {
  std::string config_path;
  std::string out_dir;
  bool seed_overridden = false;
  uint64_t seed = 0;
  int jobs = 1;
  int64_t eval_subset = -1;  // -1 keeps the config value
};

int cmd_pretrain(const Options& opt);
int cmd_finetune(const Options& opt);
int cmd_sweep(const Options& opt);
int cmd_diagnose(const Options& opt);
int cmd_time(const Options& opt);
int cmd_report(const Options& opt);

/// Runs a subcommand and maps exceptions onto the exit-code contract:
/// 0 success, 1 runtime failure, 2 config error, 3 data error.
int dispatch(const std::string& command, const Options& opt);

}  // namespace aftlab::cli
