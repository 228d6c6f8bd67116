// aftlab - a desk-scale lab for adversarially robust transfer learning.
//
// Subcommands: pretrain, finetune, sweep, diagnose, time, report.
// Exit codes: 0 success, 1 runtime failure, 2 config error, 3 data error.

#include <CLI11.hpp>

#include "aftlab/commands.hpp"
#include "aftlab/version.hpp"

int main(int argc, char** argv) {
  CLI::App app{"aftlab: adversarially robust transfer learning at desk scale"};
  app.set_version_flag("--version", aftlab::kVersion);
  app.require_subcommand(1);

  aftlab::cli::Options opt;
  std::string seed_str;

  auto add_common = [&](CLI::App* sub, bool needs_config) {
    auto* c = sub->add_option("--config", opt.config_path, "experiment config file");
    if (needs_config) c->required();
    sub->add_option("--out", opt.out_dir, "output directory")->required();
    sub->add_option("--seed", seed_str, "override run.seed");
    sub->add_option("--jobs", opt.jobs, "parallel worker jobs (sweep)");
    sub->add_option("--eval-subset", opt.eval_subset,
                    "cap per-epoch evaluation to the first N test examples");
  };

  add_common(app.add_subcommand("pretrain", "adversarially train the source task from scratch"),
             true);
  add_common(app.add_subcommand("finetune", "adversarially fine-tune from a checkpoint"), true);
  add_common(app.add_subcommand("sweep", "fine-tune across an epsilon/attack/peft grid"), true);
  add_common(app.add_subcommand("diagnose", "FGSM-vs-PGD perturbation similarity per epsilon"),
             true);
  add_common(app.add_subcommand("time", "attack/peft epoch timing and gradient-call counts"),
             true);
  add_common(app.add_subcommand("report", "merge run CSVs into summary tables"), false);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;  // CLI misuse is a config error
  }

  if (!seed_str.empty()) {
    opt.seed_overridden = true;
    try {
      opt.seed = std::stoull(seed_str);
    } catch (const std::exception&) {
      std::fprintf(stderr, "config error: --seed expects an integer\n");
      return 2;
    }
  }

  return aftlab::cli::dispatch(app.get_subcommands().front()->get_name(), opt);
}
