#include "aftlab/commands.hpp"

#include <atomic>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>
#include <vector>

#include "aftlab/checkpoint.hpp"
#include "aftlab/config.hpp"
#include "aftlab/diagnostics.hpp"
#include "aftlab/manifest.hpp"
#include "aftlab/rng.hpp"
#include "aftlab/trainer.hpp"

namespace aftlab::cli {

namespace fs = std::filesystem;

namespace {

// Every key any subcommand understands; shared config files may carry keys
// for other subcommands without tripping the typo check.
const std::set<std::string> kAllKnownKeys = {
    "run.seed",
    "data.kind", "data.synth.n_per_class", "data.synth.channels", "data.synth.height",
    "data.synth.width", "data.synth.num_classes", "data.synth.cluster_separation",
    "data.synth.noise_sigma", "data.idx.images", "data.idx.labels",
    "split.source_classes", "split.target_classes", "split.test_fraction",
    "model.arch", "model.hidden", "model.conv_channels", "model.kernel", "model.activation",
    "model.adapters", "model.adapter_reduction", "model.head_init",
    "train.epochs", "train.batch_size", "train.lr", "train.momentum", "train.weight_decay",
    "train.peft", "train.gradalign_lambda",
    "attack.kind", "attack.eps", "attack.steps", "attack.step_size", "attack.rand_init",
    "eval.kind", "eval.eps", "eval.steps", "eval.step_size", "eval.rand_init", "eval.subset",
    "finetune.checkpoint", "finetune.reinit_head", "finetune.head_init",
    "roli.enabled", "roli.stage1.epochs", "roli.stage1.lr", "roli.stage1.attack",
    "sweep.eps_list", "sweep.attacks", "sweep.pefts", "sweep.from_scratch",
    "diagnose.sweep_dir", "diagnose.eps_list", "diagnose.attack", "diagnose.peft",
    "diagnose.pgd_steps", "diagnose.self_compare",
    "time.repeats", "time.attacks", "time.pefts",
};

std::string g17(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string gshort(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%g", v);
  return buf;
}

// ---- config -> domain objects ----------------------------------------------

struct LoadedConfig {
  Config cfg;
  uint64_t seed = 0;
};

LoadedConfig load_config(const Options& opt) {
  if (opt.config_path.empty()) throw ConfigError("--config is required");
  LoadedConfig lc{Config::parse_file(opt.config_path), 0};
  lc.seed = static_cast<uint64_t>(lc.cfg.get_i64("run.seed", 1));
  if (opt.seed_overridden) {
    lc.seed = opt.seed;
    lc.cfg.override_value("run.seed", std::to_string(opt.seed));
    lc.cfg.get_i64("run.seed", 1);  // re-resolve so the manifest echoes the override
  }
  return lc;
}

struct TaskData {
  data::ImageDataset source_train;
  data::ImageDataset source_test;
  data::ImageDataset target_train;
  data::ImageDataset target_test;
  std::vector<std::string> input_files;
};

/// Splits one dataset into train/test by a seeded shuffle (example level).
std::pair<data::ImageDataset, data::ImageDataset> example_split(const data::ImageDataset& all,
                                                                double test_fraction,
                                                                uint64_t seed) {
  auto shuffled = data::batches(all, all.size(), seed)[0];
  data::ImageDataset pool;
  pool.images = std::move(shuffled.images);
  pool.labels = std::move(shuffled.labels);
  pool.num_classes = all.num_classes;
  const auto n_test = static_cast<int64_t>(test_fraction * static_cast<double>(all.size()));
  if (n_test < 1 || n_test >= all.size())
    throw ConfigError("test fraction leaves an empty split");
  data::ImageDataset test = data::take_prefix(pool, n_test);
  const int64_t dim = pool.images.numel() / pool.size();
  data::ImageDataset train;
  train.images = TensorValue::zeros({pool.size() - n_test, pool.images.shape[1],
                                     pool.images.shape[2], pool.images.shape[3]});
  std::copy(pool.images.data.begin() + n_test * dim, pool.images.data.end(),
            train.images.data.begin());
  train.labels.assign(pool.labels.begin() + n_test, pool.labels.end());
  train.num_classes = pool.num_classes;
  return {std::move(train), std::move(test)};
}

TaskData load_task_data(Config& cfg, uint64_t seed) {
  const std::string kind = cfg.get_str("data.kind", "synth");
  data::ImageDataset all;
  TaskData out;
  if (kind == "synth") {
    data::SynthSpec spec;
    spec.n_per_class = cfg.get_i64("data.synth.n_per_class", 100);
    spec.channels = cfg.get_i64("data.synth.channels", 1);
    spec.height = cfg.get_i64("data.synth.height", 8);
    spec.width = cfg.get_i64("data.synth.width", 8);
    spec.num_classes = cfg.get_i64("data.synth.num_classes", 10);
    spec.cluster_separation = cfg.get_f64("data.synth.cluster_separation", 0.4);
    spec.noise_sigma = cfg.get_f64("data.synth.noise_sigma", 0.1);
    spec.seed = derive_seed(seed, "synth");
    all = data::synth_clusters(spec);
  } else if (kind == "idx") {
    const std::string images = cfg.get_str("data.idx.images", "");
    const std::string labels = cfg.get_str("data.idx.labels", "");
    if (images.empty() || labels.empty())
      throw ConfigError("data.kind = idx requires data.idx.images and data.idx.labels");
    if (!fs::exists(images) || !fs::exists(labels))
      throw DataError("idx dataset file missing: " + (fs::exists(images) ? labels : images));
    all = data::load_idx(images, labels);
    out.input_files = {images, labels};
  } else {
    throw ConfigError("data.kind must be synth or idx, got '" + kind + "'");
  }

  const auto source_classes = cfg.get_i64_list("split.source_classes", "0,1,2,3,4");
  const auto target_classes = cfg.get_i64_list("split.target_classes", "5,6,7,8,9");
  const double test_fraction = cfg.get_f64("split.test_fraction", 0.25);
  try {
    data::TransferSplit split = data::class_split(all, source_classes, target_classes,
                                                  test_fraction, derive_seed(seed, "split"));
    auto [src_train, src_test] =
        example_split(split.source, test_fraction, derive_seed(seed, "source_split"));
    out.source_train = std::move(src_train);
    out.source_test = std::move(src_test);
    out.target_train = std::move(split.target_train);
    out.target_test = std::move(split.target_test);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("split configuration: ") + e.what());
  }
  return out;
}

models::ModelSpec model_spec_from(Config& cfg, const data::ImageDataset& sample,
                                  int64_t num_classes) {
  models::ModelSpec spec;
  const std::string arch = cfg.get_str("model.arch", "mlp");
  if (arch == "mlp") spec.arch = models::Arch::kMlp;
  else if (arch == "cnn") spec.arch = models::Arch::kCnn;
  else throw ConfigError("model.arch must be mlp or cnn");
  spec.input_channels = sample.images.shape[1];
  spec.input_height = sample.images.shape[2];
  spec.input_width = sample.images.shape[3];
  spec.hidden_widths = cfg.get_i64_list("model.hidden", "64");
  spec.conv_channels = cfg.get_i64_list("model.conv_channels", "8,16");
  spec.kernel_size = cfg.get_i64("model.kernel", 3);
  const std::string act = cfg.get_str("model.activation", "relu");
  if (act == "relu") spec.activation = autodiff::Act::kRelu;
  else if (act == "softplus") spec.activation = autodiff::Act::kSoftplus;
  else throw ConfigError("model.activation must be relu or softplus");
  spec.adapters_enabled = cfg.get_bool("model.adapters", false);
  spec.adapter_reduction = cfg.get_i64("model.adapter_reduction", 8);
  spec.num_classes = num_classes;
  try {
    spec.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("model spec: ") + e.what());
  }
  return spec;
}

attacks::AttackSpec attack_from(Config& cfg, const std::string& prefix, double default_eps,
                                const std::string& default_kind, int default_steps,
                                uint64_t seed) {
  const std::string kind = cfg.get_str(prefix + ".kind", default_kind);
  const double eps = cfg.get_f64(prefix + ".eps", default_eps);
  const auto steps = static_cast<int>(cfg.get_i64(prefix + ".steps", default_steps));
  const double step_size = cfg.get_f64(prefix + ".step_size", 0.0);
  const bool rand_init = cfg.get_bool(prefix + ".rand_init", false);
  try {
    if (kind == "fgsm") return attacks::AttackSpec::fgsm(eps);
    if (kind == "fgsm_ri") return attacks::AttackSpec::fgsm_ri(eps, seed);
    if (kind == "pgd") return attacks::AttackSpec::pgd(eps, steps, step_size, rand_init, seed);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(prefix + ": " + e.what());
  }
  throw ConfigError(prefix + ".kind must be fgsm, fgsm_ri or pgd, got '" + kind + "'");
}

trainer::TrainPlan plan_from(Config& cfg, const Options& opt, uint64_t seed,
                             const std::string& stage_tag) {
  trainer::TrainPlan plan;
  plan.epochs = static_cast<int>(cfg.get_i64("train.epochs", 10));
  plan.batch_size = cfg.get_i64("train.batch_size", 128);
  plan.lr = cfg.get_f64("train.lr", 0.05);
  plan.momentum = cfg.get_f64("train.momentum", 0.9);
  plan.weight_decay = cfg.get_f64("train.weight_decay", 5e-4);
  plan.gradalign_lambda = cfg.get_f64("train.gradalign_lambda", 0.0);
  try {
    plan.peft = models::peft_from_string(cfg.get_str("train.peft", "full"));
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("train.peft: ") + e.what());
  }
  plan.attack = attack_from(cfg, "attack", 8.0, "fgsm", 7, 0);
  plan.eval_attack = attack_from(cfg, "eval", plan.attack.eps_255, "pgd", 10,
                                 derive_seed(seed, "eval_attack"));
  plan.eval_subset = opt.eval_subset >= 0 ? opt.eval_subset : cfg.get_i64("eval.subset", 0);
  plan.seed = derive_seed(seed, stage_tag);
  try {
    plan.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("train plan: ") + e.what());
  }
  return plan;
}

// ---- CSV emission ----------------------------------------------------------

void write_history_csv(const fs::path& path, const trainer::RunHistory& history) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write " + path.string());
  f << "#schema aftlab.history.v1\n";
  f << "epoch,train_loss,train_attack_acc,nat_acc,robust_acc_pgd10,wall_time_sec,lr_used\n";
  for (const auto& r : history.records)
    f << r.epoch << ',' << g17(r.train_loss) << ',' << g17(r.train_attack_acc) << ','
      << g17(r.nat_acc) << ',' << g17(r.robust_acc_pgd10) << ',' << g17(r.wall_time_sec) << ','
      << g17(r.lr_used) << "\n";
}

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
};

CsvTable read_csv(const fs::path& path) {
  std::ifstream f(path);
  if (!f) throw DataError("cannot open csv: " + path.string());
  CsvTable t;
  std::string line;
  bool header_seen = false;
  while (std::getline(f, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream ss(line);
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (!header_seen) {
      t.header = cells;
      header_seen = true;
    } else {
      cells.resize(t.header.size());
      t.rows.push_back(cells);
    }
  }
  return t;
}

int col_index(const CsvTable& t, const std::string& name) {
  for (size_t i = 0; i < t.header.size(); ++i)
    if (t.header[i] == name) return static_cast<int>(i);
  throw DataError("csv column missing: " + name);
}

// ---- shared run plumbing ----------------------------------------------------

models::Model prepare_finetune_model(Config& cfg, const std::string& checkpoint_path,
                                     int64_t target_classes, uint64_t seed) {
  if (!fs::exists(checkpoint_path)) throw DataError("checkpoint missing: " + checkpoint_path);
  models::Model model = models::load_checkpoint(checkpoint_path);

  const bool want_adapters = cfg.get_bool("model.adapters", false);
  const int64_t reduction = cfg.get_i64("model.adapter_reduction", 8);
  if (want_adapters && !model.spec().adapters_enabled)
    model = models::insert_adapters(model, reduction);

  const std::string peft = cfg.get_str("train.peft", "full");
  if (peft == "adapter" && !model.spec().adapters_enabled)
    throw ConfigError("train.peft = adapter requires model.adapters = true");

  const bool reinit = cfg.get_bool("finetune.reinit_head", true);
  const std::string head_init = cfg.get_str("finetune.head_init", "zero");
  if (model.spec().num_classes != target_classes && !reinit)
    throw ConfigError("checkpoint head has " + std::to_string(model.spec().num_classes) +
                      " classes but the target task has " + std::to_string(target_classes) +
                      "; set finetune.reinit_head = true");
  if (reinit) {
    const auto init = head_init == "seeded" ? models::HeadInit::kSeeded : models::HeadInit::kZero;
    if (head_init != "zero" && head_init != "seeded")
      throw ConfigError("finetune.head_init must be zero or seeded");
    model = models::reinit_head(model, target_classes, init, derive_seed(seed, "head_init"));
  }
  return model;
}

fs::path ensure_out_dir(const Options& opt) {
  if (opt.out_dir.empty()) throw ConfigError("--out is required");
  fs::create_directories(opt.out_dir);
  return opt.out_dir;
}

}  // namespace

// ---- pretrain ---------------------------------------------------------------

int cmd_pretrain(const Options& opt) {
  const auto t0 = std::chrono::steady_clock::now();
  LoadedConfig lc = load_config(opt);
  Config& cfg = lc.cfg;

  TaskData td = load_task_data(cfg, lc.seed);
  models::ModelSpec spec = model_spec_from(cfg, td.source_train, td.source_train.num_classes);
  trainer::TrainPlan plan = plan_from(cfg, opt, lc.seed, "pretrain");
  const std::string head_init = cfg.get_str("model.head_init", "zero");

  models::Model model = models::build_model(spec, derive_seed(lc.seed, "model"));
  if (head_init == "seeded")
    model = models::reinit_head(model, spec.num_classes, models::HeadInit::kSeeded,
                                derive_seed(lc.seed, "head_init"));
  else if (head_init != "zero")
    throw ConfigError("model.head_init must be zero or seeded");
  cfg.ensure_all_known(kAllKnownKeys);

  trainer::RunHistory history = trainer::train(model, td.source_train, td.source_test, plan);

  const fs::path out = ensure_out_dir(opt);
  write_history_csv(out / "history.csv", history);
  models::save_checkpoint(history.best_checkpoint, (out / "best.ckpt").string());

  RunManifest manifest;
  manifest.command = "pretrain";
  manifest.resolved_config = cfg.resolved();
  for (const auto& file : td.input_files) manifest.add_input(file);
  manifest.outputs = {"history.csv", "best.ckpt"};
  manifest.wall_clock_sec =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  manifest.write(out.string());
  std::cout << "pretrain: " << history.records.size() << " epochs, best robust acc "
            << (history.best_epoch >= 0
                    ? gshort(history.records[history.best_epoch].robust_acc_pgd10)
                    : "n/a")
            << "\n";
  return 0;
}

// ---- finetune ---------------------------------------------------------------

int cmd_finetune(const Options& opt) {
  const auto t0 = std::chrono::steady_clock::now();
  LoadedConfig lc = load_config(opt);
  Config& cfg = lc.cfg;

  TaskData td = load_task_data(cfg, lc.seed);
  const std::string ckpt = cfg.get_str("finetune.checkpoint", "");
  if (ckpt.empty()) throw ConfigError("finetune.checkpoint is required");
  models::Model model =
      prepare_finetune_model(cfg, ckpt, td.target_train.num_classes, lc.seed);

  const bool roli_enabled = cfg.get_bool("roli.enabled", false);
  trainer::TrainPlan plan = plan_from(cfg, opt, lc.seed, roli_enabled ? "roli_ft" : "finetune");

  RunManifest manifest;
  manifest.command = "finetune";
  manifest.add_input(ckpt);
  for (const auto& file : td.input_files) manifest.add_input(file);

  const fs::path out_dir = opt.out_dir;
  if (roli_enabled) {
    trainer::TrainPlan plan_lp = plan;
    plan_lp.peft = models::PeftMode::kLinearProbe;
    plan_lp.epochs = static_cast<int>(cfg.get_i64("roli.stage1.epochs", plan.epochs));
    plan_lp.lr = cfg.get_f64("roli.stage1.lr", 0.05);
    plan_lp.seed = derive_seed(lc.seed, "roli_lp");
    const std::string lp_kind = cfg.get_str("roli.stage1.attack", "fgsm");
    if (lp_kind == "pgd")
      plan_lp.attack = attacks::AttackSpec::pgd(plan.attack.eps_255,
                                                static_cast<int>(cfg.get_i64("attack.steps", 7)));
    else if (lp_kind == "fgsm")
      plan_lp.attack = attacks::AttackSpec::fgsm(plan.attack.eps_255);
    else
      throw ConfigError("roli.stage1.attack must be fgsm or pgd, got '" + lp_kind + "'");
    // stage-2 full fine-tuning defaults to the lower initial learning rate
    if (plan.peft == models::PeftMode::kFull && !cfg.has("train.lr")) {
      plan.lr = 0.005;
      cfg.override_value("train.lr", "0.005");
      cfg.get_f64("train.lr", 0.005);  // manifest echoes the effective value
    }
    cfg.ensure_all_known(kAllKnownKeys);

    auto [stage1, stage2] = trainer::roli(model, td.target_train, td.target_test, plan_lp, plan);
    ensure_out_dir(opt);
    write_history_csv(out_dir / "history_stage1.csv", stage1);
    write_history_csv(out_dir / "history_stage2.csv", stage2);
    models::save_checkpoint(stage2.best_checkpoint, (out_dir / "best.ckpt").string());
    manifest.outputs = {"history_stage1.csv", "history_stage2.csv", "best.ckpt"};
  } else {
    cfg.ensure_all_known(kAllKnownKeys);
    trainer::RunHistory history = trainer::train(model, td.target_train, td.target_test, plan);
    ensure_out_dir(opt);
    write_history_csv(out_dir / "history.csv", history);
    models::save_checkpoint(history.best_checkpoint, (out_dir / "best.ckpt").string());
    manifest.outputs = {"history.csv", "best.ckpt"};
  }

  manifest.resolved_config = cfg.resolved();
  manifest.wall_clock_sec =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  manifest.write(out_dir.string());
  return 0;
}

// ---- sweep -------------------------------------------------------------------

namespace {

struct SweepCombo {
  double eps;
  std::string attack;
  std::string peft;
  std::string dir_name() const {
    return "run_" + attack + "_" + peft + "_eps" + gshort(eps);
  }
};

struct SweepResult {
  SweepCombo combo;
  double peak_nat = 0, peak_racc = 0;
  int best_epoch = -1;
  diag::OverfitVerdict verdict;
  double total_train_sec = 0;
};

}  // namespace

int cmd_sweep(const Options& opt) {
  const auto t0 = std::chrono::steady_clock::now();
  LoadedConfig lc = load_config(opt);
  Config& cfg = lc.cfg;

  TaskData td = load_task_data(cfg, lc.seed);
  const auto eps_list = cfg.get_f64_list("sweep.eps_list", "2,4,8,16,24,32");
  const auto attack_names = cfg.get_str_list("sweep.attacks", "fgsm,pgd");
  const auto peft_names = cfg.get_str_list("sweep.pefts", "linear_probe");
  const bool from_scratch = cfg.get_bool("sweep.from_scratch", false);
  const auto pgd_steps = static_cast<int>(cfg.get_i64("attack.steps", 7));
  if (eps_list.empty()) throw ConfigError("sweep.eps_list must be nonempty");

  const std::string ckpt = cfg.get_str("finetune.checkpoint", "");
  models::Model base_model;
  RunManifest manifest;
  manifest.command = "sweep";
  if (from_scratch) {
    models::ModelSpec spec = model_spec_from(cfg, td.target_train, td.target_train.num_classes);
    base_model = models::build_model(spec, derive_seed(lc.seed, "model"));
    const std::string head_init = cfg.get_str("model.head_init", "zero");
    if (head_init == "seeded")
      base_model = models::reinit_head(base_model, spec.num_classes, models::HeadInit::kSeeded,
                                       derive_seed(lc.seed, "head_init"));
  } else {
    if (ckpt.empty())
      throw ConfigError("sweep needs finetune.checkpoint (or sweep.from_scratch = true)");
    base_model = prepare_finetune_model(cfg, ckpt, td.target_train.num_classes, lc.seed);
    manifest.add_input(ckpt);
  }
  for (const auto& file : td.input_files) manifest.add_input(file);

  // template plan; per-combo fields overwritten below
  trainer::TrainPlan base_plan = plan_from(cfg, opt, lc.seed, "sweep");
  cfg.ensure_all_known(kAllKnownKeys);

  std::vector<SweepCombo> combos;
  for (double eps : eps_list)
    for (const auto& attack : attack_names)
      for (const auto& peft : peft_names) combos.push_back({eps, attack, peft});

  const fs::path out = ensure_out_dir(opt);
  std::vector<SweepResult> results(combos.size());
  std::atomic<size_t> next{0};
  std::exception_ptr first_error;
  std::mutex error_mutex;

  auto worker = [&]() {
    for (size_t i = next.fetch_add(1); i < combos.size(); i = next.fetch_add(1)) {
      try {
        const SweepCombo& combo = combos[i];
        trainer::TrainPlan plan = base_plan;
        plan.peft = models::peft_from_string(combo.peft);
        plan.attack = combo.attack == "pgd"
                          ? attacks::AttackSpec::pgd(combo.eps, pgd_steps)
                          : (combo.attack == "fgsm_ri"
                                 ? attacks::AttackSpec::fgsm_ri(combo.eps, 0)
                                 : attacks::AttackSpec::fgsm(combo.eps));
        plan.eval_attack = attacks::AttackSpec::pgd(combo.eps, 10);
        plan.seed = derive_seed(lc.seed, "sweep:" + combo.attack + ":" + combo.peft + ":eps" +
                                             gshort(combo.eps));

        models::Model start = base_model;
        if (plan.peft == models::PeftMode::kAdapter && !start.spec().adapters_enabled)
          throw ConfigError("sweep peft adapter requires model.adapters = true");

        trainer::RunHistory history =
            trainer::train(start, td.target_train, td.target_test, plan);

        SweepResult r;
        r.combo = combo;
        if (history.best_epoch >= 0) {
          r.best_epoch = history.best_epoch;
          r.peak_racc = history.records[history.best_epoch].robust_acc_pgd10;
          r.peak_nat = history.records[history.best_epoch].nat_acc;
        }
        for (const auto& rec : history.records) r.total_train_sec += rec.wall_time_sec;
        r.verdict = diag::detect_overfit(history);
        results[i] = r;

        const fs::path combo_dir = out / combo.dir_name();
        fs::create_directories(combo_dir);
        write_history_csv(combo_dir / "history.csv", history);
        models::save_checkpoint(history.best_checkpoint, (combo_dir / "best.ckpt").string());
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!first_error) first_error = std::current_exception();
      }
    }
  };

  const int n_workers = std::max(1, std::min<int>(opt.jobs, static_cast<int>(combos.size())));
  std::vector<std::thread> threads;
  for (int w = 0; w < n_workers; ++w) threads.emplace_back(worker);
  for (auto& t : threads) t.join();
  if (first_error) std::rethrow_exception(first_error);

  // FGSM - PGD robustness difference per (eps, peft), reported on FGSM rows
  auto pgd_peak = [&](double eps, const std::string& peft) -> double {
    for (const auto& r : results)
      if (r.combo.eps == eps && r.combo.peft == peft && r.combo.attack == "pgd")
        return r.peak_racc;
    return -1;
  };

  std::ofstream f(out / "summary.csv");
  f << "#schema aftlab.sweep.v1\n";
  f << "eps,attack,peft,peak_nat_acc,peak_racc,best_epoch,overfit,onset_epoch,total_train_sec,"
       "racc_diff_fgsm_minus_pgd\n";
  for (const auto& r : results) {
    f << gshort(r.combo.eps) << ',' << r.combo.attack << ',' << r.combo.peft << ','
      << g17(r.peak_nat) << ',' << g17(r.peak_racc) << ',' << r.best_epoch << ','
      << (r.verdict.detected ? "true" : "false") << ','
      << (r.verdict.onset_epoch ? std::to_string(*r.verdict.onset_epoch) : "") << ','
      << g17(r.total_train_sec) << ',';
    if (r.combo.attack == "fgsm") {
      const double p = pgd_peak(r.combo.eps, r.combo.peft);
      if (p >= 0) f << g17(r.peak_racc - p);
    }
    f << "\n";
  }
  f.close();

  manifest.resolved_config = cfg.resolved();
  manifest.outputs = {"summary.csv"};
  for (const auto& combo : combos)
    manifest.outputs.push_back(combo.dir_name() + "/history.csv");
  manifest.wall_clock_sec =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  manifest.write(out.string());
  return 0;
}

// ---- diagnose -----------------------------------------------------------------

int cmd_diagnose(const Options& opt) {
  const auto t0 = std::chrono::steady_clock::now();
  LoadedConfig lc = load_config(opt);
  Config& cfg = lc.cfg;

  TaskData td = load_task_data(cfg, lc.seed);
  const auto eps_list = cfg.get_f64_list("diagnose.eps_list", "2,4,8,16,24,32");
  const std::string sweep_dir = cfg.get_str("diagnose.sweep_dir", "");
  const std::string attack = cfg.get_str("diagnose.attack", "fgsm");
  const std::string peft = cfg.get_str("diagnose.peft", "linear_probe");
  const auto pgd_steps = static_cast<int>(cfg.get_i64("diagnose.pgd_steps", 7));
  const bool self_compare = cfg.get_bool("diagnose.self_compare", false);
  const int64_t subset = opt.eval_subset >= 0 ? opt.eval_subset : cfg.get_i64("eval.subset", 0);
  cfg.ensure_all_known(kAllKnownKeys);

  const data::ImageDataset test = data::take_prefix(td.target_test, subset);

  RunManifest manifest;
  manifest.command = "diagnose";
  for (const auto& file : td.input_files) manifest.add_input(file);

  std::vector<diag::SimilarityReport> reports;
  std::vector<models::Model> owned;  // keeps checkpoints alive for the sweep
  if (self_compare) {
    // pgd against itself with one seed: similarity 1, ratios 1 by definition
    if (sweep_dir.empty()) throw ConfigError("diagnose.sweep_dir is required");
    for (double eps : eps_list) {
      const fs::path ckpt = fs::path(sweep_dir) /
                            ("run_" + attack + "_" + peft + "_eps" + gshort(eps)) / "best.ckpt";
      if (!fs::exists(ckpt)) throw DataError("checkpoint missing: " + ckpt.string());
      manifest.add_input(ckpt.string());
      models::Model model = models::load_checkpoint(ckpt.string());
      const attacks::AttackSpec spec =
          attacks::AttackSpec::pgd(eps, pgd_steps, 0, false, derive_seed(lc.seed, "diag"));
      diag::SimilarityReport rep;
      rep.eps_255 = eps;
      auto batch_list = data::batches(test, 256);
      double cos_sum = 0;
      for (size_t bi = 0; bi < batch_list.size(); ++bi) {
        const auto& b = batch_list[bi];
        const TensorValue a1 = attacks::attack(model, b.images, b.labels, spec, bi);
        const TensorValue a2 = attacks::attack(model, b.images, b.labels, spec, bi);
        const TensorValue d1 = attacks::delta(a1, b.images).delta;
        const TensorValue d2 = attacks::delta(a2, b.images).delta;
        const int64_t dim = d1.numel() / d1.shape[0];
        for (int64_t i = 0; i < d1.shape[0]; ++i) {
          std::vector<double> r1(d1.data.begin() + i * dim, d1.data.begin() + (i + 1) * dim);
          std::vector<double> r2(d2.data.begin() + i * dim, d2.data.begin() + (i + 1) * dim);
          double n1 = 0;
          for (double v : r1) n1 += v * v;
          if (std::sqrt(n1) < autodiff::kCosNormTolerance) {
            ++rep.excluded;
          } else {
            cos_sum += diag::cosine(r1, r2);
            ++rep.n;
          }
        }
      }
      rep.mean_cos = rep.n ? cos_sum / static_cast<double>(rep.n) : 0.0;
      rep.loss_ratio = 1.0;
      rep.racc_ratio = 1.0;
      reports.push_back(rep);
    }
  } else {
    if (sweep_dir.empty()) throw ConfigError("diagnose.sweep_dir is required");
    std::map<double, const models::Model*> per_eps;
    owned.reserve(eps_list.size());
    for (double eps : eps_list) {
      const fs::path ckpt = fs::path(sweep_dir) /
                            ("run_" + attack + "_" + peft + "_eps" + gshort(eps)) / "best.ckpt";
      if (!fs::exists(ckpt)) throw DataError("checkpoint missing: " + ckpt.string());
      manifest.add_input(ckpt.string());
      owned.push_back(models::load_checkpoint(ckpt.string()));
      per_eps[eps] = &owned.back();
    }
    const attacks::AttackSpec pgd_spec = attacks::AttackSpec::pgd(8, pgd_steps);
    reports = diag::similarity_sweep(per_eps, test, pgd_spec);
  }

  const fs::path out = ensure_out_dir(opt);
  std::ofstream f(out / "similarity.csv");
  f << "#schema aftlab.similarity.v1\n";
  f << "eps,mean_cos,loss_ratio,racc_ratio,n,excluded\n";
  for (const auto& r : reports) {
    f << gshort(r.eps_255) << ',' << g17(r.mean_cos) << ',' << g17(r.loss_ratio) << ',';
    if (r.racc_ratio) f << g17(*r.racc_ratio);
    f << ',' << r.n << ',' << r.excluded << "\n";
  }
  f.close();

  manifest.resolved_config = cfg.resolved();
  manifest.outputs = {"similarity.csv"};
  manifest.wall_clock_sec =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  manifest.write(out.string());
  return 0;
}

// ---- time ----------------------------------------------------------------------

int cmd_time(const Options& opt) {
  const auto t0 = std::chrono::steady_clock::now();
  LoadedConfig lc = load_config(opt);
  Config& cfg = lc.cfg;

  TaskData td = load_task_data(cfg, lc.seed);
  const auto attack_names = cfg.get_str_list("time.attacks", "fgsm,pgd");
  const auto peft_names = cfg.get_str_list("time.pefts", "full,linear_probe");
  const int repeats = static_cast<int>(cfg.get_i64("time.repeats", 5));
  const double eps = cfg.get_f64("attack.eps", 8.0);
  const auto pgd_steps = static_cast<int>(cfg.get_i64("attack.steps", 7));

  const std::string ckpt = cfg.get_str("finetune.checkpoint", "");
  RunManifest manifest;
  manifest.command = "time";
  models::Model model;
  if (!ckpt.empty()) {
    model = prepare_finetune_model(cfg, ckpt, td.target_train.num_classes, lc.seed);
    manifest.add_input(ckpt);
  } else {
    models::ModelSpec spec = model_spec_from(cfg, td.target_train, td.target_train.num_classes);
    model = models::build_model(spec, derive_seed(lc.seed, "model"));
    model = models::reinit_head(model, spec.num_classes, models::HeadInit::kSeeded,
                                derive_seed(lc.seed, "head_init"));
  }
  for (const auto& file : td.input_files) manifest.add_input(file);

  trainer::TrainPlan base_plan = plan_from(cfg, opt, lc.seed, "time");
  base_plan.epochs = 1;
  cfg.ensure_all_known(kAllKnownKeys);

  struct Row {
    std::string attack, peft;
    double median_sec = 0;
    uint64_t input_grads = 0, param_grads = 0, batches = 0;
  };
  std::vector<Row> rows;

  for (const auto& attack : attack_names) {
    for (const auto& peft : peft_names) {
      trainer::TrainPlan plan = base_plan;
      plan.peft = models::peft_from_string(peft);
      plan.attack = attack == "pgd" ? attacks::AttackSpec::pgd(eps, pgd_steps)
                                    : (attack == "fgsm_ri" ? attacks::AttackSpec::fgsm_ri(eps, 0)
                                                           : attacks::AttackSpec::fgsm(eps));
      plan.seed = derive_seed(lc.seed, "time:" + attack + ":" + peft);

      Row row;
      row.attack = attack;
      row.peft = peft;
      row.batches = data::batches(td.target_train, plan.batch_size).size();

      std::vector<double> times;
      for (int r = 0; r <= repeats; ++r) {  // r = 0 is the warm-up
        models::Model m = model;
        trainer::OptimizerState state =
            trainer::make_optimizer_state(m, models::trainable_set(m, plan.peft));
        attacks::reset_grad_counters();
        trainer::EpochRecord rec = adv_train_epoch(m, td.target_train, plan, 0, state);
        if (r == 0) {
          row.input_grads = attacks::grad_counters().input_grads;
          row.param_grads = attacks::grad_counters().param_grads;
        } else {
          times.push_back(rec.wall_time_sec);
        }
      }
      std::sort(times.begin(), times.end());
      row.median_sec = times[times.size() / 2];
      rows.push_back(row);
    }
  }
  attacks::reset_grad_counters();

  auto pgd_row = [&](const std::string& peft) -> const Row* {
    for (const auto& r : rows)
      if (r.attack == "pgd" && r.peft == peft) return &r;
    return nullptr;
  };

  const fs::path out = ensure_out_dir(opt);
  std::ofstream f(out / "timing.csv");
  f << "#schema aftlab.timing.v1\n";
  f << "attack,peft,median_epoch_sec,grad_calls_per_batch,param_grads_per_batch,"
       "fgsm_over_pgd_time_pct,grad_call_ratio\n";
  for (const auto& r : rows) {
    const uint64_t per_batch = r.input_grads / r.batches + r.param_grads / r.batches;
    f << r.attack << ',' << r.peft << ',' << g17(r.median_sec) << ',' << per_batch << ','
      << r.param_grads / r.batches << ',';
    const Row* p = r.attack == "fgsm" ? pgd_row(r.peft) : nullptr;
    if (p) f << g17(100.0 * r.median_sec / p->median_sec);
    f << ',';
    if (p)
      f << (r.input_grads / r.batches + r.param_grads / r.batches) << '/'
        << (p->input_grads / p->batches + p->param_grads / p->batches);
    f << "\n";
  }
  f.close();

  manifest.resolved_config = cfg.resolved();
  manifest.outputs = {"timing.csv"};
  manifest.wall_clock_sec =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  manifest.write(out.string());
  return 0;
}

// ---- report --------------------------------------------------------------------

int cmd_report(const Options& opt) {
  if (opt.out_dir.empty()) throw ConfigError("--out is required");
  const fs::path dir = opt.out_dir;
  std::ostringstream report;

  if (fs::exists(dir / "summary.csv")) {
    CsvTable t = read_csv(dir / "summary.csv");
    const int c_eps = col_index(t, "eps"), c_attack = col_index(t, "attack"),
              c_peft = col_index(t, "peft"), c_nat = col_index(t, "peak_nat_acc"),
              c_racc = col_index(t, "peak_racc"), c_overfit = col_index(t, "overfit");
    report << "== sweep: peak accuracy per (eps, attack, peft) ==\n";
    char line[256];
    std::snprintf(line, sizeof(line), "%-8s %-8s %-14s %-10s %-10s %-8s\n", "eps", "attack",
                  "peft", "NAcc", "RAcc", "overfit");
    report << line;
    double diff_sum = 0;
    int diff_count = 0;
    for (const auto& row : t.rows) {
      std::snprintf(line, sizeof(line), "%-8s %-8s %-14s %-10.4f %-10.4f %-8s\n",
                    row[c_eps].c_str(), row[c_attack].c_str(), row[c_peft].c_str(),
                    std::atof(row[c_nat].c_str()), std::atof(row[c_racc].c_str()),
                    row[c_overfit].c_str());
      report << line;
      const int c_diff = col_index(t, "racc_diff_fgsm_minus_pgd");
      if (!row[c_diff].empty()) {
        diff_sum += std::atof(row[c_diff].c_str());
        ++diff_count;
      }
    }
    if (diff_count > 0) {
      std::snprintf(line, sizeof(line), "Average diff. (FGSM - PGD robust acc): %+.4f\n",
                    diff_sum / diff_count);
      report << line << "\n";
    }
  }

  if (fs::exists(dir / "timing.csv")) {
    CsvTable t = read_csv(dir / "timing.csv");
    const int c_attack = col_index(t, "attack"), c_peft = col_index(t, "peft"),
              c_sec = col_index(t, "median_epoch_sec"),
              c_pct = col_index(t, "fgsm_over_pgd_time_pct"),
              c_ratio = col_index(t, "grad_call_ratio");
    report << "== timing: median epoch seconds ==\n";
    char line[256];
    std::snprintf(line, sizeof(line), "%-8s %-14s %-14s %-14s %-10s\n", "attack", "peft",
                  "epoch_sec", "FGSM/PGD %", "grads");
    report << line;
    for (const auto& row : t.rows) {
      std::snprintf(line, sizeof(line), "%-8s %-14s %-14.4f %-14s %-10s\n",
                    row[c_attack].c_str(), row[c_peft].c_str(), std::atof(row[c_sec].c_str()),
                    row[c_pct].empty() ? "-" : row[c_pct].c_str(), row[c_ratio].c_str());
      report << line;
    }
    report << "\n";
  }

  if (fs::exists(dir / "similarity.csv")) {
    CsvTable t = read_csv(dir / "similarity.csv");
    const int c_eps = col_index(t, "eps"), c_cos = col_index(t, "mean_cos"),
              c_loss = col_index(t, "loss_ratio"), c_racc = col_index(t, "racc_ratio");
    report << "== similarity: FGSM vs PGD perturbations ==\n";
    char line[256];
    std::snprintf(line, sizeof(line), "%-8s %-12s %-12s %-12s\n", "eps", "mean_cos",
                  "loss_ratio", "racc_ratio");
    report << line;
    for (const auto& row : t.rows) {
      std::snprintf(line, sizeof(line), "%-8s %-12.4f %-12.4f %-12s\n", row[c_eps].c_str(),
                    std::atof(row[c_cos].c_str()), std::atof(row[c_loss].c_str()),
                    row[c_racc].empty() ? "-" : row[c_racc].c_str());
      report << line;
    }
  }

  if (report.str().empty())
    throw DataError("no summary.csv, timing.csv or similarity.csv in " + dir.string());

  std::ofstream f(dir / "report.txt");
  f << report.str();
  std::cout << report.str();
  return 0;
}

int dispatch(const std::string& command, const Options& opt) {
  try {
    if (command == "pretrain") return cmd_pretrain(opt);
    if (command == "finetune") return cmd_finetune(opt);
    if (command == "sweep") return cmd_sweep(opt);
    if (command == "diagnose") return cmd_diagnose(opt);
    if (command == "time") return cmd_time(opt);
    if (command == "report") return cmd_report(opt);
    std::cerr << "unknown command: " << command << "\n";
    return 2;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace aftlab::cli
