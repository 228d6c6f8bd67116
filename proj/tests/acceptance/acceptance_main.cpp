// Acceptance suite: runs every acceptance criterion end to end and prints
// one PASS/FAIL line per criterion. Exit code is the number of failures.
//
// The desk-scale experiment parameters live in desk.hpp and are documented
// in docs/cookbook.md together with the calibration notes.

#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "aftlab/autodiff.hpp"
#include "aftlab/diagnostics.hpp"
#include "aftlab/rng.hpp"
#include "desk.hpp"
#include "test_support.hpp"

using namespace aftlab;
using namespace desk;
namespace ad = aftlab::autodiff;
using attacks::AttackSpec;
using models::HeadInit;
using models::Model;
using models::PeftMode;
using testsup::fd_grad;
using testsup::max_rel_err;
using testsup::rand_tensor;
using trainer::RunHistory;
using trainer::TrainPlan;

namespace {

int g_failures = 0;
int g_index = 0;

void report(const std::string& name, bool pass, const std::string& detail, double seconds) {
  ++g_index;
  if (!pass) ++g_failures;
  std::printf("[%2d/12] %s  %-38s %s  (%.1fs)\n", g_index, pass ? "PASS" : "FAIL", name.c_str(),
              detail.c_str(), seconds);
  std::fflush(stdout);
}

void run_criterion(const std::string& name,
                   const std::function<std::pair<bool, std::string>()>& body) {
  const auto t0 = std::chrono::steady_clock::now();
  bool pass = false;
  std::string detail;
  try {
    auto [p, d] = body();
    pass = p;
    detail = d;
  } catch (const std::exception& e) {
    detail = std::string("exception: ") + e.what();
  }
  report(name, pass, detail,
         std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
}

std::string fmt(const char* f, ...) {
  char buf[256];
  va_list args;
  va_start(args, f);
  std::vsnprintf(buf, sizeof(buf), f, args);
  va_end(args);
  return buf;
}

// ---- criterion 1: first-order gradients vs finite differences ----------------

std::pair<bool, std::string> criterion_autodiff_first_order() {
  Rng rng(101);
  double worst = 0;
  int instances = 0;

  auto check = [&](const std::function<double(const TensorValue&)>& f, const TensorValue& x,
                   const TensorValue& analytic) {
    worst = std::max(worst, max_rel_err(analytic, fd_grad(f, x)));
    ++instances;
  };

  auto unary = [&](auto build, std::vector<int64_t> shape, double lo, double hi) {
    for (int rep = 0; rep < 100; ++rep) {
      TensorValue xv = rand_tensor(rng, shape, lo, hi);
      ad::Tape t;
      ad::Var x = t.leaf(xv, true);
      auto grads = ad::backward_values(ad::sum(build(x)), std::vector<ad::Var>{x});
      check(
          [&](const TensorValue& p) {
            ad::Tape tt;
            return ad::sum(build(tt.leaf(p, false))).value().data[0];
          },
          xv, grads.at(x.id));
    }
  };

  unary([](ad::Var x) { return ad::scale_add(x, 1.3, 0.2); }, {6}, -1, 1);
  unary([](ad::Var x) { return ad::relu(x); }, {6}, 0.2, 1);  // away from the kink
  unary([](ad::Var x) { return ad::softplus(x); }, {6}, -2, 2);
  unary([](ad::Var x) { return ad::sigmoid(x); }, {6}, -2, 2);
  unary([](ad::Var x) { return ad::exp_op(x); }, {6}, -1, 1);
  unary([](ad::Var x) { return ad::log_op(x); }, {6}, 0.3, 2);
  unary([](ad::Var x) { return ad::recip(x); }, {6}, 0.5, 2);
  unary([](ad::Var x) { return ad::sqrt_op(x); }, {6}, 0.5, 2);
  unary([](ad::Var x) { return ad::clamp_min(x, 0.0); }, {6}, 0.3, 1);
  unary([](ad::Var x) { return ad::transpose2d(x); }, {3, 4}, -1, 1);
  unary([](ad::Var x) { return ad::reshape(x, {4, 3}); }, {3, 4}, -1, 1);
  unary([](ad::Var x) { return ad::sum_rows(x); }, {3, 4}, -1, 1);
  unary([](ad::Var x) { return ad::broadcast_cols(x, 4); }, {3}, -1, 1);
  std::vector<int64_t> sel_labels{2, 0, 1};
  unary([&](ad::Var x) { return ad::select_label(x, sel_labels); }, {3, 3}, -1, 1);

  // binary ops, matmul, conv2d, bias_add: weighted-sum outputs
  for (int rep = 0; rep < 100; ++rep) {
    TensorValue av = rand_tensor(rng, {5}, -1, 1);
    TensorValue bv = rand_tensor(rng, {5}, -1, 1);
    ad::Tape t;
    ad::Var a = t.leaf(av, true);
    ad::Var b = t.leaf(bv, true);
    ad::Var out = ad::sum(ad::mul(ad::add(a, b), ad::sub(a, b)));
    auto grads = ad::backward_values(out, std::vector<ad::Var>{a, b});
    auto f = [&](const TensorValue& pa, const TensorValue& pb) {
      ad::Tape tt;
      ad::Var x = tt.leaf(pa, false), y = tt.leaf(pb, false);
      return ad::sum(ad::mul(ad::add(x, y), ad::sub(x, y))).value().data[0];
    };
    check([&](const TensorValue& p) { return f(p, bv); }, av, grads.at(a.id));
    check([&](const TensorValue& p) { return f(av, p); }, bv, grads.at(b.id));
  }

  for (int rep = 0; rep < 100; ++rep) {
    TensorValue av = rand_tensor(rng, {3, 4}, -1, 1);
    TensorValue bv = rand_tensor(rng, {4, 2}, -1, 1);
    ad::Tape t;
    ad::Var a = t.leaf(av, true);
    ad::Var b = t.leaf(bv, true);
    auto grads = ad::backward_values(ad::sum(ad::matmul(a, b)), std::vector<ad::Var>{a, b});
    auto f = [&](const TensorValue& pa, const TensorValue& pb) {
      ad::Tape tt;
      return ad::sum(ad::matmul(tt.leaf(pa, false), tt.leaf(pb, false))).value().data[0];
    };
    check([&](const TensorValue& p) { return f(p, bv); }, av, grads.at(a.id));
    check([&](const TensorValue& p) { return f(av, p); }, bv, grads.at(b.id));
  }

  for (int rep = 0; rep < 100; ++rep) {
    TensorValue xv = rand_tensor(rng, {1, 2, 4, 4}, -1, 1);
    TensorValue wv = rand_tensor(rng, {2, 2, 2, 2}, -1, 1);
    TensorValue pick = rand_tensor(rng, {1, 2, 3, 3}, -1, 1);
    ad::Tape t;
    ad::Var x = t.leaf(xv, true);
    ad::Var w = t.leaf(wv, true);
    ad::Var out = ad::sum(ad::mul(ad::conv2d(x, w), t.leaf(pick, false)));
    auto grads = ad::backward_values(out, std::vector<ad::Var>{x, w});
    auto f = [&](const TensorValue& px, const TensorValue& pw) {
      ad::Tape tt;
      return ad::sum(ad::mul(ad::conv2d(tt.leaf(px, false), tt.leaf(pw, false)),
                             tt.leaf(pick, false)))
          .value()
          .data[0];
    };
    check([&](const TensorValue& p) { return f(p, wv); }, xv, grads.at(x.id));
    check([&](const TensorValue& p) { return f(xv, p); }, wv, grads.at(w.id));
  }

  for (int rep = 0; rep < 100; ++rep) {
    TensorValue xv = rand_tensor(rng, {3, 4}, -1, 1);
    TensorValue bv = rand_tensor(rng, {4}, -1, 1);
    TensorValue pick = rand_tensor(rng, {3, 4}, -1, 1);
    ad::Tape t;
    ad::Var x = t.leaf(xv, true);
    ad::Var b = t.leaf(bv, true);
    ad::Var out = ad::sum(ad::mul(ad::bias_add(x, b), t.leaf(pick, false)));
    auto grads = ad::backward_values(out, std::vector<ad::Var>{x, b});
    auto f = [&](const TensorValue& px, const TensorValue& pb) {
      ad::Tape tt;
      return ad::sum(ad::mul(ad::bias_add(tt.leaf(px, false), tt.leaf(pb, false)),
                             tt.leaf(pick, false)))
          .value()
          .data[0];
    };
    check([&](const TensorValue& p) { return f(p, bv); }, xv, grads.at(x.id));
    check([&](const TensorValue& p) { return f(xv, p); }, bv, grads.at(b.id));
  }

  for (int rep = 0; rep < 100; ++rep) {
    TensorValue lv = rand_tensor(rng, {3, 5}, -2, 2);
    std::vector<int64_t> lab{rng.below(5), rng.below(5), rng.below(5)};
    ad::Tape t;
    ad::Var l = t.leaf(lv, true);
    auto grads = ad::backward_values(ad::cross_entropy(l, lab), std::vector<ad::Var>{l});
    check(
        [&](const TensorValue& p) {
          ad::Tape tt;
          return ad::cross_entropy(tt.leaf(p, false), lab).value().data[0];
        },
        lv, grads.at(l.id));
  }

  for (int rep = 0; rep < 100; ++rep) {
    TensorValue av = rand_tensor(rng, {7}, -2, 2);
    TensorValue bv = rand_tensor(rng, {7}, -2, 2);
    ad::Tape t;
    ad::Var a = t.leaf(av, true);
    ad::Var b = t.leaf(bv, false);
    auto grads = ad::backward_values(ad::cos_sim(a, b), std::vector<ad::Var>{a});
    check(
        [&](const TensorValue& p) {
          ad::Tape tt;
          return ad::cos_sim(tt.leaf(p, false), tt.leaf(bv, false)).value().data[0];
        },
        av, grads.at(a.id));
  }

  return {worst <= 1e-5, fmt("%d instances, max rel err %.2e", instances, worst)};
}

// ---- criterion 2: second-order gradient-alignment oracle ---------------------

std::pair<bool, std::string> criterion_gradalign_second_order() {
  Rng rng(202);
  double worst = 0;
  int instances = 0;
  while (instances < 20) {
    models::ModelSpec spec;
    spec.arch = models::Arch::kMlp;
    spec.input_channels = 1;
    spec.input_height = 2;
    spec.input_width = 3;
    spec.hidden_widths = {5};
    spec.num_classes = 3;
    spec.activation = ad::Act::kSoftplus;
    Model m = models::build_model(spec, rng.next_u64());
    for (auto& p : m.mutable_params())
      for (auto& v : p.value.data) v = rng.uniform(-0.7, 0.7);

    TensorValue x = rand_tensor(rng, {2, 1, 2, 3}, 0.1, 0.9);
    std::vector<int64_t> y{rng.below(3), rng.below(3)};
    const double eps = 8.0;
    const uint64_t seed = rng.next_u64();

    trainer::GradAlignPenalty pen = trainer::gradalign_penalty(m, x, y, eps, seed);
    auto names = models::trainable_set(m, PeftMode::kFull);
    auto analytic = pen.theta_grad(names);
    for (const std::string& name : names) {
      auto f = [&](const TensorValue& probe) {
        Model mm = m;
        mm.param(name).value = probe;
        return trainer::gradalign_penalty(mm, x, y, eps, seed).value();
      };
      worst = std::max(worst, max_rel_err(analytic.at(name), fd_grad(f, m.param(name).value)));
    }
    ++instances;
  }
  return {worst <= 1e-4, fmt("%d instances, max rel err %.2e", instances, worst)};
}

// ---- criteria 3 and 4: attack degeneration and containment -------------------

Model toy_attack_model(uint64_t seed) {
  models::ModelSpec spec;
  spec.arch = models::Arch::kMlp;
  spec.input_channels = 1;
  spec.input_height = 4;
  spec.input_width = 4;
  spec.hidden_widths = {8};
  spec.num_classes = 3;
  Model m = models::build_model(spec, seed);
  Rng rng(derive_seed(seed, "head"));
  for (auto& v : m.param("head.weight").value.data) v = rng.uniform(-0.8, 0.8);
  return m;
}

std::pair<bool, std::string> criterion_degeneration() {
  Rng rng(303);
  Model m = toy_attack_model(7);
  int64_t checked = 0;
  for (int batch = 0; batch < 20; ++batch) {
    TensorValue x = rand_tensor(rng, {50, 1, 4, 4}, 0, 1);
    std::vector<int64_t> y(50);
    for (auto& v : y) v = rng.below(3);
    const double eps = 0.5 + static_cast<double>(rng.below(32));
    TensorValue f = attacks::fgsm(m, x, y, eps);
    TensorValue p = attacks::pgd(m, x, y, AttackSpec::pgd(eps, 1, eps));
    if (!f.bitwise_equal(p)) return {false, fmt("bitwise mismatch at eps=%g", eps)};
    checked += 50;
  }
  return {true, fmt("%lld inputs bitwise equal", static_cast<long long>(checked))};
}

std::pair<bool, std::string> criterion_containment() {
  Rng rng(404);
  Model m = toy_attack_model(8);
  int64_t checked = 0;
  double worst_overshoot = 0;
  for (int batch = 0; batch < 25; ++batch) {
    TensorValue x = rand_tensor(rng, {400, 1, 4, 4}, 0, 1);
    std::vector<int64_t> y(400);
    for (auto& v : y) v = rng.below(3);
    const double eps = rng.uniform(0, 32);
    TensorValue adv;
    switch (batch % 3) {
      case 0: adv = attacks::fgsm(m, x, y, eps); break;
      case 1: adv = attacks::fgsm_ri(m, x, y, eps, rng.next_u64()); break;
      default:
        adv = attacks::pgd(m, x, y, AttackSpec::pgd(eps, 7, 0, true, rng.next_u64()));
    }
    for (int64_t i = 0; i < adv.numel(); ++i) {
      const double d = std::fabs(adv.data[i] - x.data[i]);
      worst_overshoot = std::max(worst_overshoot, d - eps / 255.0);
      if (d > eps / 255.0 + 1e-12) return {false, fmt("linf violated by %.3e", d - eps / 255.0)};
      if (adv.data[i] < 0.0 || adv.data[i] > 1.0) return {false, "pixel outside [0,1]"};
    }
    checked += 400;
  }
  return {true, fmt("%lld pairs contained (worst slack %.1e)", static_cast<long long>(checked),
                    worst_overshoot)};
}

// ---- criterion 5: vertex-enumeration oracle ----------------------------------

std::pair<bool, std::string> criterion_vertex_oracle() {
  const int64_t d = 10;
  Rng rng(505);
  double worst = 0;
  for (int rep = 0; rep < 50; ++rep) {
    models::ModelSpec spec;
    spec.arch = models::Arch::kMlp;
    spec.input_channels = 1;
    spec.input_height = 1;
    spec.input_width = d;
    spec.hidden_widths = {d};
    spec.num_classes = 2;
    Model m = models::build_model(spec, 1000 + rep);
    TensorValue& w1 = m.param("fc1.weight").value;
    for (auto& v : w1.data) v = 0;
    for (int64_t i = 0; i < d; ++i) w1.data[i * d + i] = 1.0;  // identity feature map
    for (auto& v : m.param("head.weight").value.data) v = rng.uniform(-1, 1);
    for (auto& v : m.param("head.bias").value.data) v = rng.uniform(-0.2, 0.2);

    TensorValue x = rand_tensor(rng, {1, 1, 1, d}, 0.3, 0.7);
    std::vector<int64_t> y{rng.below(2)};
    const double eps = 8.0, e01 = eps / 255.0;

    auto loss_at = [&](const TensorValue& v) {
      ad::Tape t;
      t.grad_enabled = false;
      auto bind = m.forward(t, t.leaf(v, false));
      return ad::cross_entropy(bind.logits, y).value().data[0];
    };

    double best = -1e300;
    for (int mask = 0; mask < (1 << d); ++mask) {
      TensorValue v = x;
      for (int64_t i = 0; i < d; ++i) v.data[i] += (mask >> i & 1) ? e01 : -e01;
      best = std::max(best, loss_at(v));
    }
    worst = std::max(worst, std::fabs(loss_at(attacks::fgsm(m, x, y, eps)) - best));
    worst = std::max(
        worst, std::fabs(loss_at(attacks::pgd(m, x, y, AttackSpec::pgd(eps, 7))) - best));
  }
  return {worst <= 1e-9, fmt("50 instances, max |loss - vertex max| = %.2e", worst)};
}

// ---- criterion 6: PEFT masking and trainable counts ---------------------------

std::pair<bool, std::string> criterion_peft_masking() {
  Task task = blob_task(606);
  Model base = models::insert_adapters(mlp_backbone(task, 606), 8);
  // non-degenerate head so every mode actually trains
  base = models::reinit_head(base, task.source_train.num_classes, HeadInit::kSeeded,
                             derive_seed(606, "head"));

  auto scalars = [&](PeftMode mode) {
    int64_t n = 0;
    for (const auto& name : models::trainable_set(base, mode))
      n += base.param(name).value.numel();
    return n;
  };
  if (!(scalars(PeftMode::kLinearProbe) < scalars(PeftMode::kBitfit) &&
        scalars(PeftMode::kBitfit) < scalars(PeftMode::kFull) &&
        scalars(PeftMode::kLinearProbe) < scalars(PeftMode::kAdapter) &&
        scalars(PeftMode::kAdapter) < scalars(PeftMode::kFull)))
    return {false, "trainable-count ordering violated"};

  for (PeftMode mode : {PeftMode::kFull, PeftMode::kLinearProbe, PeftMode::kBitfit,
                        PeftMode::kAdapter}) {
    TrainPlan p = plan(2, AttackSpec::fgsm(8), 606, models::to_string(mode));
    p.peft = mode;
    RunHistory h = trainer::train(base, task.source_train, task.source_test, p);
    const auto trainable = models::trainable_set(base, mode);
    for (const auto& param : base.params()) {
      const bool is_trainable =
          std::find(trainable.begin(), trainable.end(), param.name) != trainable.end();
      const bool changed =
          !h.best_checkpoint.param(param.name).value.bitwise_equal(param.value);
      if (!is_trainable && changed)
        return {false, fmt("%s modified %s", models::to_string(mode), param.name.c_str())};
    }
  }
  return {true, fmt("4 modes, counts %lld < %lld < %lld / adapter %lld",
                    static_cast<long long>(scalars(PeftMode::kLinearProbe)),
                    static_cast<long long>(scalars(PeftMode::kBitfit)),
                    static_cast<long long>(scalars(PeftMode::kFull)),
                    static_cast<long long>(scalars(PeftMode::kAdapter)))};
}

// ---- criterion 7: schedule and optimizer trace --------------------------------

std::pair<bool, std::string> criterion_schedule_and_sgd() {
  TrainPlan p;
  p.epochs = 40;
  p.lr = 0.05;
  if (trainer::lr_at_epoch(p, 0) != 0.05) return {false, "epoch 0 lr"};
  if (std::fabs(trainer::lr_at_epoch(p, 10) - 0.005) > 1e-15) return {false, "epoch 10 lr"};
  if (std::fabs(trainer::lr_at_epoch(p, 30) - 0.0005) > 1e-15) return {false, "epoch 30 lr"};
  if (trainer::lr_at_epoch(p, 9) != 0.05) return {false, "epoch 9 lr"};
  if (std::fabs(trainer::lr_at_epoch(p, 29) - 0.005) > 1e-15) return {false, "epoch 29 lr"};

  models::ModelSpec spec;
  spec.arch = models::Arch::kMlp;
  spec.input_channels = 1;
  spec.input_height = 1;
  spec.input_width = 2;
  spec.hidden_widths = {2};
  spec.num_classes = 2;
  Model m = models::build_model(spec, 0);
  m.param("head.bias").value = TensorValue({2}, {1.0, 1.0});
  trainer::OptimizerState state = trainer::make_optimizer_state(m, {"head.bias"});
  std::map<std::string, TensorValue> grads;
  grads["head.bias"] = TensorValue({2}, {1.0, 1.0});
  trainer::sgd_momentum_step(m, grads, state, 0.1, 0.9, 0.0);
  const double step1 = m.param("head.bias").value.data[0];
  trainer::sgd_momentum_step(m, grads, state, 0.1, 0.9, 0.0);
  const double step2 = m.param("head.bias").value.data[0];
  if (std::fabs(step1 - 0.9) > 1e-15 || std::fabs(step2 - 0.71) > 1e-15)
    return {false, fmt("sgd trace %.17g, %.17g", step1, step2)};
  return {true, fmt("lr drops exact; sgd trace 0.9 -> 0.71 (err %.1e)",
                    std::fabs(step2 - 0.71))};
}

// ---- criteria 8 and 9: similarity trend and stability dichotomy ---------------

struct LpSweepResult {
  std::vector<diag::SimilarityReport> reports;
  bool any_overfit = false;
  std::string overfit_detail;
};

LpSweepResult lp_sweep(uint64_t seed) {
  Task task = blob_task(seed);
  RunHistory pre = pretrain_blob_backbone(task, seed);

  std::map<double, Model> tuned;
  LpSweepResult out;
  for (double eps : {2.0, 4.0, 8.0, 16.0, 24.0, 32.0}) {
    Model start = models::reinit_head(pre.best_checkpoint, task.target_train.num_classes,
                                      HeadInit::kZero);
    TrainPlan lp = plan(10, AttackSpec::fgsm(eps), seed, ("lp" + std::to_string(eps)).c_str());
    lp.peft = PeftMode::kLinearProbe;
    RunHistory h = trainer::train(start, task.target_train, task.target_test, lp);
    if (diag::detect_overfit(h).detected) {
      out.any_overfit = true;
      out.overfit_detail = fmt("overfit fired at eps=%g", eps);
    }
    tuned.emplace(eps, h.best_checkpoint);
  }

  std::map<double, const Model*> per_eps;
  for (auto& [e, m] : tuned) per_eps[e] = &m;
  out.reports = diag::similarity_sweep(per_eps, task.target_test, AttackSpec::pgd(8, 7));
  return out;
}

/// Decreasing with at most one adjacent inversion of magnitude <= 0.02.
bool decreasing_with_tolerance(const std::vector<double>& v, double* worst_inversion) {
  int inversions = 0;
  *worst_inversion = 0;
  for (size_t i = 1; i < v.size(); ++i) {
    if (v[i] > v[i - 1]) {
      ++inversions;
      *worst_inversion = std::max(*worst_inversion, v[i] - v[i - 1]);
    }
  }
  return inversions <= 1 && *worst_inversion <= 0.02;
}

std::pair<bool, std::string> criterion_similarity_trend(const LpSweepResult& sweep) {
  std::vector<double> cos, loss;
  for (const auto& r : sweep.reports) {
    cos.push_back(r.mean_cos);
    loss.push_back(r.loss_ratio);
  }
  double cos_inv = 0, loss_inv = 0;
  const bool cos_ok = decreasing_with_tolerance(cos, &cos_inv);
  const bool loss_ok = decreasing_with_tolerance(loss, &loss_inv);
  return {cos_ok && loss_ok,
          fmt("cos %.3f->%.3f (inv %.3f), loss_ratio %.4f->%.4f (inv %.4f)", cos.front(),
              cos.back(), cos_inv, loss.front(), loss.back(), loss_inv)};
}

std::pair<bool, std::string> criterion_stability_dichotomy(const LpSweepResult& sweep) {
  // (a) FGSM from scratch on the desk CNN at large eps collapses
  auto [train, test] = cnn_set(1);
  models::ModelSpec spec;
  spec.arch = models::Arch::kCnn;
  spec.input_channels = 1;
  spec.input_height = 12;
  spec.input_width = 12;
  spec.conv_channels = {8, 16};
  spec.kernel_size = 3;
  spec.num_classes = 5;
  Model cnn = models::build_model(spec, derive_seed(1, "cnn"));

  TrainPlan p = plan(30, AttackSpec::fgsm(48), 1, "scratch");
  RunHistory h = trainer::train(cnn, train, test, p);
  diag::OverfitVerdict v = diag::detect_overfit(h);
  const bool collapse = v.detected && v.final_racc < 0.2 * v.peak_racc;
  if (!collapse)
    return {false, fmt("cnn@48 detected=%d peak %.3f final %.3f", v.detected ? 1 : 0,
                       v.peak_racc, v.final_racc)};

  // (b) FGSM linear probing from the robust checkpoint never overfits
  if (sweep.any_overfit) return {false, sweep.overfit_detail};
  return {true, fmt("cnn@48 collapses (peak %.3f -> final %.3f); LP stable for all eps",
                    v.peak_racc, v.final_racc)};
}

// ---- criterion 10: timing and gradient-call counters --------------------------

std::pair<bool, std::string> criterion_timing() {
  Task task = blob_task(1010);
  RunHistory pre = pretrain_blob_backbone(task, 1010);
  Model model = models::reinit_head(pre.best_checkpoint, task.target_train.num_classes,
                                    HeadInit::kSeeded, derive_seed(1010, "head"));

  auto median_epoch_sec = [&](const AttackSpec& atk, uint64_t* grads_per_batch) {
    TrainPlan p = plan(1, atk, 1010, "time");
    std::vector<double> times;
    for (int rep = 0; rep <= 5; ++rep) {  // first pass is the warm-up
      Model m = model;
      trainer::OptimizerState state =
          trainer::make_optimizer_state(m, models::trainable_set(m, p.peft));
      attacks::reset_grad_counters();
      trainer::EpochRecord rec = trainer::adv_train_epoch(m, task.target_train, p, 0, state);
      if (rep == 0) {
        const auto batches = data::batches(task.target_train, p.batch_size).size();
        *grads_per_batch = (attacks::grad_counters().input_grads +
                            attacks::grad_counters().param_grads) /
                           batches;
      } else {
        times.push_back(rec.wall_time_sec);
      }
    }
    std::sort(times.begin(), times.end());
    return times[times.size() / 2];
  };

  uint64_t fgsm_calls = 0, pgd_calls = 0;
  const double t_fgsm = median_epoch_sec(AttackSpec::fgsm(8), &fgsm_calls);
  const double t_pgd = median_epoch_sec(AttackSpec::pgd(8, 7), &pgd_calls);
  const double ratio = t_fgsm / t_pgd;
  const bool counters_ok = fgsm_calls == 2 && pgd_calls == 8;
  return {ratio <= 0.4 && counters_ok,
          fmt("fgsm %.4fs pgd-7 %.4fs ratio %.2f; calls/batch %llu:%llu", t_fgsm, t_pgd, ratio,
              static_cast<unsigned long long>(fgsm_calls),
              static_cast<unsigned long long>(pgd_calls))};
}

// ---- criterion 11: robust linear initialization direction ---------------------

std::pair<bool, std::string> criterion_roli() {
  std::vector<double> direct_peaks, roli_peaks;
  for (uint64_t seed : {1, 2, 3}) {
    Task task = span_task(seed);
    TrainPlan pre = plan(14, AttackSpec::pgd(16, 7), seed, "pretrain");
    Model backbone = mlp_backbone(task, seed, {256, 128});
    RunHistory pre_hist = trainer::train(backbone, task.source_train, task.source_test, pre);
    Model start = models::reinit_head(pre_hist.best_checkpoint,
                                      task.target_train.num_classes, HeadInit::kZero);

    TrainPlan direct = plan(30, AttackSpec::fgsm(16), seed, "direct");
    direct.batch_size = 8;
    RunHistory dh = trainer::train(start, task.target_train, task.target_test, direct);
    direct_peaks.push_back(peak_racc(dh));

    TrainPlan lp = plan(10, AttackSpec::fgsm(16), seed, "roli_lp");
    lp.peft = PeftMode::kLinearProbe;
    lp.batch_size = 8;
    TrainPlan ft = plan(20, AttackSpec::fgsm(16), seed, "roli_ft");
    ft.lr = 0.005;
    ft.batch_size = 8;
    auto [s1, s2] = trainer::roli(start, task.target_train, task.target_test, lp, ft);
    roli_peaks.push_back(peak_racc(s2));
  }
  const double direct_med = median3(direct_peaks[0], direct_peaks[1], direct_peaks[2]);
  const double roli_med = median3(roli_peaks[0], roli_peaks[1], roli_peaks[2]);
  return {roli_med > direct_med,
          fmt("median peak racc: roli %.3f vs direct %.3f (seeds r=%.2f/%.2f/%.2f "
              "d=%.2f/%.2f/%.2f)",
              roli_med, direct_med, roli_peaks[0], roli_peaks[1], roli_peaks[2],
              direct_peaks[0], direct_peaks[1], direct_peaks[2])};
}

// ---- criterion 12: regularizer parity at stability -----------------------------

std::pair<bool, std::string> criterion_variant_parity() {
  std::vector<double> fgsm_peaks, ri_peaks, ga_peaks;
  std::vector<double> fgsm_times, ga_times;
  for (uint64_t seed : {1, 2, 3}) {
    Task task = blob_task(seed);
    RunHistory pre = pretrain_blob_backbone(task, seed);
    Model start = models::reinit_head(pre.best_checkpoint, task.target_train.num_classes,
                                      HeadInit::kSeeded, derive_seed(seed, "head"));

    auto run_variant = [&](const AttackSpec& atk, double lambda, const char* tag,
                           std::vector<double>* times) {
      TrainPlan p = plan(10, atk, seed, tag);
      p.gradalign_lambda = lambda;
      RunHistory h = trainer::train(start, task.target_train, task.target_test, p);
      if (times) {
        double total = 0;
        for (const auto& r : h.records) total += r.wall_time_sec;
        times->push_back(total / static_cast<double>(h.records.size()));
      }
      return peak_racc(h);
    };

    fgsm_peaks.push_back(run_variant(AttackSpec::fgsm(8), 0, "fgsm", &fgsm_times));
    ri_peaks.push_back(run_variant(AttackSpec::fgsm_ri(8, derive_seed(seed, "ri")), 0, "ri",
                                   nullptr));
    ga_peaks.push_back(run_variant(AttackSpec::fgsm(8), 0.2, "ga", &ga_times));
  }
  const double f = median3(fgsm_peaks[0], fgsm_peaks[1], fgsm_peaks[2]);
  const double r = median3(ri_peaks[0], ri_peaks[1], ri_peaks[2]);
  const double g = median3(ga_peaks[0], ga_peaks[1], ga_peaks[2]);
  const double spread = std::max({f, r, g}) - std::min({f, r, g});
  const double ft = median3(fgsm_times[0], fgsm_times[1], fgsm_times[2]);
  const double gt = median3(ga_times[0], ga_times[1], ga_times[2]);
  const double overhead = gt / ft;
  return {spread <= 0.02 && overhead >= 1.25,
          fmt("median peaks fgsm %.3f ri %.3f ga %.3f (spread %.3f); ga/fgsm time %.2fx", f, r,
              g, spread, overhead)};
}

}  // namespace

int main() {
  std::printf("aftlab acceptance suite\n");
  const auto t0 = std::chrono::steady_clock::now();

  run_criterion("autodiff first-order gradients", criterion_autodiff_first_order);
  run_criterion("gradient-alignment second order", criterion_gradalign_second_order);
  run_criterion("pgd-1 degenerates to fgsm", criterion_degeneration);
  run_criterion("perturbation containment", criterion_containment);
  run_criterion("vertex-enumeration oracle", criterion_vertex_oracle);
  run_criterion("peft masking and counts", criterion_peft_masking);
  run_criterion("lr schedule and sgd trace", criterion_schedule_and_sgd);

  LpSweepResult sweep;  // shared by criteria 8 and 9b, built inside criterion 8
  run_criterion("similarity trend over eps", [&] {
    sweep = lp_sweep(1);
    return criterion_similarity_trend(sweep);
  });
  run_criterion("stability dichotomy", [&] {
    if (sweep.reports.empty()) return std::make_pair(false, std::string("lp sweep unavailable"));
    return criterion_stability_dichotomy(sweep);
  });
  run_criterion("fgsm/pgd timing and counters", criterion_timing);
  run_criterion("robust linear initialization", criterion_roli);
  run_criterion("regularizer parity at stability", criterion_variant_parity);

  const double total = std::chrono::duration<double>(
      std::chrono::steady_clock::now() - t0).count();
  std::printf("%d/12 criteria passed in %.1fs\n", 12 - g_failures, total);
  return g_failures;
}
