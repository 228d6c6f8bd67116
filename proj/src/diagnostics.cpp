#include "aftlab/diagnostics.hpp"

#include <chrono>
#include <cmath>
#include <stdexcept>
#include <unordered_set>

#include "aftlab/autodiff.hpp"

namespace aftlab::diag {

namespace ad = autodiff;

namespace {

const std::unordered_set<std::string> kNoParams;

std::vector<int64_t> predictions(const models::Model& model, const TensorValue& x) {
  ad::Tape tape;
  tape.grad_enabled = false;
  ad::Var xn = tape.leaf(x, false);
  const TensorValue& logits = model.forward(tape, xn, &kNoParams).logits.value();
  const int64_t n = logits.shape[0], k = logits.shape[1];
  std::vector<int64_t> out(static_cast<size_t>(n));
  for (int64_t i = 0; i < n; ++i) {
    int64_t best = 0;
    for (int64_t j = 1; j < k; ++j)
      if (logits.data[i * k + j] > logits.data[i * k + best]) best = j;
    out[static_cast<size_t>(i)] = best;
  }
  return out;
}

/// Per-example cross-entropy losses (stabilized), no gradients involved.
std::vector<double> per_example_losses(const models::Model& model, const TensorValue& x,
                                       const std::vector<int64_t>& y) {
  ad::Tape tape;
  tape.grad_enabled = false;
  ad::Var xn = tape.leaf(x, false);
  const TensorValue& logits = model.forward(tape, xn, &kNoParams).logits.value();
  const int64_t n = logits.shape[0], k = logits.shape[1];
  std::vector<double> out(static_cast<size_t>(n));
  for (int64_t i = 0; i < n; ++i) {
    double m = logits.data[i * k];
    for (int64_t j = 1; j < k; ++j) m = std::max(m, logits.data[i * k + j]);
    double z = 0;
    for (int64_t j = 0; j < k; ++j) z += std::exp(logits.data[i * k + j] - m);
    out[static_cast<size_t>(i)] =
        std::log(z) + m - logits.data[i * k + y[static_cast<size_t>(i)]];
  }
  return out;
}

}  // namespace

RobustnessReport evaluate(const models::Model& model, const data::ImageDataset& test,
                          const attacks::AttackSpec& attack_spec, int64_t eval_batch_size) {
  if (test.size() == 0) throw std::invalid_argument("evaluate: empty test set");
  RobustnessReport rep;
  rep.attack = attack_spec;
  rep.n_examples = test.size();

  int64_t nat_correct = 0, rob_correct = 0;
  auto batch_list = data::batches(test, eval_batch_size);
  for (size_t bi = 0; bi < batch_list.size(); ++bi) {
    const data::Batch& b = batch_list[bi];
    const auto nat_pred = predictions(model, b.images);
    TensorValue x_adv = attacks::attack(model, b.images, b.labels, attack_spec, bi);
    const auto rob_pred = predictions(model, x_adv);
    for (size_t i = 0; i < b.labels.size(); ++i) {
      nat_correct += nat_pred[i] == b.labels[i];
      rob_correct += rob_pred[i] == b.labels[i];
    }
  }
  rep.nat_acc = static_cast<double>(nat_correct) / static_cast<double>(test.size());
  rep.robust_acc = static_cast<double>(rob_correct) / static_cast<double>(test.size());
  return rep;
}

double cosine(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) throw std::invalid_argument("cosine: length mismatch");
  double dot = 0, a2 = 0, b2 = 0;
  for (size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    a2 += a[i] * a[i];
    b2 += b[i] * b[i];
  }
  const double tol2 = ad::kCosNormTolerance * ad::kCosNormTolerance;
  const double c = dot / std::sqrt(std::max(a2 * b2, tol2));
  return std::min(std::max(c, -1.0), 1.0);
}

std::vector<SimilarityReport> similarity_sweep(
    const std::map<double, const models::Model*>& model_per_eps, const data::ImageDataset& test,
    const attacks::AttackSpec& pgd_spec) {
  if (pgd_spec.kind != attacks::AttackKind::kPgd)
    throw std::invalid_argument("similarity_sweep: pgd_spec must be a pgd attack");
  std::vector<SimilarityReport> out;

  for (const auto& [eps, model] : model_per_eps) {
    // Preserve the step-size rule (alpha proportional to eps) when rescaling.
    double alpha = 0.0;
    if (pgd_spec.eps_255 > 0 && pgd_spec.step_size_255 > 0)
      alpha = pgd_spec.step_size_255 * (eps / pgd_spec.eps_255);
    const attacks::AttackSpec pgd_eps =
        attacks::AttackSpec::pgd(eps, pgd_spec.steps, alpha, pgd_spec.rand_init, pgd_spec.seed);

    SimilarityReport rep;
    rep.eps_255 = eps;
    double cos_sum = 0;
    double loss_fgsm_sum = 0, loss_pgd_sum = 0;
    int64_t correct_fgsm = 0, correct_pgd = 0;

    auto batch_list = data::batches(test, 256);
    for (size_t bi = 0; bi < batch_list.size(); ++bi) {
      const data::Batch& b = batch_list[bi];
      const TensorValue adv_f = attacks::fgsm(*model, b.images, b.labels, eps);
      const TensorValue adv_p = attacks::attack(*model, b.images, b.labels, pgd_eps, bi);
      const TensorValue df = attacks::delta(adv_f, b.images).delta;
      const TensorValue dp = attacks::delta(adv_p, b.images).delta;

      const auto loss_f = per_example_losses(*model, adv_f, b.labels);
      const auto loss_p = per_example_losses(*model, adv_p, b.labels);
      const auto pred_f = predictions(*model, adv_f);
      const auto pred_p = predictions(*model, adv_p);

      const int64_t n = b.images.shape[0];
      const int64_t dim = b.images.numel() / n;
      for (int64_t i = 0; i < n; ++i) {
        std::vector<double> vf(df.data.begin() + i * dim, df.data.begin() + (i + 1) * dim);
        std::vector<double> vp(dp.data.begin() + i * dim, dp.data.begin() + (i + 1) * dim);
        double nf = 0, np = 0;
        for (double v : vf) nf += v * v;
        for (double v : vp) np += v * v;
        if (std::sqrt(nf) < ad::kCosNormTolerance || std::sqrt(np) < ad::kCosNormTolerance) {
          ++rep.excluded;
        } else {
          cos_sum += cosine(vf, vp);
          ++rep.n;
        }
        loss_fgsm_sum += loss_f[static_cast<size_t>(i)];
        loss_pgd_sum += loss_p[static_cast<size_t>(i)];
        correct_fgsm += pred_f[static_cast<size_t>(i)] == b.labels[static_cast<size_t>(i)];
        correct_pgd += pred_p[static_cast<size_t>(i)] == b.labels[static_cast<size_t>(i)];
      }
    }

    rep.mean_cos = rep.n > 0 ? cos_sum / static_cast<double>(rep.n) : 0.0;
    rep.loss_ratio = loss_pgd_sum > 0 ? loss_fgsm_sum / loss_pgd_sum : 0.0;
    if (correct_fgsm > 0)
      rep.racc_ratio = static_cast<double>(correct_pgd) / static_cast<double>(correct_fgsm);
    out.push_back(rep);
  }
  return out;
}

OverfitVerdict detect_overfit(const trainer::RunHistory& history, double drop_fraction,
                              int window) {
  if (history.records.empty()) throw std::invalid_argument("detect_overfit: empty history");
  OverfitVerdict verdict;
  double peak = 0;
  int streak = 0;
  for (size_t i = 0; i < history.records.size(); ++i) {
    const double racc = history.records[i].robust_acc_pgd10;
    peak = std::max(peak, racc);
    if (racc < drop_fraction * peak) {
      ++streak;
      if (streak >= window && !verdict.detected) {
        verdict.detected = true;
        verdict.onset_epoch = static_cast<int>(i) - window + 1;
      }
    } else {
      streak = 0;
    }
  }
  verdict.peak_racc = peak;
  verdict.final_racc = history.records.back().robust_acc_pgd10;
  return verdict;
}

TimingStats time_attack(const models::Model& model, const data::ImageDataset& data,
                        const attacks::AttackSpec& spec, int repeats, int64_t batch_size) {
  if (repeats < 3) throw std::invalid_argument("time_attack: repeats must be >= 3");
  auto batch_list = data::batches(data, batch_size);

  auto one_pass = [&]() {
    for (size_t bi = 0; bi < batch_list.size(); ++bi)
      attacks::attack(model, batch_list[bi].images, batch_list[bi].labels, spec, bi);
  };

  const uint64_t before = attacks::grad_counters().input_grads;
  one_pass();  // warm-up, also measures the per-pass gradient-call count
  TimingStats stats;
  stats.input_grads_per_pass = attacks::grad_counters().input_grads - before;
  stats.repeats = repeats;

  std::vector<double> times;
  for (int r = 0; r < repeats; ++r) {
    const auto t0 = std::chrono::steady_clock::now();
    one_pass();
    times.push_back(std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
  }
  std::sort(times.begin(), times.end());
  stats.median_pass_sec = times[times.size() / 2];
  return stats;
}

}  // namespace aftlab::diag
