#pragma once

#include <map>
#include <optional>
#include <vector>

#include "aftlab/attacks.hpp"
#include "aftlab/data_io.hpp"
#include "aftlab/models.hpp"
#include "aftlab/trainer.hpp"

namespace aftlab::diag {

struct RobustnessReport {
  double nat_acc = 0;
  double robust_acc = 0;
  attacks::AttackSpec attack;
  int64_t n_examples = 0;
};

struct SimilarityReport {
  double eps_255 = 0;
  double mean_cos = 0;
  double loss_ratio = 0;                // mean FGSM loss / mean PGD loss
  std::optional<double> racc_ratio;     // RAcc_PGD / RAcc_FGSM; absent when RAcc_FGSM = 0
  int64_t n = 0;                        // examples contributing to mean_cos
  int64_t excluded = 0;                 // examples skipped for vanishing perturbations
};

struct OverfitVerdict {
  bool detected = false;
  std::optional<int> onset_epoch;
  double peak_racc = 0;
  double final_racc = 0;
};

struct TimingStats {
  double median_pass_sec = 0;
  uint64_t input_grads_per_pass = 0;
  int repeats = 0;
};

/// Natural and robust accuracy over a test set; the attack runs per batch
/// with batch-indexed seeding, so results are independent of evaluation
/// order and deterministic given the attack seed.
RobustnessReport evaluate(const models::Model& model, const data::ImageDataset& test,
                          const attacks::AttackSpec& attack_spec, int64_t eval_batch_size = 256);

/// Cosine of two flat raw vectors with the same clamp rule as the autodiff
/// op, clipped into [-1,1]. Bitwise-identical inputs give exactly 1.
double cosine(const std::vector<double>& a, const std::vector<double>& b);

/// FGSM-vs-PGD perturbation similarity per ε, each ε evaluated on its own
/// model (the per-ε fine-tuned checkpoints). The PGD spec's step size is
/// rescaled proportionally with ε (preserving the α = ε/4 rule).
std::vector<SimilarityReport> similarity_sweep(
    const std::map<double, const models::Model*>& model_per_eps, const data::ImageDataset& test,
    const attacks::AttackSpec& pgd_spec);

/// Catastrophic-overfitting detector: fires when robust accuracy stays below
/// drop_fraction times the running peak for `window` consecutive epochs.
OverfitVerdict detect_overfit(const trainer::RunHistory& history, double drop_fraction = 0.5,
                              int window = 3);

/// Median wall-clock seconds for one full attack-generation pass over the
/// data, warm-up pass excluded, plus the exact gradient-call count.
TimingStats time_attack(const models::Model& model, const data::ImageDataset& data,
                        const attacks::AttackSpec& spec, int repeats, int64_t batch_size = 128);

}  // namespace aftlab::diag
