#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "aftlab/models.hpp"
#include "aftlab/tensor.hpp"

namespace aftlab::attacks {

enum class AttackKind : uint8_t { kFgsm, kFgsmRi, kPgd };

const char* to_string(AttackKind kind);
AttackKind attack_kind_from_string(const std::string& s);

/// Declarative attack description. ε and α are in 1/255 pixel units and
/// converted to the [0,1] domain exactly once, inside the attack loops.
struct AttackSpec {
  AttackKind kind = AttackKind::kFgsm;
  double eps_255 = 8.0;
  int steps = 1;
  double step_size_255 = 8.0;
  bool rand_init = false;
  uint64_t seed = 0;

  static AttackSpec fgsm(double eps_255);
  static AttackSpec fgsm_ri(double eps_255, uint64_t seed);
  /// step_size_255 <= 0 selects the default α = ε/4.
  static AttackSpec pgd(double eps_255, int steps, double step_size_255 = 0.0,
                        bool rand_init = false, uint64_t seed = 0);

  void validate() const;  // enforces the per-kind invariants
  std::string describe() const;
};

struct Perturbation {
  TensorValue delta;
};

/// Per-thread counters of gradient evaluations; the machine-independent basis
/// of the timing claims. Attack loops bump input_grads, the trainer bumps
/// param_grads.
struct GradCounters {
  uint64_t input_grads = 0;
  uint64_t param_grads = 0;
};
GradCounters& grad_counters();
void reset_grad_counters();

/// Mean cross-entropy gradient w.r.t. the input batch. Counts as one
/// input-gradient evaluation.
TensorValue input_gradient(const models::Model& model, const TensorValue& x,
                           const std::vector<int64_t>& y);

/// x_adv = clamp01(x + ε/255 · sign(∇_x L)); sign(0) = 0.
TensorValue fgsm(const models::Model& model, const TensorValue& x, const std::vector<int64_t>& y,
                 double eps_255);

/// Random start δ0 ~ U(-ε,ε), step α = 1.25ε along the sign at x+δ0, then
/// clip to the ε-ball and the pixel domain.
TensorValue fgsm_ri(const models::Model& model, const TensorValue& x,
                    const std::vector<int64_t>& y, double eps_255, uint64_t seed);

/// Iterated signed ascent with projection onto the ε-ball around x
/// intersected with [0,1], per step and once more at the end.
TensorValue pgd(const models::Model& model, const TensorValue& x, const std::vector<int64_t>& y,
                const AttackSpec& spec);

/// Dispatch on spec.kind. `batch_index` decorrelates per-batch randomness:
/// the effective seed is derive_seed(spec.seed, "attack", batch_index).
TensorValue attack(const models::Model& model, const TensorValue& x,
                   const std::vector<int64_t>& y, const AttackSpec& spec,
                   uint64_t batch_index = 0);

/// Per-coordinate clip of x_adv into [x - ε/255, x + ε/255] ∩ [0,1].
TensorValue project_linf(const TensorValue& x_adv, const TensorValue& x, double eps_255);

Perturbation delta(const TensorValue& x_adv, const TensorValue& x);

}  // namespace aftlab::attacks
