#pragma once

#include <map>
#include <memory>
#include <string>
#include <vector>

#include "aftlab/attacks.hpp"
#include "aftlab/data_io.hpp"
#include "aftlab/models.hpp"

namespace aftlab::trainer {

/// Full training configuration. Defaults follow the standard recipe: SGD
/// with lr 0.05, momentum 0.9, weight decay 5e-4, batch size 128, and the
/// learning rate dropped 10x at 1/4 and 3/4 of the epoch budget.
struct TrainPlan {
  int epochs = 10;
  int64_t batch_size = 128;
  double lr = 0.05;
  double momentum = 0.9;
  double weight_decay = 5e-4;
  models::PeftMode peft = models::PeftMode::kFull;
  attacks::AttackSpec attack = attacks::AttackSpec::fgsm(8);
  double gradalign_lambda = 0.0;
  attacks::AttackSpec eval_attack = attacks::AttackSpec::pgd(8, 10);
  uint64_t seed = 0;
  int64_t eval_subset = 0;  // examples used for per-epoch eval; 0 = all

  void validate() const;
};

struct OptimizerState {
  std::map<std::string, TensorValue> velocity;  // keyed by trainable_set exactly
};

OptimizerState make_optimizer_state(const models::Model& model,
                                    const std::vector<std::string>& trainable);

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0;
  double train_attack_acc = 0;
  double nat_acc = 0;
  double robust_acc_pgd10 = 0;
  double wall_time_sec = 0;
  double lr_used = 0;
};

struct RunHistory {
  std::vector<EpochRecord> records;
  int best_epoch = -1;  // argmax robust accuracy, earliest on ties
  models::Model best_checkpoint;
};

/// Base lr times 0.1 per milestone passed; milestones at floor(epochs/4)
/// and floor(3*epochs/4).
double lr_at_epoch(const TrainPlan& plan, int epoch);

/// v <- momentum*v + (g + wd*theta); theta <- theta - lr*v, trainable
/// parameters only. Throws on a missing gradient key.
void sgd_momentum_step(models::Model& model, const std::map<std::string, TensorValue>& grads,
                       OptimizerState& state, double lr, double momentum, double weight_decay);

/// Gradient-alignment penalty 1 - cos(grad_x L(x), grad_x L(x+delta)) with
/// delta ~ U(-eps,eps), flattened per example and averaged over the batch.
/// Owns the tape so callers can differentiate the penalty w.r.t. theta.
struct GradAlignPenalty {
  std::unique_ptr<autodiff::Tape> tape;
  autodiff::Var penalty;
  models::Model::Binding clean_binding;
  models::Model::Binding shifted_binding;

  double value() const { return penalty.value().data[0]; }
  /// d penalty / d theta, summed over the two parameter bindings.
  std::map<std::string, TensorValue> theta_grad(const std::vector<std::string>& names) const;
};

GradAlignPenalty gradalign_penalty(const models::Model& model, const TensorValue& x,
                                   const std::vector<int64_t>& y, double eps_255, uint64_t seed);

/// One adversarial training epoch over shuffled batches: attack, forward on
/// the adversarial batch, optional gradient-alignment term, SGD update.
/// nat/robust accuracy fields of the record are left to the caller.
EpochRecord adv_train_epoch(models::Model& model, const data::ImageDataset& train_data,
                            const TrainPlan& plan, int epoch, OptimizerState& state);

/// Full run: trains for plan.epochs, evaluates natural and robust accuracy
/// after every epoch, tracks the peak-robustness checkpoint, re-verifies it
/// at the end. Deterministic given (plan, seed, data).
RunHistory train(const models::Model& model, const data::ImageDataset& train_data,
                 const data::ImageDataset& test_data, const TrainPlan& plan);

/// Robust linear initialization: adversarial linear probing, then a second
/// fine-tuning stage starting from the stage-1 best checkpoint.
std::pair<RunHistory, RunHistory> roli(const models::Model& model,
                                       const data::ImageDataset& train_data,
                                       const data::ImageDataset& test_data,
                                       const TrainPlan& plan_lp, const TrainPlan& plan_ft);

}  // namespace aftlab::trainer
