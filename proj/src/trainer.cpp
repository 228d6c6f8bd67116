#include "aftlab/trainer.hpp"

#include <chrono>
#include <cmath>
#include <stdexcept>
#include <unordered_set>

#include "aftlab/diagnostics.hpp"
#include "aftlab/rng.hpp"

namespace aftlab::trainer {

namespace ad = autodiff;

void TrainPlan::validate() const {
  if (epochs < 0) throw std::invalid_argument("TrainPlan: epochs must be non-negative");
  if (batch_size < 1) throw std::invalid_argument("TrainPlan: batch_size must be positive");
  if (lr <= 0) throw std::invalid_argument("TrainPlan: lr must be positive");
  if (momentum < 0 || momentum >= 1)
    throw std::invalid_argument("TrainPlan: momentum must be in [0,1)");
  if (weight_decay < 0) throw std::invalid_argument("TrainPlan: weight_decay must be >= 0");
  if (gradalign_lambda < 0)
    throw std::invalid_argument("TrainPlan: gradalign_lambda must be >= 0");
  attack.validate();
  eval_attack.validate();
}

OptimizerState make_optimizer_state(const models::Model& model,
                                    const std::vector<std::string>& trainable) {
  OptimizerState state;
  for (const std::string& name : trainable)
    state.velocity[name] = TensorValue::zeros(model.param(name).value.shape);
  return state;
}

double lr_at_epoch(const TrainPlan& plan, int epoch) {
  if (epoch < 0 || epoch >= plan.epochs) throw std::invalid_argument("lr_at_epoch: bad epoch");
  const int m1 = plan.epochs / 4;
  const int m2 = 3 * plan.epochs / 4;
  double lr = plan.lr;
  if (epoch >= m1) lr *= 0.1;
  if (epoch >= m2) lr *= 0.1;
  return lr;
}

void sgd_momentum_step(models::Model& model, const std::map<std::string, TensorValue>& grads,
                       OptimizerState& state, double lr, double momentum, double weight_decay) {
  for (auto& [name, v] : state.velocity) {
    auto it = grads.find(name);
    if (it == grads.end())
      throw std::invalid_argument("sgd_momentum_step: missing gradient for " + name);
    TensorValue& theta = model.param(name).value;
    const TensorValue& g = it->second;
    for (int64_t i = 0; i < theta.numel(); ++i) {
      v.data[i] = momentum * v.data[i] + (g.data[i] + weight_decay * theta.data[i]);
      theta.data[i] -= lr * v.data[i];
    }
  }
}

namespace {

/// Builds the two loss forwards and the penalty on `tape`. Bumps the
/// input-gradient counter by two (the two recorded backward passes).
ad::Var append_gradalign(ad::Tape& tape, const models::Model& model,
                         const std::unordered_set<std::string>* grad_params,
                         const TensorValue& x, const std::vector<int64_t>& y, double eps_255,
                         uint64_t seed, models::Model::Binding* clean_out,
                         models::Model::Binding* shifted_out) {
  const double eps = eps_255 / 255.0;
  Rng rng(seed);
  TensorValue shifted = x;
  for (auto& v : shifted.data) v += (2.0 * rng.uniform01() - 1.0) * eps;

  ad::Var x_clean = tape.leaf(x, true);
  models::Model::Binding b1 = model.forward(tape, x_clean, grad_params);
  ad::Var loss1 = ad::cross_entropy(b1.logits, y);
  auto g1 = ad::backward_graph(loss1, std::vector<ad::Var>{x_clean});

  ad::Var x_shift = tape.leaf(shifted, true);
  models::Model::Binding b2 = model.forward(tape, x_shift, grad_params);
  ad::Var loss2 = ad::cross_entropy(b2.logits, y);
  auto g2 = ad::backward_graph(loss2, std::vector<ad::Var>{x_shift});

  attacks::grad_counters().input_grads += 2;

  const int64_t batch = x.shape[0];
  const int64_t dim = x.numel() / batch;
  ad::Var flat1 = ad::reshape(g1.at(x_clean.id), {batch, dim});
  ad::Var flat2 = ad::reshape(g2.at(x_shift.id), {batch, dim});
  if (clean_out) *clean_out = b1;
  if (shifted_out) *shifted_out = b2;
  return ad::mean_row_cos_distance(flat1, flat2);
}

std::unordered_set<std::string> as_set(const std::vector<std::string>& names) {
  return {names.begin(), names.end()};
}

double batch_accuracy(const TensorValue& logits, const std::vector<int64_t>& labels) {
  const int64_t n = logits.shape[0], k = logits.shape[1];
  int64_t correct = 0;
  for (int64_t i = 0; i < n; ++i) {
    int64_t best = 0;
    for (int64_t j = 1; j < k; ++j)
      if (logits.data[i * k + j] > logits.data[i * k + best]) best = j;
    if (best == labels[static_cast<size_t>(i)]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(n);
}

}  // namespace

std::map<std::string, TensorValue> GradAlignPenalty::theta_grad(
    const std::vector<std::string>& names) const {
  std::vector<ad::Var> wrt;
  for (const std::string& n : names) {
    wrt.push_back(clean_binding.var(n));
    wrt.push_back(shifted_binding.var(n));
  }
  auto grads = ad::backward_values(penalty, wrt);
  std::map<std::string, TensorValue> out;
  for (const std::string& n : names) {
    TensorValue sum = grads.at(clean_binding.var(n).id);
    const TensorValue& other = grads.at(shifted_binding.var(n).id);
    for (int64_t i = 0; i < sum.numel(); ++i) sum.data[i] += other.data[i];
    out[n] = std::move(sum);
  }
  return out;
}

GradAlignPenalty gradalign_penalty(const models::Model& model, const TensorValue& x,
                                   const std::vector<int64_t>& y, double eps_255, uint64_t seed) {
  GradAlignPenalty result;
  result.tape = std::make_unique<ad::Tape>();
  result.penalty = append_gradalign(*result.tape, model, nullptr, x, y, eps_255, seed,
                                    &result.clean_binding, &result.shifted_binding);
  return result;
}

EpochRecord adv_train_epoch(models::Model& model, const data::ImageDataset& train_data,
                            const TrainPlan& plan, int epoch, OptimizerState& state) {
  const auto trainable_names = models::trainable_set(model, plan.peft);
  const auto trainable = as_set(trainable_names);
  for (const auto& [name, v] : state.velocity)
    if (!trainable.count(name))
      throw std::invalid_argument("optimizer state key outside trainable set: " + name);

  const double lr = lr_at_epoch(plan, epoch);
  auto batch_list = data::batches(train_data, plan.batch_size,
                                  derive_seed(plan.seed, "shuffle", static_cast<uint64_t>(epoch)));

  const auto t0 = std::chrono::steady_clock::now();
  double loss_sum = 0.0;
  double acc_sum = 0.0;
  int64_t example_count = 0;

  for (size_t bi = 0; bi < batch_list.size(); ++bi) {
    const data::Batch& batch = batch_list[bi];
    attacks::AttackSpec atk = plan.attack;
    atk.seed = derive_seed(plan.seed, "attack_epoch", static_cast<uint64_t>(epoch));
    TensorValue x_adv = attacks::attack(model, batch.images, batch.labels, atk, bi);

    ad::Tape tape;
    ad::Var xn = tape.leaf(x_adv, false);
    models::Model::Binding bind = model.forward(tape, xn, &trainable);
    ad::Var objective = ad::cross_entropy(bind.logits, batch.labels);
    models::Model::Binding pen_clean, pen_shift;
    const bool use_gradalign = plan.gradalign_lambda > 0.0;
    if (use_gradalign) {
      ad::Var pen = append_gradalign(
          tape, model, &trainable, batch.images, batch.labels, plan.attack.eps_255,
          derive_seed(plan.seed, "gradalign", static_cast<uint64_t>(epoch), bi), &pen_clean,
          &pen_shift);
      objective = ad::add(objective, ad::scale_add(pen, plan.gradalign_lambda, 0.0));
    }

    std::vector<ad::Var> wrt;
    for (const std::string& name : trainable_names) {
      wrt.push_back(bind.var(name));
      if (use_gradalign) {
        wrt.push_back(pen_clean.var(name));
        wrt.push_back(pen_shift.var(name));
      }
    }
    auto raw = ad::backward_values(objective, wrt);
    ++attacks::grad_counters().param_grads;

    std::map<std::string, TensorValue> grads;
    for (const std::string& name : trainable_names) {
      TensorValue g = raw.at(bind.var(name).id);
      if (use_gradalign) {
        const TensorValue& a = raw.at(pen_clean.var(name).id);
        const TensorValue& b = raw.at(pen_shift.var(name).id);
        for (int64_t i = 0; i < g.numel(); ++i) g.data[i] += a.data[i] + b.data[i];
      }
      grads[name] = std::move(g);
    }
    sgd_momentum_step(model, grads, state, lr, plan.momentum, plan.weight_decay);

    const auto n = static_cast<int64_t>(batch.labels.size());
    loss_sum += objective.value().data[0] * static_cast<double>(n);
    acc_sum += batch_accuracy(bind.logits.value(), batch.labels) * static_cast<double>(n);
    example_count += n;
  }

  EpochRecord rec;
  rec.epoch = epoch;
  rec.lr_used = lr;
  rec.train_loss = loss_sum / static_cast<double>(example_count);
  rec.train_attack_acc = acc_sum / static_cast<double>(example_count);
  rec.wall_time_sec =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return rec;
}

RunHistory train(const models::Model& model, const data::ImageDataset& train_data,
                 const data::ImageDataset& test_data, const TrainPlan& plan) {
  plan.validate();
  train_data.validate();
  test_data.validate();

  RunHistory history;
  models::Model current = model;
  history.best_checkpoint = current;

  const auto trainable = models::trainable_set(current, plan.peft);
  OptimizerState state = make_optimizer_state(current, trainable);
  const data::ImageDataset eval_set = data::take_prefix(test_data, plan.eval_subset);

  for (int epoch = 0; epoch < plan.epochs; ++epoch) {
    EpochRecord rec = adv_train_epoch(current, train_data, plan, epoch, state);
    diag::RobustnessReport rep = diag::evaluate(current, eval_set, plan.eval_attack);
    rec.nat_acc = rep.nat_acc;
    rec.robust_acc_pgd10 = rep.robust_acc;
    history.records.push_back(rec);
    if (history.best_epoch < 0 ||
        rec.robust_acc_pgd10 > history.records[static_cast<size_t>(history.best_epoch)]
                                   .robust_acc_pgd10) {
      history.best_epoch = epoch;
      history.best_checkpoint = current;
    }
  }

  if (history.best_epoch >= 0) {
    // Re-verify the peak: evaluating the stored checkpoint must reproduce the
    // recorded robust accuracy exactly.
    diag::RobustnessReport check = diag::evaluate(history.best_checkpoint, eval_set,
                                                  plan.eval_attack);
    if (check.robust_acc !=
        history.records[static_cast<size_t>(history.best_epoch)].robust_acc_pgd10)
      throw std::runtime_error("best-checkpoint re-evaluation mismatch");
  }
  return history;
}

std::pair<RunHistory, RunHistory> roli(const models::Model& model,
                                       const data::ImageDataset& train_data,
                                       const data::ImageDataset& test_data,
                                       const TrainPlan& plan_lp, const TrainPlan& plan_ft) {
  if (plan_lp.peft != models::PeftMode::kLinearProbe)
    throw std::invalid_argument("roli: stage 1 must use linear probing");
  if (model.spec().num_classes != train_data.num_classes)
    throw std::invalid_argument("roli: model and data class counts disagree");

  RunHistory stage1 = train(model, train_data, test_data, plan_lp);
  const models::Model& start =
      stage1.best_epoch >= 0 ? stage1.best_checkpoint : model;
  RunHistory stage2 = train(start, train_data, test_data, plan_ft);
  return {std::move(stage1), std::move(stage2)};
}

}  // namespace aftlab::trainer
