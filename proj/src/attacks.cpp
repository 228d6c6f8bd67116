#include "aftlab/attacks.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "aftlab/autodiff.hpp"
#include "aftlab/rng.hpp"

namespace aftlab::attacks {

namespace ad = autodiff;

const char* to_string(AttackKind kind) {
  switch (kind) {
    case AttackKind::kFgsm: return "fgsm";
    case AttackKind::kFgsmRi: return "fgsm_ri";
    case AttackKind::kPgd: return "pgd";
  }
  return "?";
}

AttackKind attack_kind_from_string(const std::string& s) {
  if (s == "fgsm") return AttackKind::kFgsm;
  if (s == "fgsm_ri") return AttackKind::kFgsmRi;
  if (s == "pgd") return AttackKind::kPgd;
  throw std::invalid_argument("unknown attack kind: " + s);
}

AttackSpec AttackSpec::fgsm(double eps_255) {
  AttackSpec s;
  s.kind = AttackKind::kFgsm;
  s.eps_255 = eps_255;
  s.steps = 1;
  s.step_size_255 = eps_255;
  s.rand_init = false;
  return s;
}

AttackSpec AttackSpec::fgsm_ri(double eps_255, uint64_t seed) {
  AttackSpec s;
  s.kind = AttackKind::kFgsmRi;
  s.eps_255 = eps_255;
  s.steps = 1;
  s.step_size_255 = 1.25 * eps_255;
  s.rand_init = true;
  s.seed = seed;
  return s;
}

AttackSpec AttackSpec::pgd(double eps_255, int steps, double step_size_255, bool rand_init,
                           uint64_t seed) {
  AttackSpec s;
  s.kind = AttackKind::kPgd;
  s.eps_255 = eps_255;
  s.steps = steps;
  s.step_size_255 = step_size_255 > 0.0 ? step_size_255 : eps_255 / 4.0;
  s.rand_init = rand_init;
  s.seed = seed;
  return s;
}

void AttackSpec::validate() const {
  if (eps_255 < 0) throw std::invalid_argument("AttackSpec: eps must be non-negative");
  switch (kind) {
    case AttackKind::kFgsm:
      if (steps != 1 || rand_init || step_size_255 != eps_255)
        throw std::invalid_argument("AttackSpec: fgsm requires steps=1, alpha=eps, no rand init");
      break;
    case AttackKind::kFgsmRi:
      if (steps != 1 || !rand_init || step_size_255 != 1.25 * eps_255)
        throw std::invalid_argument(
            "AttackSpec: fgsm_ri requires steps=1, alpha=1.25*eps, rand init");
      break;
    case AttackKind::kPgd:
      if (steps < 1) throw std::invalid_argument("AttackSpec: pgd requires steps >= 1");
      if (step_size_255 <= 0 && eps_255 > 0)
        throw std::invalid_argument("AttackSpec: pgd requires a positive step size");
      break;
  }
}

std::string AttackSpec::describe() const {
  char buf[128];
  std::snprintf(buf, sizeof(buf), "%s(eps=%g/255, steps=%d, alpha=%g/255, rand_init=%d)",
                to_string(kind), eps_255, steps, step_size_255, rand_init ? 1 : 0);
  return buf;
}

GradCounters& grad_counters() {
  thread_local GradCounters counters;
  return counters;
}

void reset_grad_counters() { grad_counters() = GradCounters{}; }

namespace {

const std::unordered_set<std::string> kNoParams;

double sign(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

TensorValue clamp01(TensorValue v) {
  for (auto& x : v.data) x = std::min(std::max(x, 0.0), 1.0);
  return v;
}

}  // namespace

TensorValue input_gradient(const models::Model& model, const TensorValue& x,
                           const std::vector<int64_t>& y) {
  ad::Tape tape;
  ad::Var xn = tape.leaf(x, true);
  auto bind = model.forward(tape, xn, &kNoParams);
  ad::Var loss = ad::cross_entropy(bind.logits, y);
  auto grads = ad::backward_values(loss, std::vector<ad::Var>{xn});
  ++grad_counters().input_grads;
  return grads.at(xn.id);
}

TensorValue fgsm(const models::Model& model, const TensorValue& x, const std::vector<int64_t>& y,
                 double eps_255) {
  if (eps_255 < 0) throw std::invalid_argument("fgsm: eps must be non-negative");
  const double eps = eps_255 / 255.0;
  TensorValue g = input_gradient(model, x, y);
  TensorValue adv = x;
  for (int64_t i = 0; i < adv.numel(); ++i) adv.data[i] += eps * sign(g.data[i]);
  return clamp01(std::move(adv));
}

TensorValue fgsm_ri(const models::Model& model, const TensorValue& x,
                    const std::vector<int64_t>& y, double eps_255, uint64_t seed) {
  if (eps_255 < 0) throw std::invalid_argument("fgsm_ri: eps must be non-negative");
  const double eps = eps_255 / 255.0;
  const double alpha = 1.25 * eps;
  Rng rng(seed);
  TensorValue delta0 = TensorValue::zeros(x.shape);
  for (auto& v : delta0.data) v = (2.0 * rng.uniform01() - 1.0) * eps;

  TensorValue x0 = x;
  for (int64_t i = 0; i < x0.numel(); ++i) x0.data[i] += delta0.data[i];
  TensorValue g = input_gradient(model, x0, y);

  TensorValue adv = x;
  for (int64_t i = 0; i < adv.numel(); ++i) {
    double d = delta0.data[i] + alpha * sign(g.data[i]);
    d = std::min(std::max(d, -eps), eps);
    adv.data[i] += d;
  }
  return clamp01(std::move(adv));
}

TensorValue project_linf(const TensorValue& x_adv, const TensorValue& x, double eps_255) {
  if (!x_adv.same_shape(x)) throw std::invalid_argument("project_linf: shape mismatch");
  const double eps = eps_255 / 255.0;
  TensorValue out = x_adv;
  for (int64_t i = 0; i < out.numel(); ++i) {
    const double lo = std::max(x.data[i] - eps, 0.0);
    const double hi = std::min(x.data[i] + eps, 1.0);
    out.data[i] = std::min(std::max(out.data[i], lo), hi);
  }
  return out;
}

TensorValue pgd(const models::Model& model, const TensorValue& x, const std::vector<int64_t>& y,
                const AttackSpec& spec) {
  if (spec.kind != AttackKind::kPgd) throw std::invalid_argument("pgd: spec.kind must be pgd");
  spec.validate();
  const double alpha = spec.step_size_255 / 255.0;

  TensorValue adv = x;
  if (spec.rand_init) {
    const double eps = spec.eps_255 / 255.0;
    Rng rng(spec.seed);
    for (auto& v : adv.data) v += (2.0 * rng.uniform01() - 1.0) * eps;
    adv = project_linf(adv, x, spec.eps_255);
  }
  for (int step = 0; step < spec.steps; ++step) {
    TensorValue g = input_gradient(model, adv, y);
    for (int64_t i = 0; i < adv.numel(); ++i) adv.data[i] += alpha * sign(g.data[i]);
    adv = project_linf(adv, x, spec.eps_255);
  }
  return project_linf(adv, x, spec.eps_255);
}

TensorValue attack(const models::Model& model, const TensorValue& x,
                   const std::vector<int64_t>& y, const AttackSpec& spec, uint64_t batch_index) {
  spec.validate();
  const uint64_t batch_seed = derive_seed(spec.seed, "attack", batch_index);
  switch (spec.kind) {
    case AttackKind::kFgsm:
      return fgsm(model, x, y, spec.eps_255);
    case AttackKind::kFgsmRi:
      return fgsm_ri(model, x, y, spec.eps_255, batch_seed);
    case AttackKind::kPgd: {
      AttackSpec s = spec;
      s.seed = batch_seed;
      return pgd(model, x, y, s);
    }
  }
  throw std::logic_error("unreachable");
}

Perturbation delta(const TensorValue& x_adv, const TensorValue& x) {
  if (!x_adv.same_shape(x)) throw std::invalid_argument("delta: shape mismatch");
  TensorValue d = x_adv;
  for (int64_t i = 0; i < d.numel(); ++i) d.data[i] -= x.data[i];
  return Perturbation{std::move(d)};
}

}  // namespace aftlab::attacks
