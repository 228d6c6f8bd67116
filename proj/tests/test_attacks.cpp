#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "aftlab/attacks.hpp"
#include "aftlab/models.hpp"
#include "test_support.hpp"

using namespace aftlab;
using namespace aftlab::attacks;
using aftlab::models::Arch;
using aftlab::models::build_model;
using aftlab::models::Model;
using aftlab::models::ModelSpec;

namespace {

/// Small nonlinear model over 1x4x4 inputs with a trained-ish head so
/// gradients are nonzero.
Model toy_model(uint64_t seed = 1) {
  ModelSpec spec;
  spec.arch = Arch::kMlp;
  spec.input_channels = 1;
  spec.input_height = 4;
  spec.input_width = 4;
  spec.hidden_widths = {8};
  spec.num_classes = 3;
  Model m = build_model(spec, seed);
  Rng rng(derive_seed(seed, "toyhead"));
  for (auto& v : m.param("head.weight").value.data) v = rng.uniform(-0.8, 0.8);
  return m;
}

struct ToyBatch {
  TensorValue x;
  std::vector<int64_t> y;
};

ToyBatch toy_batch(Rng& rng, int64_t n = 6, double lo = 0.2, double hi = 0.8) {
  ToyBatch b;
  b.x = testsup::rand_tensor(rng, {n, 1, 4, 4}, lo, hi);
  b.y.resize(static_cast<size_t>(n));
  for (auto& v : b.y) v = rng.below(3);
  return b;
}

double linf(const TensorValue& a, const TensorValue& b) {
  double m = 0;
  for (int64_t i = 0; i < a.numel(); ++i)
    m = std::max(m, std::fabs(a.data[i] - b.data[i]));
  return m;
}

}  // namespace

TEST_CASE("fgsm basics") {
  Model m = toy_model();
  Rng rng(10);
  ToyBatch b = toy_batch(rng);

  // zero budget: unchanged bitwise
  CHECK(fgsm(m, b.x, b.y, 0).bitwise_equal(b.x));

  // interior pixel moves by exactly eps/255 in the sign direction
  TensorValue adv = fgsm(m, b.x, b.y, 8);
  TensorValue g = input_gradient(m, b.x, b.y);
  for (int64_t i = 0; i < adv.numel(); ++i) {
    const double d = adv.data[i] - b.x.data[i];
    if (g.data[i] > 0 && b.x.data[i] + 8.0 / 255.0 <= 1.0)
      CHECK(d == doctest::Approx(8.0 / 255.0).epsilon(1e-12));
    if (g.data[i] == 0) CHECK(d == 0.0);
  }

  // domain clamp at the wall
  TensorValue xw = TensorValue::full({1, 1, 4, 4}, 0.99);
  std::vector<int64_t> yw{0};
  TensorValue advw = fgsm(m, xw, yw, 8);
  for (double v : advw.data) CHECK(v <= 1.0);
}

TEST_CASE("fgsm_ri determinism and init statistics") {
  Model m = toy_model();
  Rng rng(20);
  ToyBatch b = toy_batch(rng);

  CHECK(fgsm_ri(m, b.x, b.y, 0, 5).bitwise_equal(b.x));
  TensorValue a1 = fgsm_ri(m, b.x, b.y, 8, 5);
  TensorValue a2 = fgsm_ri(m, b.x, b.y, 8, 5);
  CHECK(a1.bitwise_equal(a2));
  CHECK(!a1.bitwise_equal(fgsm_ri(m, b.x, b.y, 8, 6)));

  // the seeded uniform init: mean within 3 sigma of 0, max |delta0| <= eps
  const double eps = 8.0 / 255.0;
  const int64_t n_draws = 10000;
  Rng draw(derive_seed(5, "attack", 0));
  double sum = 0, max_abs = 0;
  for (int64_t i = 0; i < n_draws; ++i) {
    const double d = (2.0 * draw.uniform01() - 1.0) * eps;
    sum += d;
    max_abs = std::max(max_abs, std::fabs(d));
  }
  const double mean = sum / static_cast<double>(n_draws);
  const double sigma_of_mean = eps / std::sqrt(3.0 * n_draws);
  CHECK(std::fabs(mean) <= 3.0 * sigma_of_mean);
  CHECK(max_abs <= eps);
}

TEST_CASE("pgd degenerates to fgsm bitwise") {
  Model m = toy_model();
  Rng rng(30);
  for (int rep = 0; rep < 20; ++rep) {
    ToyBatch b = toy_batch(rng, 4, 0.0, 1.0);
    const double eps = 1.0 + rng.below(16);
    AttackSpec spec = AttackSpec::pgd(eps, 1, eps);
    CHECK(pgd(m, b.x, b.y, spec).bitwise_equal(fgsm(m, b.x, b.y, eps)));
  }
}

TEST_CASE("containment and projection properties") {
  Model m = toy_model();
  Rng rng(40);
  for (int rep = 0; rep < 10; ++rep) {
    ToyBatch b = toy_batch(rng, 5, 0.0, 1.0);
    const double eps = 0.5 + rng.below(32);
    for (int kind = 0; kind < 3; ++kind) {
      TensorValue adv;
      if (kind == 0) adv = fgsm(m, b.x, b.y, eps);
      else if (kind == 1) adv = fgsm_ri(m, b.x, b.y, eps, rep);
      else adv = pgd(m, b.x, b.y, AttackSpec::pgd(eps, 7, 0, true, rep));
      CHECK(linf(adv, b.x) <= eps / 255.0 + 1e-12);
      for (double v : adv.data) CHECK((v >= 0.0 && v <= 1.0));
    }

    // projection: contained point unchanged, idempotent
    TensorValue inside = b.x;
    for (auto& v : inside.data) v = std::min(std::max(v + 0.001, 0.0), 1.0);
    TensorValue proj = project_linf(inside, b.x, eps);
    if (eps >= 0.3) CHECK(proj.bitwise_equal(inside));  // 0.3/255 > 0.001
    TensorValue wild = testsup::rand_tensor(rng, b.x.shape, -1, 2);
    TensorValue p1 = project_linf(wild, b.x, eps);
    CHECK(project_linf(p1, b.x, eps).bitwise_equal(p1));
  }

  // hand case: x=0.5, x_adv=0.9, eps=8 -> 0.5 + 8/255
  TensorValue x = TensorValue::full({1, 1, 1, 1}, 0.5);
  TensorValue xa = TensorValue::full({1, 1, 1, 1}, 0.9);
  CHECK(project_linf(xa, x, 8).data[0] == 0.5 + 8.0 / 255.0);
}

TEST_CASE("delta") {
  Model m = toy_model();
  Rng rng(50);
  ToyBatch b = toy_batch(rng);
  CHECK(attacks::delta(b.x, b.x).delta.bitwise_equal(TensorValue::zeros(b.x.shape)));

  const double eps = 8;
  TensorValue advf = fgsm(m, b.x, b.y, eps);
  Perturbation d = attacks::delta(advf, b.x);
  for (int64_t i = 0; i < d.delta.numel(); ++i) {
    const double mag = std::fabs(d.delta.data[i]);
    const bool at_wall = advf.data[i] == 0.0 || advf.data[i] == 1.0;
    CHECK((mag == 0.0 || at_wall || mag == doctest::Approx(eps / 255.0).epsilon(1e-12)));
  }

  TensorValue advp = pgd(m, b.x, b.y, AttackSpec::pgd(eps, 7));
  CHECK(linf(advp, b.x) <= eps / 255.0 + 1e-12);

  TensorValue wrong = TensorValue::zeros({2, 1, 4, 4});
  CHECK_THROWS_AS(attacks::delta(wrong, b.x), std::invalid_argument);
}

TEST_CASE("attack purity: parameters bitwise unchanged") {
  Model m = toy_model();
  Model before = m;
  Rng rng(60);
  ToyBatch b = toy_batch(rng);
  fgsm(m, b.x, b.y, 8);
  fgsm_ri(m, b.x, b.y, 8, 1);
  pgd(m, b.x, b.y, AttackSpec::pgd(8, 7));
  CHECK(m.bitwise_equal_params(before));
}

TEST_CASE("gradient call accounting") {
  Model m = toy_model();
  Rng rng(70);
  ToyBatch b = toy_batch(rng);

  reset_grad_counters();
  fgsm(m, b.x, b.y, 8);
  CHECK(grad_counters().input_grads == 1);

  reset_grad_counters();
  pgd(m, b.x, b.y, AttackSpec::pgd(8, 7));
  CHECK(grad_counters().input_grads == 7);

  reset_grad_counters();
  pgd(m, b.x, b.y, AttackSpec::pgd(8, 10));
  CHECK(grad_counters().input_grads == 10);
  reset_grad_counters();
}

namespace {

/// Binary linear-softmax model in d dimensions: the loss is convex in x and
/// monotone in the margin, so the exact box maximum sits at the vertex
/// sign(w_1 - w_0) and FGSM finds it in one step.
Model binary_linear_model(Rng& rng, int64_t d) {
  ModelSpec spec;
  spec.arch = Arch::kMlp;
  spec.input_channels = 1;
  spec.input_height = 1;
  spec.input_width = d;
  spec.hidden_widths = {static_cast<int64_t>(d)};
  spec.num_classes = 2;
  Model m = build_model(spec, 123);
  // make fc1 the identity (weights I, bias 0) so logits = x*head_w + head_b
  TensorValue& w1 = m.param("fc1.weight").value;
  for (auto& v : w1.data) v = 0;
  for (int64_t i = 0; i < d; ++i) w1.data[i * d + i] = 1.0;
  for (auto& v : m.param("head.weight").value.data) v = rng.uniform(-1, 1);
  for (auto& v : m.param("head.bias").value.data) v = rng.uniform(-0.2, 0.2);
  return m;
}

double model_loss(const Model& m, const TensorValue& x, const std::vector<int64_t>& y) {
  aftlab::autodiff::Tape t;
  t.grad_enabled = false;
  auto bind = m.forward(t, t.leaf(x, false));
  return aftlab::autodiff::cross_entropy(bind.logits, y).value().data[0];
}

}  // namespace

TEST_CASE("vertex-enumeration oracle on a linear-softmax model") {
  // relu(x) = x for x >= 0, so with identity weights the model is affine on
  // positive inputs; keep the box inside the positive orthant.
  const int64_t d = 10;
  Rng rng(90);
  const double eps = 8.0;
  const double e01 = eps / 255.0;

  for (int rep = 0; rep < 10; ++rep) {
    Model m = binary_linear_model(rng, d);
    TensorValue x = testsup::rand_tensor(rng, {1, 1, 1, d}, 0.3, 0.7);
    std::vector<int64_t> y{rng.below(2)};

    // exhaustive 2^d vertex maximum
    double best = -1e300;
    for (int mask = 0; mask < (1 << d); ++mask) {
      TensorValue v = x;
      for (int64_t i = 0; i < d; ++i)
        v.data[i] += (mask >> i & 1) ? e01 : -e01;
      best = std::max(best, model_loss(m, v, y));
    }

    const double loss_fgsm = model_loss(m, fgsm(m, x, y, eps), y);
    const double loss_pgd = model_loss(m, pgd(m, x, y, AttackSpec::pgd(eps, 7)), y);
    CHECK(std::fabs(loss_fgsm - best) <= 1e-9);
    CHECK(std::fabs(loss_pgd - best) <= 1e-9);
  }
}

TEST_CASE("monotone attack strength in k on the linear model") {
  const int64_t d = 10;
  Rng rng(91);
  Model m = binary_linear_model(rng, d);
  TensorValue x = testsup::rand_tensor(rng, {4, 1, 1, d}, 0.3, 0.7);
  std::vector<int64_t> y;
  for (int i = 0; i < 4; ++i) y.push_back(rng.below(2));

  double prev = -1e300;
  for (int k : {1, 3, 7, 10}) {
    const double loss = model_loss(m, pgd(m, x, y, AttackSpec::pgd(8, k, 2)), y);
    CHECK(loss >= prev - 1e-9);
    prev = loss;
  }
}
