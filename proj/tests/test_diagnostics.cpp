#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "aftlab/diagnostics.hpp"
#include "test_support.hpp"

using namespace aftlab;
using namespace aftlab::diag;
using aftlab::attacks::AttackSpec;
using aftlab::models::build_model;
using aftlab::models::Model;
using aftlab::models::ModelSpec;

namespace {

Model probe_model(uint64_t seed, int64_t classes = 4) {
  ModelSpec spec;
  spec.input_channels = 1;
  spec.input_height = 5;
  spec.input_width = 5;
  spec.hidden_widths = {12};
  spec.num_classes = classes;
  Model m = build_model(spec, seed);
  Rng rng(derive_seed(seed, "head"));
  for (auto& v : m.param("head.weight").value.data) v = rng.uniform(-0.6, 0.6);
  return m;
}

data::ImageDataset balanced_data(uint64_t seed, int64_t classes = 4, int64_t per_class = 8) {
  data::SynthSpec spec;
  spec.n_per_class = per_class;
  spec.num_classes = classes;
  spec.height = 5;
  spec.width = 5;
  spec.cluster_separation = 0.6;
  spec.seed = seed;
  return data::synth_clusters(spec);
}

trainer::RunHistory history_from(const std::vector<double>& raccs) {
  trainer::RunHistory h;
  for (size_t i = 0; i < raccs.size(); ++i) {
    trainer::EpochRecord r;
    r.epoch = static_cast<int>(i);
    r.robust_acc_pgd10 = raccs[i];
    h.records.push_back(r);
  }
  return h;
}

}  // namespace

TEST_CASE("evaluate") {
  Model m = probe_model(1);
  data::ImageDataset d = balanced_data(2);

  SUBCASE("zero-budget attack: robust equals natural exactly") {
    RobustnessReport rep = evaluate(m, d, AttackSpec::fgsm(0));
    CHECK(rep.robust_acc == rep.nat_acc);
    CHECK(rep.n_examples == d.size());
  }

  SUBCASE("constant-output model on balanced labels: both 1/K") {
    Model constant = build_model(m.spec(), 3);  // zero head -> constant logits
    RobustnessReport rep = evaluate(constant, d, AttackSpec::pgd(8, 10));
    CHECK(rep.nat_acc == doctest::Approx(0.25).epsilon(1e-12));
    CHECK(rep.robust_acc == doctest::Approx(0.25).epsilon(1e-12));
  }

  SUBCASE("deterministic given the attack seed") {
    AttackSpec atk = AttackSpec::pgd(8, 10, 0, true, 42);
    RobustnessReport a = evaluate(m, d, atk);
    RobustnessReport b = evaluate(m, d, atk);
    CHECK(a.robust_acc == b.robust_acc);
  }

  SUBCASE("empty set errors") {
    data::ImageDataset empty;
    CHECK_THROWS(evaluate(m, empty, AttackSpec::fgsm(8)));
  }
}

TEST_CASE("pgd-10 is no weaker than pgd-1 on the convex linear case") {
  // binary linear-softmax model: margin moves monotonically along a fixed
  // sign direction, so more steps can only flip correct -> incorrect
  ModelSpec spec;
  spec.input_channels = 1;
  spec.input_height = 1;
  spec.input_width = 10;
  spec.hidden_widths = {10};
  spec.num_classes = 2;
  Model m = build_model(spec, 7);
  TensorValue& w1 = m.param("fc1.weight").value;
  for (auto& v : w1.data) v = 0;
  for (int64_t i = 0; i < 10; ++i) w1.data[i * 10 + i] = 1.0;
  Rng rng(8);
  for (auto& v : m.param("head.weight").value.data) v = rng.uniform(-1, 1);

  data::ImageDataset d;
  d.images = testsup::rand_tensor(rng, {40, 1, 1, 10}, 0.3, 0.7);
  d.labels.resize(40);
  for (auto& y : d.labels) y = rng.below(2);
  d.num_classes = 2;

  const double r1 = evaluate(m, d, AttackSpec::pgd(8, 1, 2)).robust_acc;
  const double r10 = evaluate(m, d, AttackSpec::pgd(8, 10, 2)).robust_acc;
  CHECK(r10 <= r1);
}

TEST_CASE("cosine helper") {
  std::vector<double> v{0.3, -1.7, 2.2, 0.01};
  CHECK(cosine(v, v) == 1.0);  // exactly
  std::vector<double> neg(v);
  for (auto& x : neg) x = -x;
  CHECK(cosine(v, neg) >= -1.0);
  CHECK(cosine(v, neg) == doctest::Approx(-1.0).epsilon(1e-14));
  std::vector<double> zero(4, 0.0);
  CHECK(cosine(v, zero) == 0.0);
}

TEST_CASE("similarity_sweep") {
  Model m = probe_model(11);
  data::ImageDataset d = balanced_data(12);

  SUBCASE("reports carry valid statistics") {
    std::map<double, const Model*> per_eps{{2.0, &m}, {8.0, &m}};
    auto reports = similarity_sweep(per_eps, d, AttackSpec::pgd(8, 7));
    REQUIRE(reports.size() == 2);
    for (const auto& r : reports) {
      CHECK(r.mean_cos >= -1.0);
      CHECK(r.mean_cos <= 1.0);
      CHECK(r.n + r.excluded == d.size());
      CHECK(r.loss_ratio >= 0.0);
    }
    // same model, same data: the small-eps attack pair agrees more
    CHECK(reports[0].eps_255 == 2.0);
    CHECK(reports[0].mean_cos >= reports[1].mean_cos);
  }

  SUBCASE("self-comparison via identical attacks gives cosine exactly 1") {
    // compare pgd with itself by computing deltas directly
    auto batch = data::batches(d, d.size())[0];
    AttackSpec spec = AttackSpec::pgd(8, 7, 0, true, 3);
    TensorValue a1 = attacks::attack(m, batch.images, batch.labels, spec, 0);
    TensorValue a2 = attacks::attack(m, batch.images, batch.labels, spec, 0);
    const TensorValue d1 = attacks::delta(a1, batch.images).delta;
    const TensorValue d2 = attacks::delta(a2, batch.images).delta;
    const int64_t dim = d1.numel() / d1.shape[0];
    for (int64_t i = 0; i < d1.shape[0]; ++i) {
      std::vector<double> r1(d1.data.begin() + i * dim, d1.data.begin() + (i + 1) * dim);
      std::vector<double> r2(d2.data.begin() + i * dim, d2.data.begin() + (i + 1) * dim);
      double norm = 0;
      for (double v : r1) norm += v * v;
      if (norm > 0) CHECK(cosine(r1, r2) == 1.0);
    }
  }
}

TEST_CASE("detect_overfit") {
  SUBCASE("hand-applied rule") {
    auto h = history_from({0.50, 0.52, 0.51, 0.10, 0.08, 0.07});
    OverfitVerdict v = detect_overfit(h);
    CHECK(v.detected);
    REQUIRE(v.onset_epoch.has_value());
    CHECK(*v.onset_epoch == 3);
    CHECK(v.peak_racc == 0.52);
    CHECK(v.final_racc == 0.07);
  }

  SUBCASE("monotone non-decreasing curve never fires") {
    auto v = detect_overfit(history_from({0.1, 0.2, 0.3, 0.3, 0.4, 0.45}));
    CHECK(!v.detected);
  }

  SUBCASE("non-increasing-then-flat curve above threshold never fires") {
    auto v = detect_overfit(history_from({0.5, 0.45, 0.4, 0.38, 0.38, 0.38, 0.38}));
    CHECK(!v.detected);
  }

  SUBCASE("collapse to zero always fires") {
    auto v = detect_overfit(history_from({0.4, 0.5, 0.0, 0.0, 0.0, 0.0}));
    CHECK(v.detected);
    CHECK(*v.onset_epoch == 2);
  }

  SUBCASE("short dips below the window do not fire") {
    auto v = detect_overfit(history_from({0.5, 0.1, 0.1, 0.45, 0.5, 0.5}));
    CHECK(!v.detected);
  }
}

TEST_CASE("time_attack") {
  Model m = probe_model(21);
  data::ImageDataset d = balanced_data(22, 4, 6);

  TimingStats f = time_attack(m, d, AttackSpec::fgsm(8), 3, 8);
  TimingStats p7 = time_attack(m, d, AttackSpec::pgd(8, 7), 3, 8);
  const auto n_batches = data::batches(d, 8).size();
  CHECK(f.input_grads_per_pass == n_batches);
  CHECK(p7.input_grads_per_pass == 7 * n_batches);
  CHECK(f.median_pass_sec > 0.0);
  CHECK_THROWS_AS(time_attack(m, d, AttackSpec::fgsm(8), 2), std::invalid_argument);
}
