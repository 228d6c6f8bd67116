#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>

#include "aftlab/checkpoint.hpp"
#include "aftlab/models.hpp"
#include "test_support.hpp"

using namespace aftlab;
using namespace aftlab::models;
namespace ad = aftlab::autodiff;

namespace {

ModelSpec mnist_like_mlp() {
  ModelSpec s;
  s.arch = Arch::kMlp;
  s.input_channels = 1;
  s.input_height = 28;
  s.input_width = 28;
  s.hidden_widths = {256};
  s.num_classes = 10;
  return s;
}

TensorValue forward_logits(const Model& m, const TensorValue& x) {
  ad::Tape t;
  ad::Var xn = t.leaf(x, false);
  return m.forward(t, xn).logits.value();
}

}  // namespace

TEST_CASE("build_model determinism and parameter counts") {
  const ModelSpec spec = mnist_like_mlp();
  Model a = build_model(spec, 42);
  Model b = build_model(spec, 42);
  CHECK(a.bitwise_equal_params(b));
  Model c = build_model(spec, 43);
  CHECK(!a.bitwise_equal_params(c));

  // 784*256 + 256 + 256*10 + 10
  CHECK(a.total_scalars() == 203530);

  // zero image with the zero-initialized head -> uniform softmax
  TensorValue x = TensorValue::zeros({2, 1, 28, 28});
  TensorValue logits = forward_logits(a, x);
  for (double v : logits.data) CHECK(v == 0.0);
  ad::Tape t;
  std::vector<int64_t> labels{3, 7};
  double loss = ad::cross_entropy(t.leaf(logits, false), labels).value().data[0];
  CHECK(loss == doctest::Approx(std::log(10.0)).epsilon(1e-12));
}

TEST_CASE("adapter insertion is an exact identity at init") {
  ModelSpec spec = mnist_like_mlp();
  Model base = build_model(spec, 7);
  Model adapted = insert_adapters(base, 8);

  Rng rng(1);
  TensorValue x = testsup::rand_tensor(rng, {3, 1, 28, 28}, 0, 1);
  CHECK(forward_logits(base, x).bitwise_equal(forward_logits(adapted, x)));

  // width 256, reduction 8 -> bottleneck 32; params 256*32+32+32*256+256
  CHECK(adapted.param("fc1.adapter.down.weight").value.shape ==
        std::vector<int64_t>{256, 32});
  int64_t adapter_scalars = 0;
  for (const NamedParam& p : adapted.params())
    if (p.role == ParamRole::kAdapterDown || p.role == ParamRole::kAdapterUp)
      adapter_scalars += p.value.numel();
  CHECK(adapter_scalars == 16672);

  CHECK_THROWS_AS(insert_adapters(base, 3), std::invalid_argument);  // 256 % 3 != 0
}

TEST_CASE("cnn adapter insertion is also an exact identity") {
  ModelSpec spec;
  spec.arch = Arch::kCnn;
  spec.input_height = 10;
  spec.input_width = 10;
  spec.conv_channels = {8, 16};
  spec.kernel_size = 3;
  spec.num_classes = 5;
  Model base = build_model(spec, 11);
  Model adapted = insert_adapters(base, 4);
  Rng rng(2);
  TensorValue x = testsup::rand_tensor(rng, {2, 1, 10, 10}, 0, 1);
  CHECK(forward_logits(base, x).bitwise_equal(forward_logits(adapted, x)));
}

TEST_CASE("trainable_set per mode") {
  ModelSpec spec = mnist_like_mlp();
  Model m = build_model(spec, 3);

  auto lp = trainable_set(m, PeftMode::kLinearProbe);
  CHECK(lp.size() == 2);
  int64_t lp_scalars = 0;
  for (const auto& n : lp) lp_scalars += m.param(n).value.numel();
  CHECK(lp_scalars == 2570);

  auto bitfit = trainable_set(m, PeftMode::kBitfit);
  CHECK(bitfit == std::vector<std::string>{"fc1.bias", "head.weight", "head.bias"});

  auto full = trainable_set(m, PeftMode::kFull);
  CHECK(full.size() == m.params().size());

  CHECK_THROWS_AS(trainable_set(m, PeftMode::kAdapter), std::invalid_argument);

  Model adapted = insert_adapters(m, 8);
  auto adapter = trainable_set(adapted, PeftMode::kAdapter);
  // 4 adapter params + head
  CHECK(adapter.size() == 6);

  // parameter-count monotonicity
  auto scalars = [&](const Model& model, PeftMode mode) {
    int64_t n = 0;
    for (const auto& name : trainable_set(model, mode)) n += model.param(name).value.numel();
    return n;
  };
  CHECK(scalars(adapted, PeftMode::kLinearProbe) <= scalars(adapted, PeftMode::kBitfit));
  CHECK(scalars(adapted, PeftMode::kBitfit) <= scalars(adapted, PeftMode::kFull));
  CHECK(scalars(adapted, PeftMode::kLinearProbe) <= scalars(adapted, PeftMode::kAdapter));
  CHECK(scalars(adapted, PeftMode::kAdapter) <= scalars(adapted, PeftMode::kFull));
}

TEST_CASE("reinit_head preserves everything else bitwise") {
  ModelSpec spec = mnist_like_mlp();
  Model m = build_model(spec, 5);
  // give the head nonzero values first
  for (auto& v : m.param("head.weight").value.data) v = 0.25;

  Model re = reinit_head(m, 5, HeadInit::kZero);
  CHECK(re.spec().num_classes == 5);
  CHECK(re.param("head.weight").value.shape == std::vector<int64_t>{256, 5});
  for (const NamedParam& p : m.params()) {
    if (p.role == ParamRole::kHeadWeight || p.role == ParamRole::kHeadBias) continue;
    CHECK(re.param(p.name).value.bitwise_equal(p.value));
  }

  // zero head -> uniform predictions
  TensorValue x = TensorValue::full({1, 1, 28, 28}, 0.37);
  TensorValue logits = forward_logits(re, x);
  for (double v : logits.data) CHECK(v == logits.data[0]);

  Model seeded = reinit_head(m, 5, HeadInit::kSeeded, 9);
  Model seeded2 = reinit_head(m, 5, HeadInit::kSeeded, 9);
  CHECK(seeded.bitwise_equal_params(seeded2));
  CHECK_THROWS_AS(reinit_head(m, 1, HeadInit::kZero), std::invalid_argument);
}

TEST_CASE("spec validation") {
  ModelSpec bad = mnist_like_mlp();
  bad.hidden_widths.clear();
  CHECK_THROWS_AS(build_model(bad, 0), std::invalid_argument);

  ModelSpec conv_too_big;
  conv_too_big.arch = Arch::kCnn;
  conv_too_big.input_height = 4;
  conv_too_big.input_width = 4;
  conv_too_big.conv_channels = {4, 4};
  conv_too_big.kernel_size = 5;
  conv_too_big.num_classes = 3;
  CHECK_THROWS_AS(build_model(conv_too_big, 0), std::invalid_argument);
}

TEST_CASE("checkpoint round-trip is bitwise exact") {
  ModelSpec spec = mnist_like_mlp();
  spec.activation = ad::Act::kSoftplus;
  Model m = insert_adapters(build_model(spec, 77), 8);
  // non-trivial values everywhere
  Rng rng(8);
  for (NamedParam& p : m.mutable_params())
    for (auto& v : p.value.data) v = rng.uniform(-1, 1);

  const std::string path = (std::filesystem::temp_directory_path() / "aftlab_ckpt_test.bin").string();
  save_checkpoint(m, path);
  Model loaded = load_checkpoint(path);
  CHECK(loaded.bitwise_equal_params(m));
  CHECK(loaded.spec().activation == ad::Act::kSoftplus);
  CHECK(loaded.spec().adapters_enabled);
  CHECK(loaded.build_seed() == m.build_seed());

  // corrupt magic -> error
  {
    std::ofstream f(path, std::ios::binary);
    f << "NOPE";
  }
  CHECK_THROWS_AS(load_checkpoint(path), std::runtime_error);
  std::filesystem::remove(path);
}
