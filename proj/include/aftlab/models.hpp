#pragma once

#include <cstdint>
#include <string>
#include <unordered_set>
#include <vector>

#include "aftlab/autodiff.hpp"
#include "aftlab/tensor.hpp"

namespace aftlab::models {

enum class ParamRole : uint8_t {
  kWeight,
  kBias,
  kAdapterDown,
  kAdapterUp,
  kHeadWeight,
  kHeadBias,
};

enum class Arch : uint8_t { kMlp, kCnn };

enum class PeftMode : uint8_t { kFull, kLinearProbe, kBitfit, kAdapter };

enum class HeadInit : uint8_t { kZero, kSeeded };

const char* to_string(ParamRole role);
const char* to_string(PeftMode mode);
PeftMode peft_from_string(const std::string& s);

struct NamedParam {
  std::string name;
  ParamRole role;
  TensorValue value;
};

struct ModelSpec {
  Arch arch = Arch::kMlp;
  int64_t input_channels = 1;
  int64_t input_height = 8;
  int64_t input_width = 8;
  std::vector<int64_t> hidden_widths = {64};  // mlp
  std::vector<int64_t> conv_channels = {8, 16};  // cnn
  int64_t kernel_size = 3;
  autodiff::Act activation = autodiff::Act::kRelu;
  int64_t num_classes = 10;
  bool adapters_enabled = false;
  int64_t adapter_reduction = 8;

  int64_t input_dim() const { return input_channels * input_height * input_width; }
  void validate() const;  // throws std::invalid_argument
};

/// Classification model with named, role-tagged parameters. Forward passes
/// bind every parameter as a fresh leaf on the caller's tape, so the stored
/// values are never mutated by attack generation or evaluation.
class Model {
 public:
  Model() = default;

  const ModelSpec& spec() const { return spec_; }
  uint64_t build_seed() const { return seed_; }
  const std::vector<NamedParam>& params() const { return params_; }
  std::vector<NamedParam>& mutable_params() { return params_; }
  const NamedParam& param(const std::string& name) const;
  NamedParam& param(const std::string& name);
  int64_t total_scalars() const;

  struct Binding {
    autodiff::Var logits;
    std::vector<std::pair<std::string, autodiff::Var>> param_vars;
    autodiff::Var var(const std::string& name) const;
  };

  /// Builds the forward graph for a batch (shape [N×C×H×W] or [N×D]).
  /// Parameters named in `grad_params` become grad-requiring leaves; pass
  /// nullptr for all, or an empty set for none (pure evaluation / attacks).
  Binding forward(autodiff::Tape& tape, autodiff::Var input,
                  const std::unordered_set<std::string>* grad_params = nullptr) const;

  bool bitwise_equal_params(const Model& other) const;

  friend Model build_model(const ModelSpec& spec, uint64_t seed);
  friend Model insert_adapters(const Model& model, int64_t reduction);
  friend Model reinit_head(const Model& model, int64_t num_classes, HeadInit init, uint64_t seed);
  friend struct CheckpointAccess;

 private:
  ModelSpec spec_;
  uint64_t seed_ = 0;
  std::vector<NamedParam> params_;
};

/// Deterministic initialization: He-style fan-in scaling for hidden weights,
/// zeros for biases and for the classification head.
Model build_model(const ModelSpec& spec, uint64_t seed);

/// Inserts residual bottlenecks h + U·act(D·h) after every hidden activation
/// (1x1 convolutions over channels for the CNN). U starts at zero, so the
/// inserted model computes exactly the same function as the original.
Model insert_adapters(const Model& model, int64_t reduction);

/// Parameter names trained under the given PEFT mode.
std::vector<std::string> trainable_set(const Model& model, PeftMode mode);

/// Replaces the classification head for a new class count; every other
/// parameter is preserved bitwise.
Model reinit_head(const Model& model, int64_t num_classes, HeadInit init, uint64_t seed = 0);

}  // namespace aftlab::models
