#include "aftlab/models.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "aftlab/rng.hpp"

namespace aftlab::models {

namespace ad = autodiff;

const char* to_string(ParamRole role) {
  switch (role) {
    case ParamRole::kWeight: return "weight";
    case ParamRole::kBias: return "bias";
    case ParamRole::kAdapterDown: return "adapter_down";
    case ParamRole::kAdapterUp: return "adapter_up";
    case ParamRole::kHeadWeight: return "head_weight";
    case ParamRole::kHeadBias: return "head_bias";
  }
  return "?";
}

const char* to_string(PeftMode mode) {
  switch (mode) {
    case PeftMode::kFull: return "full";
    case PeftMode::kLinearProbe: return "linear_probe";
    case PeftMode::kBitfit: return "bitfit";
    case PeftMode::kAdapter: return "adapter";
  }
  return "?";
}

PeftMode peft_from_string(const std::string& s) {
  if (s == "full") return PeftMode::kFull;
  if (s == "linear_probe") return PeftMode::kLinearProbe;
  if (s == "bitfit") return PeftMode::kBitfit;
  if (s == "adapter") return PeftMode::kAdapter;
  throw std::invalid_argument("unknown peft mode: " + s);
}

void ModelSpec::validate() const {
  if (num_classes < 2) throw std::invalid_argument("ModelSpec: num_classes must be >= 2");
  if (input_channels < 1 || input_height < 1 || input_width < 1)
    throw std::invalid_argument("ModelSpec: input dimensions must be positive");
  if (arch == Arch::kMlp) {
    if (hidden_widths.empty())
      throw std::invalid_argument("ModelSpec: at least one hidden layer required");
    for (int64_t w : hidden_widths)
      if (w < 1) throw std::invalid_argument("ModelSpec: hidden widths must be positive");
  } else {
    if (conv_channels.empty())
      throw std::invalid_argument("ModelSpec: at least one conv layer required");
    if (kernel_size < 1) throw std::invalid_argument("ModelSpec: kernel_size must be positive");
    int64_t h = input_height, w = input_width;
    for (size_t i = 0; i < conv_channels.size(); ++i) {
      if (conv_channels[i] < 1)
        throw std::invalid_argument("ModelSpec: conv channel counts must be positive");
      h -= kernel_size - 1;
      w -= kernel_size - 1;
      if (h < 1 || w < 1)
        throw std::invalid_argument("ModelSpec: kernel larger than feature map at conv layer " +
                                    std::to_string(i + 1));
    }
  }
  if (adapters_enabled) {
    if (adapter_reduction < 1)
      throw std::invalid_argument("ModelSpec: adapter_reduction must be positive");
    const auto& widths = arch == Arch::kMlp ? hidden_widths : conv_channels;
    for (int64_t w : widths)
      if (w % adapter_reduction != 0)
        throw std::invalid_argument("ModelSpec: adapter_reduction " +
                                    std::to_string(adapter_reduction) +
                                    " does not divide hidden width " + std::to_string(w));
  }
}

namespace {

TensorValue he_init(Rng& rng, std::vector<int64_t> shape, int64_t fan_in) {
  TensorValue t = TensorValue::zeros(std::move(shape));
  const double stddev = std::sqrt(2.0 / static_cast<double>(fan_in));
  for (auto& v : t.data) v = rng.normal(0.0, stddev);
  return t;
}

int64_t head_input_dim(const ModelSpec& spec) {
  if (spec.arch == Arch::kMlp) return spec.hidden_widths.back();
  int64_t h = spec.input_height, w = spec.input_width;
  for (size_t i = 0; i < spec.conv_channels.size(); ++i) {
    h -= spec.kernel_size - 1;
    w -= spec.kernel_size - 1;
  }
  return spec.conv_channels.back() * h * w;
}

std::string layer_name(const ModelSpec& spec, size_t i) {
  return (spec.arch == Arch::kMlp ? "fc" : "conv") + std::to_string(i + 1);
}

void append_adapter_params(std::vector<NamedParam>& out, const ModelSpec& spec,
                           const std::string& layer, int64_t width, int64_t reduction,
                           Rng& rng) {
  const int64_t bottleneck = width / reduction;
  TensorValue down_w, up_w;
  if (spec.arch == Arch::kMlp) {
    down_w = he_init(rng, {width, bottleneck}, width);
    up_w = TensorValue::zeros({bottleneck, width});
  } else {
    down_w = he_init(rng, {bottleneck, width, 1, 1}, width);
    up_w = TensorValue::zeros({width, bottleneck, 1, 1});
  }
  out.push_back({layer + ".adapter.down.weight", ParamRole::kAdapterDown, std::move(down_w)});
  out.push_back({layer + ".adapter.down.bias", ParamRole::kAdapterDown,
                 TensorValue::zeros({bottleneck})});
  out.push_back({layer + ".adapter.up.weight", ParamRole::kAdapterUp, std::move(up_w)});
  out.push_back({layer + ".adapter.up.bias", ParamRole::kAdapterUp, TensorValue::zeros({width})});
}

}  // namespace

Model build_model(const ModelSpec& spec, uint64_t seed) {
  spec.validate();
  Model m;
  m.spec_ = spec;
  m.seed_ = seed;

  if (spec.arch == Arch::kMlp) {
    int64_t prev = spec.input_dim();
    for (size_t i = 0; i < spec.hidden_widths.size(); ++i) {
      Rng rng(derive_seed(seed, "init", i));
      const int64_t width = spec.hidden_widths[i];
      const std::string name = layer_name(spec, i);
      m.params_.push_back({name + ".weight", ParamRole::kWeight, he_init(rng, {prev, width}, prev)});
      m.params_.push_back({name + ".bias", ParamRole::kBias, TensorValue::zeros({width})});
      if (spec.adapters_enabled) {
        Rng arng(derive_seed(seed, "adapter", i));
        append_adapter_params(m.params_, spec, name, width, spec.adapter_reduction, arng);
      }
      prev = width;
    }
  } else {
    int64_t prev_c = spec.input_channels;
    for (size_t i = 0; i < spec.conv_channels.size(); ++i) {
      Rng rng(derive_seed(seed, "init", i));
      const int64_t f = spec.conv_channels[i];
      const int64_t k = spec.kernel_size;
      const std::string name = layer_name(spec, i);
      m.params_.push_back(
          {name + ".weight", ParamRole::kWeight, he_init(rng, {f, prev_c, k, k}, prev_c * k * k)});
      m.params_.push_back({name + ".bias", ParamRole::kBias, TensorValue::zeros({f})});
      if (spec.adapters_enabled) {
        Rng arng(derive_seed(seed, "adapter", i));
        append_adapter_params(m.params_, spec, name, f, spec.adapter_reduction, arng);
      }
      prev_c = f;
    }
  }

  const int64_t head_in = head_input_dim(spec);
  m.params_.push_back(
      {"head.weight", ParamRole::kHeadWeight, TensorValue::zeros({head_in, spec.num_classes})});
  m.params_.push_back({"head.bias", ParamRole::kHeadBias, TensorValue::zeros({spec.num_classes})});
  return m;
}

Model insert_adapters(const Model& model, int64_t reduction) {
  if (model.spec_.adapters_enabled)
    throw std::invalid_argument("insert_adapters: adapters already present");
  ModelSpec spec = model.spec_;
  spec.adapters_enabled = true;
  spec.adapter_reduction = reduction;
  spec.validate();

  Model out;
  out.spec_ = spec;
  out.seed_ = model.seed_;
  const auto& widths = spec.arch == Arch::kMlp ? spec.hidden_widths : spec.conv_channels;
  size_t layer = 0;
  for (const NamedParam& p : model.params_) {
    out.params_.push_back(p);
    if (p.role == ParamRole::kBias) {
      Rng arng(derive_seed(model.seed_, "adapter", layer));
      append_adapter_params(out.params_, spec, layer_name(spec, layer), widths[layer], reduction,
                            arng);
      ++layer;
    }
  }
  return out;
}

std::vector<std::string> trainable_set(const Model& model, PeftMode mode) {
  std::vector<std::string> names;
  bool has_adapters = false;
  for (const NamedParam& p : model.params()) {
    const bool head = p.role == ParamRole::kHeadWeight || p.role == ParamRole::kHeadBias;
    const bool adapter = p.role == ParamRole::kAdapterDown || p.role == ParamRole::kAdapterUp;
    has_adapters = has_adapters || adapter;
    switch (mode) {
      case PeftMode::kFull:
        names.push_back(p.name);
        break;
      case PeftMode::kLinearProbe:
        if (head) names.push_back(p.name);
        break;
      case PeftMode::kBitfit:
        if (head || p.role == ParamRole::kBias) names.push_back(p.name);
        break;
      case PeftMode::kAdapter:
        if (head || adapter) names.push_back(p.name);
        break;
    }
  }
  if (mode == PeftMode::kAdapter && !has_adapters)
    throw std::invalid_argument("trainable_set: peft mode 'adapter' but the model has no "
                                "adapters (adapters_enabled=false)");
  return names;
}

Model reinit_head(const Model& model, int64_t num_classes, HeadInit init, uint64_t seed) {
  if (num_classes < 2) throw std::invalid_argument("reinit_head: num_classes must be >= 2");
  Model out = model;
  out.spec_.num_classes = num_classes;
  const int64_t head_in = head_input_dim(model.spec_);
  TensorValue w;
  if (init == HeadInit::kZero) {
    w = TensorValue::zeros({head_in, num_classes});
  } else {
    Rng rng(derive_seed(seed, "head"));
    w = TensorValue::zeros({head_in, num_classes});
    const double stddev = std::sqrt(1.0 / static_cast<double>(head_in));
    for (auto& v : w.data) v = rng.normal(0.0, stddev);
  }
  out.param("head.weight").value = std::move(w);
  out.param("head.bias").value = TensorValue::zeros({num_classes});
  return out;
}

const NamedParam& Model::param(const std::string& name) const {
  for (const NamedParam& p : params_)
    if (p.name == name) return p;
  throw std::invalid_argument("unknown parameter: " + name);
}

NamedParam& Model::param(const std::string& name) {
  for (NamedParam& p : params_)
    if (p.name == name) return p;
  throw std::invalid_argument("unknown parameter: " + name);
}

int64_t Model::total_scalars() const {
  int64_t n = 0;
  for (const NamedParam& p : params_) n += p.value.numel();
  return n;
}

bool Model::bitwise_equal_params(const Model& other) const {
  if (params_.size() != other.params_.size()) return false;
  for (size_t i = 0; i < params_.size(); ++i) {
    if (params_[i].name != other.params_[i].name) return false;
    if (!params_[i].value.bitwise_equal(other.params_[i].value)) return false;
  }
  return true;
}

ad::Var Model::Binding::var(const std::string& name) const {
  for (const auto& [n, v] : param_vars)
    if (n == name) return v;
  throw std::invalid_argument("binding has no parameter: " + name);
}

Model::Binding Model::forward(ad::Tape& tape, ad::Var input,
                              const std::unordered_set<std::string>* grad_params) const {
  Binding bind;
  bind.param_vars.reserve(params_.size());
  for (const NamedParam& p : params_) {
    const bool rg = grad_params == nullptr || grad_params->count(p.name) > 0;
    bind.param_vars.emplace_back(p.name, tape.leaf(p.value, rg));
  }
  auto var_of = [&](const std::string& name) { return bind.var(name); };

  const int64_t batch = input.shape()[0];
  ad::Var h = input;

  if (spec_.arch == Arch::kMlp) {
    if (input.value().rank() == 4) h = ad::reshape(h, {batch, spec_.input_dim()});
    else if (input.shape()[1] != spec_.input_dim())
      throw std::invalid_argument("forward: input dim mismatch");
    for (size_t i = 0; i < spec_.hidden_widths.size(); ++i) {
      const std::string name = layer_name(spec_, i);
      h = ad::activation(
          ad::bias_add(ad::matmul(h, var_of(name + ".weight")), var_of(name + ".bias")),
          spec_.activation);
      if (spec_.adapters_enabled) {
        ad::Var bottleneck = ad::activation(
            ad::bias_add(ad::matmul(h, var_of(name + ".adapter.down.weight")),
                         var_of(name + ".adapter.down.bias")),
            spec_.activation);
        ad::Var delta = ad::bias_add(ad::matmul(bottleneck, var_of(name + ".adapter.up.weight")),
                                     var_of(name + ".adapter.up.bias"));
        h = ad::add(h, delta);
      }
    }
  } else {
    if (input.value().rank() != 4)
      throw std::invalid_argument("forward: cnn expects rank-4 input");
    for (size_t i = 0; i < spec_.conv_channels.size(); ++i) {
      const std::string name = layer_name(spec_, i);
      h = ad::activation(
          ad::bias_add(ad::conv2d(h, var_of(name + ".weight")), var_of(name + ".bias")),
          spec_.activation);
      if (spec_.adapters_enabled) {
        ad::Var bottleneck = ad::activation(
            ad::bias_add(ad::conv2d(h, var_of(name + ".adapter.down.weight")),
                         var_of(name + ".adapter.down.bias")),
            spec_.activation);
        ad::Var delta = ad::bias_add(ad::conv2d(bottleneck, var_of(name + ".adapter.up.weight")),
                                     var_of(name + ".adapter.up.bias"));
        h = ad::add(h, delta);
      }
    }
    h = ad::reshape(h, {batch, head_input_dim(spec_)});
  }

  bind.logits = ad::bias_add(ad::matmul(h, var_of("head.weight")), var_of("head.bias"));
  return bind;
}

}  // namespace aftlab::models
