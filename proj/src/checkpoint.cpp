#include "aftlab/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace aftlab::models {

namespace {

constexpr uint32_t kMagic = 0x4146544Cu;  // "AFTL"
constexpr uint32_t kFormatVersion = 1;

void put_u32(std::ostream& os, uint32_t v) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  os.write(reinterpret_cast<const char*>(b), 4);
}

void put_u64(std::ostream& os, uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  os.write(reinterpret_cast<const char*>(b), 8);
}

void put_i64(std::ostream& os, int64_t v) { put_u64(os, static_cast<uint64_t>(v)); }

void put_f64(std::ostream& os, double v) { put_u64(os, std::bit_cast<uint64_t>(v)); }

void put_str(std::ostream& os, const std::string& s) {
  put_u32(os, static_cast<uint32_t>(s.size()));
  os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

uint32_t get_u32(std::istream& is) {
  unsigned char b[4];
  if (!is.read(reinterpret_cast<char*>(b), 4)) throw std::runtime_error("checkpoint truncated");
  uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(b[i]) << (8 * i);
  return v;
}

uint64_t get_u64(std::istream& is) {
  unsigned char b[8];
  if (!is.read(reinterpret_cast<char*>(b), 8)) throw std::runtime_error("checkpoint truncated");
  uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(b[i]) << (8 * i);
  return v;
}

int64_t get_i64(std::istream& is) { return static_cast<int64_t>(get_u64(is)); }

double get_f64(std::istream& is) { return std::bit_cast<double>(get_u64(is)); }

std::string get_str(std::istream& is) {
  const uint32_t n = get_u32(is);
  if (n > (1u << 20)) throw std::runtime_error("checkpoint: implausible string length");
  std::string s(n, '\0');
  if (n && !is.read(s.data(), n)) throw std::runtime_error("checkpoint truncated");
  return s;
}

void put_shape(std::ostream& os, const std::vector<int64_t>& shape) {
  put_u32(os, static_cast<uint32_t>(shape.size()));
  for (int64_t d : shape) put_i64(os, d);
}

std::vector<int64_t> get_shape(std::istream& is) {
  const uint32_t rank = get_u32(is);
  if (rank > 8) throw std::runtime_error("checkpoint: implausible tensor rank");
  std::vector<int64_t> shape(rank);
  for (auto& d : shape) d = get_i64(is);
  return shape;
}

}  // namespace

struct CheckpointAccess {
  static Model make(ModelSpec spec, uint64_t seed, std::vector<NamedParam> params) {
    Model m;
    m.spec_ = std::move(spec);
    m.seed_ = seed;
    m.params_ = std::move(params);
    return m;
  }
};

void save_checkpoint(const Model& model, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open checkpoint for writing: " + path);
  put_u32(os, kMagic);
  put_u32(os, kFormatVersion);

  const ModelSpec& s = model.spec();
  put_u32(os, s.arch == Arch::kMlp ? 0 : 1);
  put_i64(os, s.input_channels);
  put_i64(os, s.input_height);
  put_i64(os, s.input_width);
  put_shape(os, s.hidden_widths);
  put_shape(os, s.conv_channels);
  put_i64(os, s.kernel_size);
  put_u32(os, s.activation == autodiff::Act::kRelu ? 0 : 1);
  put_i64(os, s.num_classes);
  put_u32(os, s.adapters_enabled ? 1 : 0);
  put_i64(os, s.adapter_reduction);
  put_u64(os, model.build_seed());

  put_u32(os, static_cast<uint32_t>(model.params().size()));
  for (const NamedParam& p : model.params()) {
    put_str(os, p.name);
    put_u32(os, static_cast<uint32_t>(p.role));
    put_shape(os, p.value.shape);
    for (double v : p.value.data) put_f64(os, v);
  }
  if (!os) throw std::runtime_error("checkpoint write failed: " + path);
}

Model load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open checkpoint: " + path);
  if (get_u32(is) != kMagic) throw std::runtime_error("not an aftlab checkpoint: " + path);
  const uint32_t version = get_u32(is);
  if (version != kFormatVersion)
    throw std::runtime_error("unsupported checkpoint version " + std::to_string(version));

  ModelSpec s;
  s.arch = get_u32(is) == 0 ? Arch::kMlp : Arch::kCnn;
  s.input_channels = get_i64(is);
  s.input_height = get_i64(is);
  s.input_width = get_i64(is);
  s.hidden_widths = get_shape(is);
  s.conv_channels = get_shape(is);
  s.kernel_size = get_i64(is);
  s.activation = get_u32(is) == 0 ? autodiff::Act::kRelu : autodiff::Act::kSoftplus;
  s.num_classes = get_i64(is);
  s.adapters_enabled = get_u32(is) != 0;
  s.adapter_reduction = get_i64(is);
  const uint64_t seed = get_u64(is);

  const uint32_t count = get_u32(is);
  if (count > (1u << 16)) throw std::runtime_error("checkpoint: implausible parameter count");
  std::vector<NamedParam> params;
  params.reserve(count);
  for (uint32_t i = 0; i < count; ++i) {
    NamedParam p;
    p.name = get_str(is);
    const uint32_t role = get_u32(is);
    if (role > static_cast<uint32_t>(ParamRole::kHeadBias))
      throw std::runtime_error("checkpoint: bad parameter role");
    p.role = static_cast<ParamRole>(role);
    std::vector<int64_t> shape = get_shape(is);
    const int64_t n = shape_numel(shape);
    std::vector<double> data(static_cast<size_t>(n));
    for (auto& v : data) v = get_f64(is);
    p.value = TensorValue(std::move(shape), std::move(data));
    params.push_back(std::move(p));
  }
  return CheckpointAccess::make(std::move(s), seed, std::move(params));
}

}  // namespace aftlab::models
