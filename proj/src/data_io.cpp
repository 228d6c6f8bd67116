#include "aftlab/data_io.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <stdexcept>

#include "aftlab/rng.hpp"

namespace aftlab::data {

namespace {

constexpr uint32_t kImagesMagic = 0x00000803u;
constexpr uint32_t kLabelsMagic = 0x00000801u;

uint32_t read_be_u32(std::istream& is, const std::string& path) {
  unsigned char b[4];
  if (!is.read(reinterpret_cast<char*>(b), 4))
    throw std::runtime_error("idx file truncated: " + path);
  return (static_cast<uint32_t>(b[0]) << 24) | (static_cast<uint32_t>(b[1]) << 16) |
         (static_cast<uint32_t>(b[2]) << 8) | static_cast<uint32_t>(b[3]);
}

void write_be_u32(std::ostream& os, uint32_t v) {
  const unsigned char b[4] = {static_cast<unsigned char>(v >> 24),
                              static_cast<unsigned char>(v >> 16),
                              static_cast<unsigned char>(v >> 8), static_cast<unsigned char>(v)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

}  // namespace

void ImageDataset::validate() const {
  if (size() <= 0) throw std::invalid_argument("dataset is empty");
  if (images.rank() != 4) throw std::invalid_argument("dataset images must be [N,C,H,W]");
  if (static_cast<int64_t>(labels.size()) != size())
    throw std::invalid_argument("dataset label count does not match image count");
  for (double p : images.data)
    if (!(p >= 0.0 && p <= 1.0)) throw std::invalid_argument("pixel outside [0,1]");
  for (int64_t y : labels)
    if (y < 0 || y >= num_classes) throw std::invalid_argument("label outside [0,K)");
}

ImageDataset load_idx(const std::string& images_path, const std::string& labels_path) {
  std::ifstream imgs(images_path, std::ios::binary);
  if (!imgs) throw std::runtime_error("cannot open idx images: " + images_path);
  std::ifstream labs(labels_path, std::ios::binary);
  if (!labs) throw std::runtime_error("cannot open idx labels: " + labels_path);

  if (read_be_u32(imgs, images_path) != kImagesMagic)
    throw std::runtime_error("bad magic in idx image file: " + images_path);
  const uint32_t n = read_be_u32(imgs, images_path);
  const uint32_t h = read_be_u32(imgs, images_path);
  const uint32_t w = read_be_u32(imgs, images_path);

  if (read_be_u32(labs, labels_path) != kLabelsMagic)
    throw std::runtime_error("bad magic in idx label file: " + labels_path);
  const uint32_t n_labels = read_be_u32(labs, labels_path);
  if (n != n_labels)
    throw std::runtime_error("idx image/label count mismatch: " + std::to_string(n) + " vs " +
                             std::to_string(n_labels));

  const size_t pixel_count = static_cast<size_t>(n) * h * w;
  std::vector<unsigned char> raw(pixel_count);
  if (!imgs.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(pixel_count)))
    throw std::runtime_error("idx image file truncated: " + images_path);
  std::vector<unsigned char> raw_labels(n);
  if (!labs.read(reinterpret_cast<char*>(raw_labels.data()), n))
    throw std::runtime_error("idx label file truncated: " + labels_path);

  ImageDataset out;
  out.images = TensorValue::zeros({static_cast<int64_t>(n), 1, static_cast<int64_t>(h),
                                   static_cast<int64_t>(w)});
  for (size_t i = 0; i < pixel_count; ++i) out.images.data[i] = raw[i] / 255.0;
  out.labels.assign(raw_labels.begin(), raw_labels.end());
  out.num_classes = out.labels.empty()
                        ? 0
                        : *std::max_element(out.labels.begin(), out.labels.end()) + 1;
  if (n == 0) throw std::runtime_error("idx file holds no examples: " + images_path);
  return out;
}

void save_idx(const ImageDataset& data, const std::string& images_path,
              const std::string& labels_path) {
  if (data.images.shape[1] != 1)
    throw std::invalid_argument("save_idx: IDX stores single-channel images");
  std::ofstream imgs(images_path, std::ios::binary);
  if (!imgs) throw std::runtime_error("cannot open for writing: " + images_path);
  std::ofstream labs(labels_path, std::ios::binary);
  if (!labs) throw std::runtime_error("cannot open for writing: " + labels_path);

  write_be_u32(imgs, kImagesMagic);
  write_be_u32(imgs, static_cast<uint32_t>(data.size()));
  write_be_u32(imgs, static_cast<uint32_t>(data.images.shape[2]));
  write_be_u32(imgs, static_cast<uint32_t>(data.images.shape[3]));
  std::vector<unsigned char> raw(data.images.data.size());
  for (size_t i = 0; i < raw.size(); ++i) {
    const double q = std::round(data.images.data[i] * 255.0);
    raw[i] = static_cast<unsigned char>(std::min(std::max(q, 0.0), 255.0));
  }
  imgs.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size()));

  write_be_u32(labs, kLabelsMagic);
  write_be_u32(labs, static_cast<uint32_t>(data.size()));
  for (int64_t y : data.labels) {
    const unsigned char b = static_cast<unsigned char>(y);
    labs.write(reinterpret_cast<const char*>(&b), 1);
  }
  if (!imgs || !labs) throw std::runtime_error("idx write failed");
}

ImageDataset synth_clusters(const SynthSpec& spec) {
  if (spec.n_per_class < 1 || spec.num_classes < 1)
    throw std::invalid_argument("synth_clusters: counts must be positive");
  if (spec.noise_sigma < 0 || spec.cluster_separation < 0)
    throw std::invalid_argument("synth_clusters: separation and sigma must be non-negative");

  const int64_t dim = spec.channels * spec.height * spec.width;
  const int64_t n = spec.n_per_class * spec.num_classes;
  ImageDataset out;
  out.images = TensorValue::zeros({n, spec.channels, spec.height, spec.width});
  out.labels.resize(static_cast<size_t>(n));
  out.num_classes = spec.num_classes;

  auto clamp01 = [](double v) { return std::min(std::max(v, 0.0), 1.0); };

  int64_t row = 0;
  for (int64_t cls = 0; cls < spec.num_classes; ++cls) {
    Rng template_rng(derive_seed(spec.seed, "synth_template", static_cast<uint64_t>(cls)));
    std::vector<double> tmpl(static_cast<size_t>(dim));
    for (auto& v : tmpl)
      v = clamp01(0.5 + spec.cluster_separation * (template_rng.uniform01() - 0.5));
    Rng noise_rng(derive_seed(spec.seed, "synth_noise", static_cast<uint64_t>(cls)));
    for (int64_t s = 0; s < spec.n_per_class; ++s, ++row) {
      out.labels[static_cast<size_t>(row)] = cls;
      double* px = out.images.data.data() + row * dim;
      for (int64_t d = 0; d < dim; ++d)
        px[d] = spec.noise_sigma == 0.0
                    ? tmpl[static_cast<size_t>(d)]
                    : clamp01(tmpl[static_cast<size_t>(d)] +
                              noise_rng.normal(0.0, spec.noise_sigma));
    }
  }
  return out;
}

namespace {

ImageDataset subset(const ImageDataset& data, const std::vector<int64_t>& ids,
                    const std::map<int64_t, int64_t>& relabel) {
  const int64_t dim = data.images.numel() / data.size();
  ImageDataset out;
  out.images = TensorValue::zeros({static_cast<int64_t>(ids.size()), data.images.shape[1],
                                   data.images.shape[2], data.images.shape[3]});
  out.labels.resize(ids.size());
  out.num_classes = static_cast<int64_t>(relabel.size());
  for (size_t i = 0; i < ids.size(); ++i) {
    std::copy_n(data.images.data.begin() + ids[i] * dim, dim,
                out.images.data.begin() + static_cast<int64_t>(i) * dim);
    out.labels[i] = relabel.at(data.labels[static_cast<size_t>(ids[i])]);
  }
  return out;
}

}  // namespace

TransferSplit class_split(const ImageDataset& data, const std::vector<int64_t>& source_classes,
                          const std::vector<int64_t>& target_classes, double test_fraction,
                          uint64_t seed) {
  if (source_classes.empty() || target_classes.empty())
    throw std::invalid_argument("class_split: class sets must be nonempty");
  if (!(test_fraction > 0.0 && test_fraction < 1.0))
    throw std::invalid_argument("class_split: test_fraction must be in (0,1)");
  for (int64_t c : source_classes)
    for (int64_t t : target_classes)
      if (c == t)
        throw std::invalid_argument("class_split: class " + std::to_string(c) +
                                    " appears in both source and target");

  auto relabel_of = [](std::vector<int64_t> classes) {
    std::sort(classes.begin(), classes.end());
    std::map<int64_t, int64_t> m;
    for (size_t i = 0; i < classes.size(); ++i) m[classes[i]] = static_cast<int64_t>(i);
    return m;
  };
  const auto src_map = relabel_of(source_classes);
  const auto tgt_map = relabel_of(target_classes);

  std::vector<int64_t> src_ids;
  std::map<int64_t, std::vector<int64_t>> tgt_by_class;
  for (int64_t i = 0; i < data.size(); ++i) {
    const int64_t y = data.labels[static_cast<size_t>(i)];
    if (src_map.count(y)) src_ids.push_back(i);
    else if (tgt_map.count(y)) tgt_by_class[y].push_back(i);
  }

  std::vector<int64_t> train_ids, test_ids;
  for (auto& [cls, ids] : tgt_by_class) {
    Rng rng(derive_seed(seed, "class_split", static_cast<uint64_t>(cls)));
    for (size_t i = ids.size(); i > 1; --i)
      std::swap(ids[i - 1], ids[static_cast<size_t>(rng.below(static_cast<int64_t>(i)))]);
    const auto n_test = static_cast<size_t>(
        std::llround(test_fraction * static_cast<double>(ids.size())));
    for (size_t i = 0; i < ids.size(); ++i)
      (i < n_test ? test_ids : train_ids).push_back(ids[i]);
  }
  if (train_ids.empty() || test_ids.empty())
    throw std::invalid_argument("class_split: degenerate split, adjust test_fraction");

  TransferSplit out;
  out.source = subset(data, src_ids, src_map);
  out.target_train = subset(data, train_ids, tgt_map);
  out.target_test = subset(data, test_ids, tgt_map);
  return out;
}

std::vector<Batch> batches(const ImageDataset& data, int64_t batch_size,
                           std::optional<uint64_t> shuffle_seed) {
  if (batch_size < 1) throw std::invalid_argument("batches: batch_size must be >= 1");
  const int64_t n = data.size();
  std::vector<int64_t> order(static_cast<size_t>(n));
  for (int64_t i = 0; i < n; ++i) order[static_cast<size_t>(i)] = i;
  if (shuffle_seed) {
    Rng rng(*shuffle_seed);
    for (size_t i = order.size(); i > 1; --i)
      std::swap(order[i - 1], order[static_cast<size_t>(rng.below(static_cast<int64_t>(i)))]);
  }

  const int64_t dim = data.images.numel() / n;
  std::vector<Batch> out;
  for (int64_t start = 0; start < n; start += batch_size) {
    const int64_t count = std::min(batch_size, n - start);
    Batch b;
    b.images = TensorValue::zeros({count, data.images.shape[1], data.images.shape[2],
                                   data.images.shape[3]});
    b.labels.resize(static_cast<size_t>(count));
    for (int64_t i = 0; i < count; ++i) {
      const int64_t src = order[static_cast<size_t>(start + i)];
      std::copy_n(data.images.data.begin() + src * dim, dim, b.images.data.begin() + i * dim);
      b.labels[static_cast<size_t>(i)] = data.labels[static_cast<size_t>(src)];
    }
    out.push_back(std::move(b));
  }
  return out;
}

ImageDataset take_prefix(const ImageDataset& data, int64_t n) {
  if (n <= 0 || n >= data.size()) return data;
  const int64_t dim = data.images.numel() / data.size();
  ImageDataset out;
  out.images = TensorValue::zeros({n, data.images.shape[1], data.images.shape[2],
                                   data.images.shape[3]});
  std::copy_n(data.images.data.begin(), n * dim, out.images.data.begin());
  out.labels.assign(data.labels.begin(), data.labels.begin() + n);
  out.num_classes = data.num_classes;
  return out;
}

}  // namespace aftlab::data
