#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "aftlab/tensor.hpp"

namespace aftlab::data {

/// Labeled image batch container. Pixels always live in [0,1].
struct ImageDataset {
  TensorValue images;  // [N×C×H×W]
  std::vector<int64_t> labels;
  int64_t num_classes = 0;

  int64_t size() const { return images.shape.empty() ? 0 : images.shape[0]; }
  void validate() const;  // pixel/label range invariants
};

struct TransferSplit {
  ImageDataset source;
  ImageDataset target_train;
  ImageDataset target_test;
};

struct SynthSpec {
  int64_t n_per_class = 100;
  int64_t channels = 1;
  int64_t height = 8;
  int64_t width = 8;
  int64_t num_classes = 10;
  double cluster_separation = 0.4;
  double noise_sigma = 0.1;
  uint64_t seed = 0;
};

struct Batch {
  TensorValue images;
  std::vector<int64_t> labels;
};

/// Reads big-endian IDX files (images magic 0x00000803 with dims [N,H,W],
/// labels magic 0x00000801 with dim [N]); pixel bytes are divided by 255.
ImageDataset load_idx(const std::string& images_path, const std::string& labels_path);

/// Writes a dataset back to the IDX pair, quantizing pixels to bytes with
/// round(p*255). A dataset that came from load_idx round-trips bitwise.
void save_idx(const ImageDataset& data, const std::string& images_path,
              const std::string& labels_path);

/// Gaussian clusters around per-class templates drawn uniformly around mid
/// gray: template = clamp01(0.5 + separation·(u - 0.5)), sample =
/// clamp01(template + N(0, sigma)). Deterministic given the seed.
ImageDataset synth_clusters(const SynthSpec& spec);

/// Splits one dataset into a source task and a target train/test pair over
/// disjoint class subsets; labels are remapped to contiguous ranges and the
/// target split is stratified per class with a seeded shuffle.
TransferSplit class_split(const ImageDataset& data, const std::vector<int64_t>& source_classes,
                          const std::vector<int64_t>& target_classes, double test_fraction,
                          uint64_t seed);

/// Batches in dataset order, or a seeded permutation when shuffle_seed is
/// set. The final partial batch is retained.
std::vector<Batch> batches(const ImageDataset& data, int64_t batch_size,
                           std::optional<uint64_t> shuffle_seed = std::nullopt);

/// First n examples (deterministic subset used to bound evaluation cost);
/// n <= 0 means the whole set.
ImageDataset take_prefix(const ImageDataset& data, int64_t n);

}  // namespace aftlab::data
