#ifndef PAN_DATA_HPP
#define PAN_DATA_HPP

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "pan/model.hpp"

namespace pan {

/// Samples in [0,1] with utility labels and optional privacy labels, plus a
/// train/test partition of the sample indices.
struct Dataset {
  TensorR images;  // [N,C,H,W]
  std::vector<int> labels;
  std::optional<std::vector<int>> privacy_labels;
  int num_classes = 0;
  int num_privacy_classes = 0;
  std::vector<Index> train_indices;
  std::vector<Index> test_indices;

  Index size() const { return images.rank() > 0 ? images.dim(0) : 0; }
  Shape sample_shape() const { return Shape(images.shape().begin() + 1, images.shape().end()); }
  bool has_privacy_labels() const { return privacy_labels.has_value(); }

  /// Copy of the listed samples; the result has no split.
  Dataset subset(std::span<const Index> indices) const;
  Dataset train() const { return subset(train_indices); }
  Dataset test() const { return subset(test_indices); }

  /// Throws ContractError when labels, class counts or the split are inconsistent.
  void validate() const;
};

struct Batch {
  TensorR images;
  std::vector<int> labels;
  std::vector<int> privacy_labels;  // empty when the dataset has none
  std::vector<Index> indices;
};

/// Reads an IDX image file (magic 0x00000803) and label file (0x00000801).
/// Gzip-compressed files are decompressed transparently. All samples land in
/// the train partition.
Dataset load_idx(const std::string& images_path, const std::string& labels_path);

/// Writes IDX files (uncompressed) with pixels rescaled to 0..255.
void save_idx(const Dataset& data, const std::string& images_path, const std::string& labels_path);

/// Magic number and big-endian dimension sizes at the start of an IDX file.
/// The low byte of the magic is the number of dimensions.
struct IdxHeader {
  std::uint32_t magic = 0;
  std::vector<std::uint32_t> dims;
  std::size_t payload_offset() const { return 4 + 4 * dims.size(); }
};

IdxHeader parse_idx_header(std::span<const unsigned char> bytes, const std::string& what);

/// Whole file contents, gunzipped when compressed.
std::vector<unsigned char> read_file_bytes(const std::string& path);

/// Parses IDX bytes already in memory; `what` names the source in errors.
TensorR parse_idx_images(std::span<const unsigned char> bytes, const std::string& what);
std::vector<int> parse_idx_labels(std::span<const unsigned char> bytes, const std::string& what);

/// n gray 16x16 images: the utility label picks a foreground glyph (bar,
/// cross, box, diagonal), the independent privacy label picks a background
/// texture (flat, stripes, checker, gradient). Pixel noise sigma 0.05, clipped.
Dataset make_synthetic_dual(Index n, std::uint64_t seed);

/// Seeded permutation, first round(fraction * N) indices go to train.
Dataset split(Dataset data, double train_fraction, std::uint64_t seed);

/// Seeded sample of `count` indices without replacement (the result has no split).
Dataset subsample(const Dataset& data, Index count, std::uint64_t seed);

Batch gather(const Dataset& data, std::span<const Index> indices);

/// Every sample of `data` exactly once, in an order fixed by (seed, epoch);
/// the last batch may be short.
std::vector<Batch> batches(const Dataset& data, Index batch_size, std::uint64_t seed, Index epoch);

}  // namespace pan

#endif  // PAN_DATA_HPP
