#include "pan/data.hpp"

#include <zlib.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <memory>

#include "pan/rng.hpp"

namespace pan {

namespace {

constexpr std::uint32_t kImageMagic = 0x00000803;
constexpr std::uint32_t kLabelMagic = 0x00000801;

std::vector<unsigned char> read_maybe_gzip(const std::string& path) {
  {
    std::ifstream probe(path, std::ios::binary);
    if (!probe) throw ParseError(path + ": cannot open file");
  }
  std::unique_ptr<gzFile_s, decltype(&gzclose)> file(gzopen(path.c_str(), "rb"), &gzclose);
  if (!file) throw ParseError(path + ": cannot open file");
  std::vector<unsigned char> bytes;
  unsigned char buffer[1 << 16];
  for (;;) {
    const int got = gzread(file.get(), buffer, sizeof(buffer));
    if (got < 0) throw ParseError(path + ": decompression failed after byte " + std::to_string(bytes.size()));
    if (got == 0) break;
    bytes.insert(bytes.end(), buffer, buffer + got);
  }
  return bytes;
}

std::uint32_t read_be32(std::span<const unsigned char> bytes, std::size_t offset, const std::string& what) {
  if (offset + 4 > bytes.size()) {
    throw ParseError(what + ": unexpected end of data at byte offset " + std::to_string(offset) + " (size " +
                     std::to_string(bytes.size()) + ")");
  }
  return (std::uint32_t(bytes[offset]) << 24) | (std::uint32_t(bytes[offset + 1]) << 16) |
         (std::uint32_t(bytes[offset + 2]) << 8) | std::uint32_t(bytes[offset + 3]);
}

void check_magic(std::uint32_t magic, std::uint32_t expected, const std::string& what) {
  if (magic != expected) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "bad magic 0x%08x at byte offset 0 (expected 0x%08x)", magic, expected);
    throw ParseError(what + ": " + buf);
  }
}

void check_payload(std::size_t offset, std::size_t need, std::size_t have, const std::string& what) {
  if (offset + need > have) {
    throw ParseError(what + ": truncated payload at byte offset " + std::to_string(have) + ", expected " +
                     std::to_string(offset + need) + " bytes");
  }
}

void write_be32(std::ostream& os, std::uint32_t v) {
  const unsigned char b[4] = {static_cast<unsigned char>(v >> 24), static_cast<unsigned char>(v >> 16),
                              static_cast<unsigned char>(v >> 8), static_cast<unsigned char>(v)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

int class_count(const std::vector<int>& labels) {
  return labels.empty() ? 0 : *std::max_element(labels.begin(), labels.end()) + 1;
}

}  // namespace

IdxHeader parse_idx_header(std::span<const unsigned char> bytes, const std::string& what) {
  IdxHeader h;
  h.magic = read_be32(bytes, 0, what);
  if ((h.magic >> 16) != 0 || ((h.magic >> 8) & 0xff) != 0x08) {
    char buf[96];
    std::snprintf(buf, sizeof(buf), "bad magic 0x%08x at byte offset 0 (expected unsigned-byte IDX)", h.magic);
    throw ParseError(what + ": " + buf);
  }
  for (std::uint32_t k = 0; k < (h.magic & 0xff); ++k) h.dims.push_back(read_be32(bytes, 4 + 4 * k, what));
  return h;
}

TensorR parse_idx_images(std::span<const unsigned char> bytes, const std::string& what) {
  check_magic(read_be32(bytes, 0, what), kImageMagic, what);
  const IdxHeader h = parse_idx_header(bytes, what);
  const std::uint32_t count = h.dims[0], rows = h.dims[1], cols = h.dims[2];
  const std::size_t payload = std::size_t(count) * rows * cols;
  check_payload(16, payload, bytes.size(), what);
  if (bytes.size() != 16 + payload) {
    throw ParseError(what + ": " + std::to_string(bytes.size() - 16 - payload) + " trailing bytes after offset " +
                     std::to_string(16 + payload));
  }
  TensorR images({Index(count), 1, Index(rows), Index(cols)});
  for (std::size_t i = 0; i < payload; ++i) images[Index(i)] = Real(bytes[16 + i]) / Real(255);
  return images;
}

std::vector<int> parse_idx_labels(std::span<const unsigned char> bytes, const std::string& what) {
  check_magic(read_be32(bytes, 0, what), kLabelMagic, what);
  const std::uint32_t count = parse_idx_header(bytes, what).dims[0];
  check_payload(8, count, bytes.size(), what);
  if (bytes.size() != 8 + std::size_t(count)) {
    throw ParseError(what + ": trailing bytes after offset " + std::to_string(8 + std::size_t(count)));
  }
  return std::vector<int>(bytes.begin() + 8, bytes.end());
}

std::vector<unsigned char> read_file_bytes(const std::string& path) { return read_maybe_gzip(path); }

Dataset load_idx(const std::string& images_path, const std::string& labels_path) {
  Dataset d;
  d.images = parse_idx_images(read_maybe_gzip(images_path), images_path);
  d.labels = parse_idx_labels(read_maybe_gzip(labels_path), labels_path);
  if (Index(d.labels.size()) != d.size()) {
    throw ParseError(labels_path + ": label count " + std::to_string(d.labels.size()) + " (header at byte offset 4)" +
                     " does not match image count " + std::to_string(d.size()));
  }
  d.num_classes = class_count(d.labels);
  d.train_indices.resize(std::size_t(d.size()));
  for (Index i = 0; i < d.size(); ++i) d.train_indices[std::size_t(i)] = i;
  return d;
}

void save_idx(const Dataset& data, const std::string& images_path, const std::string& labels_path) {
  std::ofstream img(images_path, std::ios::binary);
  std::ofstream lab(labels_path, std::ios::binary);
  if (!img || !lab) throw ParseError("cannot write IDX files " + images_path + ", " + labels_path);
  write_be32(img, kImageMagic);
  write_be32(img, std::uint32_t(data.size()));
  write_be32(img, std::uint32_t(data.images.dim(2)));
  write_be32(img, std::uint32_t(data.images.dim(3)));
  for (Index i = 0; i < data.images.size(); ++i) {
    const double v = std::clamp(double(data.images[i]), 0.0, 1.0);
    img.put(static_cast<char>(static_cast<unsigned char>(std::lround(v * 255.0))));
  }
  write_be32(lab, kLabelMagic);
  write_be32(lab, std::uint32_t(data.labels.size()));
  for (int y : data.labels) lab.put(static_cast<char>(static_cast<unsigned char>(y)));
}

Dataset Dataset::subset(std::span<const Index> indices) const {
  Dataset out;
  Shape shape = images.shape();
  shape[0] = Index(indices.size());
  const Index per = shape_size(sample_shape());
  out.images = TensorR(shape);
  out.labels.reserve(indices.size());
  if (privacy_labels) out.privacy_labels.emplace();
  for (std::size_t k = 0; k < indices.size(); ++k) {
    const Index i = indices[k];
    if (i < 0 || i >= size()) throw IndexError("sample index " + std::to_string(i) + " out of range");
    out.images.array().segment(Index(k) * per, per) = images.array().segment(i * per, per);
    out.labels.push_back(labels[std::size_t(i)]);
    if (privacy_labels) out.privacy_labels->push_back((*privacy_labels)[std::size_t(i)]);
  }
  out.num_classes = num_classes;
  out.num_privacy_classes = num_privacy_classes;
  out.train_indices.resize(indices.size());
  for (std::size_t k = 0; k < indices.size(); ++k) out.train_indices[k] = Index(k);
  return out;
}

void Dataset::validate() const {
  if (images.rank() != 4) throw ContractError("dataset images must be N,C,H,W");
  const auto n = std::size_t(size());
  if (labels.size() != n) throw ContractError("dataset has " + std::to_string(labels.size()) + " labels for " +
                                              std::to_string(n) + " samples");
  for (int y : labels) {
    if (y < 0 || y >= num_classes) throw ContractError("utility label " + std::to_string(y) + " out of range");
  }
  if (privacy_labels) {
    if (privacy_labels->size() != n) throw ContractError("privacy label count does not match sample count");
    for (int z : *privacy_labels) {
      if (z < 0 || z >= num_privacy_classes) throw ContractError("privacy label " + std::to_string(z) + " out of range");
    }
  }
  std::vector<char> seen(n, 0);
  for (const auto* part : {&train_indices, &test_indices}) {
    for (Index i : *part) {
      if (i < 0 || std::size_t(i) >= n) throw ContractError("split index out of range");
      if (seen[std::size_t(i)]++) throw ContractError("split index " + std::to_string(i) + " appears twice");
    }
  }
  if (std::find(seen.begin(), seen.end(), 0) != seen.end()) throw ContractError("split does not cover every sample");
}

Dataset make_synthetic_dual(Index n, std::uint64_t seed) {
  constexpr Index kSide = 16;
  // Faint background: readable by a probe on pixels but not salient enough
  // for the encoder to keep it once the privacy term pushes against it.
  constexpr double kTexture = 0.05;
  constexpr double kNoise = 0.05;
  Rng rng(derive_seed(seed, 0x5d));
  Dataset d;
  d.images = TensorR({n, 1, kSide, kSide});
  d.labels.resize(std::size_t(n));
  d.privacy_labels.emplace(std::size_t(n));
  d.num_classes = 4;
  d.num_privacy_classes = 4;
  for (Index s = 0; s < n; ++s) {
    const int y = int(rng.below(4));
    const int z = int(rng.below(4));
    const Index dy = Index(rng.below(3)) - 1;
    const Index dx = Index(rng.below(3)) - 1;
    d.labels[std::size_t(s)] = y;
    (*d.privacy_labels)[std::size_t(s)] = z;
    auto glyph = [&](Index r, Index c) {
      r -= dy;
      c -= dx;
      switch (y) {
        case 0:  // vertical bar
          return r >= 3 && r <= 12 && (c == 7 || c == 8);
        case 1:  // cross
          return (r >= 3 && r <= 12 && (c == 7 || c == 8)) || (c >= 3 && c <= 12 && (r == 7 || r == 8));
        case 2:  // hollow box
          return r >= 4 && r <= 11 && c >= 4 && c <= 11 && (r == 4 || r == 11 || c == 4 || c == 11);
        default:  // diagonal
          return r >= 3 && r <= 12 && (c == r || c == r + 1);
      }
    };
    auto texture = [&](Index r, Index c) {
      switch (z) {
        case 0:
          return kTexture / 2;
        case 1:
          return (r / 4) % 2 == 0 ? kTexture : 0.0;
        case 2:
          return ((r / 4) + (c / 4)) % 2 == 0 ? kTexture : 0.0;
        default:
          return kTexture * double(c) / double(kSide - 1);
      }
    };
    for (Index r = 0; r < kSide; ++r) {
      for (Index c = 0; c < kSide; ++c) {
        const double v = (glyph(r, c) ? 1.0 : texture(r, c)) + kNoise * rng.normal();
        d.images.at(s, 0, r, c) = Real(std::clamp(v, 0.0, 1.0));
      }
    }
  }
  d.train_indices.resize(std::size_t(n));
  for (Index i = 0; i < n; ++i) d.train_indices[std::size_t(i)] = i;
  return d;
}

Dataset split(Dataset data, double train_fraction, std::uint64_t seed) {
  if (!(train_fraction >= 0.0 && train_fraction <= 1.0)) {
    throw ConfigError("train fraction must lie in [0, 1]");
  }
  Rng rng(derive_seed(seed, 0x5b17));
  const std::vector<Index> order = rng.permutation(data.size());
  const auto cut = std::size_t(std::llround(train_fraction * double(data.size())));
  data.train_indices.assign(order.begin(), order.begin() + std::ptrdiff_t(cut));
  data.test_indices.assign(order.begin() + std::ptrdiff_t(cut), order.end());
  return data;
}

Dataset subsample(const Dataset& data, Index count, std::uint64_t seed) {
  if (count > data.size()) {
    throw ConfigError("cannot subsample " + std::to_string(count) + " of " + std::to_string(data.size()) + " samples");
  }
  Rng rng(derive_seed(seed, 0x5a5));
  std::vector<Index> order = rng.permutation(data.size());
  order.resize(std::size_t(count));
  return data.subset(order);
}

Batch gather(const Dataset& data, std::span<const Index> indices) {
  Dataset part = data.subset(indices);
  Batch b;
  b.images = std::move(part.images);
  b.labels = std::move(part.labels);
  if (part.privacy_labels) b.privacy_labels = std::move(*part.privacy_labels);
  b.indices.assign(indices.begin(), indices.end());
  return b;
}

std::vector<Batch> batches(const Dataset& data, Index batch_size, std::uint64_t seed, Index epoch) {
  if (batch_size < 1) throw ConfigError("batch size must be positive");
  Rng rng(derive_seed(seed, 0xba7c0000ULL + std::uint64_t(epoch)));
  const std::vector<Index> order = rng.permutation(data.size());
  std::vector<Batch> out;
  for (std::size_t start = 0; start < order.size(); start += std::size_t(batch_size)) {
    const std::size_t end = std::min(order.size(), start + std::size_t(batch_size));
    out.push_back(gather(data, std::span<const Index>(order.data() + start, end - start)));
  }
  return out;
}

}  // namespace pan
