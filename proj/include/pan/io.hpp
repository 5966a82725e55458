#ifndef PAN_IO_HPP
#define PAN_IO_HPP

// Model weight files and run configuration files.

#include <array>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "pan/attack.hpp"
#include "pan/baselines.hpp"
#include "pan/trainer.hpp"

namespace pan {

/// Named tensor container. Binary layout, little-endian throughout:
///   "PANW" | u32 version (1) | u32 name length | name bytes | u32 tensor count |
///   per tensor: u32 name length | name | u32 rank | u32 dims[rank] | f32 payload.
struct ModelFile {
  std::string name;
  std::vector<std::pair<std::string, TensorR>> tensors;

  friend bool operator==(const ModelFile&, const ModelFile&) = default;
};

inline constexpr std::uint32_t kModelFileVersion = 1;

std::vector<unsigned char> serialize_model_file(const ModelFile& file);
ModelFile parse_model_file(std::span<const unsigned char> bytes, const std::string& what = "model file");
void save_model_file(const ModelFile& file, const std::string& path);
ModelFile load_model_file(const std::string& path);

/// Parameters and buffers of `model` in name order.
ModelFile to_model_file(const Model& model);
/// Copies every tensor of `file` into `model`; names and shapes must match exactly.
void load_into(Model& model, const ModelFile& file);

struct DatasetConfig {
  std::string name = "mnist-desk";  // mnist-desk | idx | synthetic
  std::string images = "data/mnist-desk/images-idx3-ubyte.gz";
  std::string labels = "data/mnist-desk/labels-idx1-ubyte.gz";
  Index size = 0;  // samples kept (0 = all); sample count for synthetic
  double train_fraction = 0.8;
  std::uint64_t seed = 1;
};

struct SweepConfig {
  std::vector<std::array<double, 3>> points;  // lambda triples
};

struct BaselineConfig {
  std::vector<double> dp_factors{0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9};
  double fl_sigma = 40;
  double pixel_range = 255;
  std::vector<Index> hybrid_components{8, 32};
  std::vector<double> hybrid_factors{0.1, 0.5};
  std::uint64_t seed = 1;
};

struct RunConfig {
  DatasetConfig dataset;
  Architecture model;
  TrainingConfig train;
  AttackerBudget eval;
  std::array<double, 3> score_lambda{0.4, 0.3, 0.3};
  char score_sign = '+';
  SweepConfig sweep;
  BaselineConfig baseline;

  RunConfig();
};

/// key=value lines, '#' starts a comment, dotted keys. Unknown keys and
/// malformed values raise ConfigError naming the key and line.
RunConfig parse_config(const std::string& text);
/// Every key, in a fixed order; parse_config(serialize_config(c)) reproduces c.
std::string serialize_config(const RunConfig& config);
RunConfig load_config(const std::string& path);
std::vector<std::string> config_keys();

/// Dataset described by the config, split into train and test.
Dataset load_dataset(const DatasetConfig& config);

}  // namespace pan

#endif  // PAN_IO_HPP
