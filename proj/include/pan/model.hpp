#ifndef PAN_MODEL_HPP
#define PAN_MODEL_HPP

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "pan/adam.hpp"
#include "pan/autodiff.hpp"

namespace pan {

using Real = float;
using TensorR = Tensor<Real>;
using TapeR = Tape<Real>;
using VarR = Var<Real>;
using Gradients = GradientRecord<Real>;
using NamedVars = std::vector<std::pair<std::string, VarR>>;

enum class LayerKind { conv, maxpool, batchnorm, dense, relu, softmax, transposed_conv, unpool, flatten };

const char* to_string(LayerKind kind);

/// One layer of a sequential architecture. Unused fields stay zero.
struct LayerSpec {
  LayerKind kind = LayerKind::relu;
  Index channels = 0;  // conv / transposed_conv output channels, dense units
  Index kernel = 0;    // conv kernel size or pooling window
  Index stride = 1;
  Index padding = 0;
  Index scale = 1;  // unpool

  static LayerSpec conv(Index out_channels, Index kernel, Index stride = 1, Index padding = 0);
  static LayerSpec transposed_conv(Index out_channels, Index kernel, Index stride = 1, Index padding = 0);
  static LayerSpec maxpool(Index window, Index stride);
  static LayerSpec unpool(Index scale);
  static LayerSpec dense(Index units);
  static LayerSpec of(LayerKind kind);

  friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

/// Text form used in config files, e.g. "conv:8:5:1:2", "maxpool:2:2", "relu".
std::string format_layer(const LayerSpec& layer);
LayerSpec parse_layer(const std::string& text);
std::string format_layers(const std::vector<LayerSpec>& layers);
std::vector<LayerSpec> parse_layers(const std::string& text);

/// Per-sample output shape of every layer (index 0 is the input shape).
/// Throws DimensionError naming the first layer whose input does not fit.
std::vector<Shape> infer_shapes(const Shape& input_shape, const std::vector<LayerSpec>& layers);

enum class Mode { train, infer };

struct ForwardOptions {
  bool trainable = true;        // parameters become tape variables
  bool update_running = false;  // training-mode batchnorm updates running statistics
};

/// Sequential network: an ordered layer list plus the named tensors it owns.
///
/// Trainable weights live in `parameters()`; batchnorm running statistics are
/// buffers. Both are part of the serialized state. Names follow
/// "<kind><layer index>.<role>", e.g. "conv0.weight" or "batchnorm1.running_var".
class Model {
 public:
  Model() = default;
  /// Validates the shape chain and draws He-uniform initial weights from `seed`.
  Model(std::string name, Shape input_shape, std::vector<LayerSpec> layers, std::uint64_t seed);

  const std::string& name() const { return name_; }
  const Shape& input_shape() const { return input_shape_; }
  const Shape& output_shape() const { return shapes_.back(); }
  const std::vector<Shape>& layer_shapes() const { return shapes_; }
  const std::vector<LayerSpec>& layers() const { return layers_; }

  ParameterMap<Real>& parameters() { return parameters_; }
  const ParameterMap<Real>& parameters() const { return parameters_; }
  ParameterMap<Real>& buffers() { return buffers_; }
  const ParameterMap<Real>& buffers() const { return buffers_; }
  Index parameter_count() const;

  /// Parameters and buffers in name order, the serialized state.
  std::vector<std::pair<std::string, const TensorR*>> state() const;
  /// Replaces a parameter or buffer; shape must match.
  void set_tensor(const std::string& name, TensorR value);

  Mode mode() const { return mode_; }
  void set_mode(Mode mode) { mode_ = mode; }

  /// Records the forward pass on `tape`. Parameter variables are appended to
  /// `bound` when `options.trainable` is set.
  VarR forward(TapeR& tape, VarR input, NamedVars* bound, ForwardOptions options);

  /// Records the forward pass with every weight held constant; gradients
  /// still flow to `input`. Running statistics are not updated.
  VarR forward(TapeR& tape, VarR input) const;

  /// Forward evaluation without gradient bookkeeping. Batch statistics are
  /// used in train mode but running statistics are left untouched.
  TensorR forward(const TensorR& input) const;

  /// Batched forward over a large input in chunks of `chunk` samples
  /// (inference mode only, where chunking does not change results).
  TensorR predict(const TensorR& input, Index chunk = 256) const;

 private:
  std::string name_;
  Shape input_shape_;
  std::vector<LayerSpec> layers_;
  std::vector<Shape> shapes_;
  ParameterMap<Real> parameters_;
  ParameterMap<Real> buffers_;
  Mode mode_ = Mode::train;
};

/// Bitwise equality of every parameter and buffer.
bool same_weights(const Model& a, const Model& b);

}  // namespace pan

#endif  // PAN_MODEL_HPP
