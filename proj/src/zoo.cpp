#include "pan/zoo.hpp"

namespace pan {

namespace {

Shape per_sample(const Shape& shape) {
  if (shape.size() == 4) return Shape(shape.begin() + 1, shape.end());
  return shape;
}

std::vector<Index> prime_factors(Index n) {
  std::vector<Index> factors;
  for (Index p = 2; p * p <= n; ++p) {
    while (n % p == 0) {
      factors.push_back(p);
      n /= p;
    }
  }
  if (n > 1) factors.push_back(n);
  return factors;
}

}  // namespace

std::vector<LayerSpec> encoder_preset_layers(const std::string& preset) {
  if (preset == "lenet") {
    return {LayerSpec::conv(8, 5, 1, 2), LayerSpec::of(LayerKind::batchnorm), LayerSpec::of(LayerKind::relu),
            LayerSpec::maxpool(2, 2),    LayerSpec::conv(16, 5, 1, 2),       LayerSpec::of(LayerKind::batchnorm),
            LayerSpec::of(LayerKind::relu), LayerSpec::maxpool(2, 2)};
  }
  if (preset == "identity") return {};
  throw ConfigError("unknown encoder preset '" + preset + "'");
}

Model build_encoder(const Shape& input_shape, const std::string& preset, std::uint64_t seed,
                    const std::vector<LayerSpec>& custom_layers) {
  const Shape shape = per_sample(input_shape);
  if (shape.size() != 3) throw DimensionError("encoder input must be C,H,W; got " + shape_string(input_shape));
  if (shape[1] < 8 || shape[2] < 8) {
    throw DimensionError("encoder input " + shape_string(shape) + " is smaller than 8x8");
  }
  const std::vector<LayerSpec> layers = preset == "custom" ? custom_layers : encoder_preset_layers(preset);
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const LayerKind k = layers[i].kind;
    if (k == LayerKind::dense || k == LayerKind::softmax || k == LayerKind::flatten) {
      throw ConfigError("encoder layer " + std::to_string(i) + " (" + format_layer(layers[i]) +
                        "): encoders are convolutional only");
    }
  }
  return Model("encoder", shape, layers, seed);
}

Model build_mlp_classifier(const Shape& feature_shape, Index num_classes, const std::vector<Index>& hidden,
                           std::uint64_t seed, const std::string& name) {
  if (num_classes < 2) throw ConfigError("classifier needs at least two classes");
  std::vector<LayerSpec> layers{LayerSpec::of(LayerKind::flatten)};
  for (Index width : hidden) {
    layers.push_back(LayerSpec::dense(width));
    layers.push_back(LayerSpec::of(LayerKind::relu));
  }
  layers.push_back(LayerSpec::dense(num_classes));
  layers.push_back(LayerSpec::of(LayerKind::softmax));
  return Model(name, per_sample(feature_shape), std::move(layers), seed);
}

Model build_reconstructor(const Shape& feature_shape, const Shape& target_shape, const std::string& preset,
                          std::uint64_t seed) {
  const Shape from = per_sample(feature_shape);
  const Shape to = per_sample(target_shape);
  if (from.size() != 3 || to.size() != 3) {
    throw DimensionError("reconstructor maps C,H,W to C,H,W; got " + shape_string(from) + " -> " + shape_string(to));
  }
  Index kernel = 3, widen = 1;
  if (preset == "deconv5") {
    kernel = 5;
    widen = 2;
  } else if (preset != "deconv") {
    throw ConfigError("unknown reconstructor preset '" + preset + "'");
  }
  if (to[1] % from[1] != 0 || to[2] % from[2] != 0 || to[1] / from[1] != to[2] / from[2]) {
    throw DimensionError("reconstructor cannot reach " + shape_string(to) + " from " + shape_string(from) +
                         " with integer un-pooling scales");
  }
  const Index ratio = to[1] / from[1];
  std::vector<LayerSpec> layers;
  if (ratio == 1) {
    layers.push_back(LayerSpec::transposed_conv(to[0], 1, 1, 0));
  } else {
    const std::vector<Index> scales = prime_factors(ratio);
    Index channels = from[0];
    for (std::size_t i = 0; i < scales.size(); ++i) {
      const bool last = i + 1 == scales.size();
      channels = last ? to[0] : std::max<Index>(to[0], widen * std::max<Index>(channels / 2, 4));
      layers.push_back(LayerSpec::unpool(scales[i]));
      layers.push_back(LayerSpec::transposed_conv(channels, kernel, 1, kernel / 2));
      if (!last) layers.push_back(LayerSpec::of(LayerKind::relu));
    }
  }
  Model m("reconstructor-" + preset, from, std::move(layers), seed);
  if (m.output_shape() != to) {
    throw DimensionError("reconstructor output " + shape_string(m.output_shape()) + " != target " + shape_string(to));
  }
  return m;
}

Model mirror_of(const Model& encoder, std::uint64_t seed) {
  const auto& layers = encoder.layers();
  const auto& shapes = encoder.layer_shapes();
  std::vector<LayerSpec> mirrored;
  for (std::size_t i = layers.size(); i-- > 0;) {
    const LayerSpec& l = layers[i];
    const Index in_channels = shapes[i][0];
    switch (l.kind) {
      case LayerKind::conv:
        mirrored.push_back(LayerSpec::transposed_conv(in_channels, l.kernel, l.stride, l.padding));
        break;
      case LayerKind::transposed_conv:
        mirrored.push_back(LayerSpec::conv(in_channels, l.kernel, l.stride, l.padding));
        break;
      case LayerKind::maxpool:
        mirrored.push_back(LayerSpec::unpool(l.stride));
        break;
      case LayerKind::unpool:
        mirrored.push_back(LayerSpec::maxpool(l.scale, l.scale));
        break;
      case LayerKind::relu:
        mirrored.push_back(l);
        break;
      case LayerKind::batchnorm:
        break;
      default:
        throw ConfigError("mirror_of: layer " + std::to_string(i) + " (" + format_layer(l) + ") has no mirror");
    }
  }
  Model m("mirror-" + encoder.name(), encoder.output_shape(), std::move(mirrored), seed);
  if (m.output_shape() != encoder.input_shape()) {
    throw DimensionError("mirror of '" + encoder.name() + "' produces " + shape_string(m.output_shape()) +
                         " instead of " + shape_string(encoder.input_shape()));
  }
  return m;
}

}  // namespace pan
