#ifndef PAN_ZOO_HPP
#define PAN_ZOO_HPP

// Constructors for the four network roles: encoder, utility/privacy
// discriminators (MLP classifiers) and reconstructors.

#include <cstdint>
#include <string>
#include <vector>

#include "pan/model.hpp"

namespace pan {

/// Encoder presets: "lenet" (two conv5x5/batchnorm/relu/maxpool2 blocks with
/// 8 and 16 channels), "identity" (no layers) or "custom" with `custom_layers`.
/// `input_shape` is C,H,W (a leading batch axis is accepted and dropped).
Model build_encoder(const Shape& input_shape, const std::string& preset, std::uint64_t seed,
                    const std::vector<LayerSpec>& custom_layers = {});

std::vector<LayerSpec> encoder_preset_layers(const std::string& preset);

/// flatten -> (dense + relu) per hidden width -> dense(num_classes) -> softmax.
Model build_mlp_classifier(const Shape& feature_shape, Index num_classes, const std::vector<Index>& hidden,
                           std::uint64_t seed, const std::string& name = "mlp");

/// Generic unpool + transposed-conv decoder from `feature_shape` to
/// `target_shape`. Presets: "deconv" (3x3 kernels) and "deconv5" (5x5 kernels,
/// twice the hidden channels). Spatial ratios must be integers.
Model build_reconstructor(const Shape& feature_shape, const Shape& target_shape, const std::string& preset,
                          std::uint64_t seed);

/// Layer-for-layer reversal of `encoder`: conv <-> transposed conv, maxpool
/// <-> unpool, batchnorm dropped, fresh weights.
Model mirror_of(const Model& encoder, std::uint64_t seed);

}  // namespace pan

#endif  // PAN_ZOO_HPP
