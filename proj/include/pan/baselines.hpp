#ifndef PAN_BASELINES_HPP
#define PAN_BASELINES_HPP

// Comparison schemes: pixel noise (Laplace, Gaussian), plain DNN features and
// PCA-compressed noisy DNN features.

#include <cstdint>
#include <iosfwd>
#include <vector>

#include "pan/attack.hpp"
#include "pan/trainer.hpp"

namespace pan {

enum class NoiseMechanism { laplace, gaussian };

/// `scale` is the Laplace b or Gaussian sigma on the [0,1] pixel scale.
struct NoiseSpec {
  NoiseMechanism mechanism = NoiseMechanism::laplace;
  double scale = 0.1;
  std::uint64_t seed = 1;
};

/// Gaussian sigma given on the 0..255 scale, mapped to [0,1] pixels.
inline double normalized_sigma(double sigma, double pixel_range = 255.0) { return sigma / pixel_range; }

/// data + Laplace(0, b) elementwise, not clipped. Expected MSE is 2b^2.
TensorR dp_laplace(const TensorR& data, const NoiseSpec& spec);

/// data + N(0, sigma^2) elementwise, not clipped. Expected MSE is sigma^2.
TensorR fl_gaussian(const TensorR& data, const NoiseSpec& spec);

TensorR add_noise(const TensorR& data, const NoiseSpec& spec);

/// Encoder + utility discriminator trained without privacy terms.
TrainResult train_plain_dnn(const Dataset& train, TrainingConfig config, const Architecture& arch,
                            std::ostream* log = nullptr);

/// Leading principal directions of row samples.
struct PcaBasis {
  Eigen::VectorXd mean;         // D
  Eigen::MatrixXd components;   // D x d, orthonormal columns
  Eigen::VectorXd eigenvalues;  // d, descending; covariance normalized by N
  Eigen::VectorXd all_eigenvalues;  // D, descending
};

/// `features` is [N, ...], flattened per sample to D values.
PcaBasis fit_pca(const TensorR& features, Index d);

struct HybridSpec {
  Index components = 8;
  double laplace_scale = 0.1;
  std::uint64_t seed = 1;
};

/// Projects onto the basis, adds Laplace noise to the coefficients and maps
/// back to the original feature shape.
TensorR hybrid_transform(const TensorR& features, const HybridSpec& spec, const PcaBasis& basis);

/// Tradeoff point for a perturbation that replaces the raw data: u and p1 come
/// from classifiers trained on the perturbed train split, p2 is the MSE
/// between perturbed and clean test images.
TradeoffPoint evaluate_perturbation(const Dataset& data, const TensorR& perturbed_all, const AttackerBudget& budget,
                                    const PointLabel& label, std::ostream* log = nullptr);

/// Tradeoff point for perturbed encoder features; reconstructors include the
/// encoder mirror.
TradeoffPoint evaluate_features(const Dataset& data, const Model& encoder, const TensorR& features_all,
                                const AttackerBudget& budget, const PointLabel& label, std::ostream* log = nullptr);

}  // namespace pan

#endif  // PAN_BASELINES_HPP
