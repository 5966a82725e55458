#ifndef PAN_TRAINER_HPP
#define PAN_TRAINER_HPP

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "pan/data.hpp"
#include "pan/zoo.hpp"

namespace pan {

/// Multipliers, loop sizes and per-stage Adam learning rates of the
/// alternating privacy-adversarial training.
struct TrainingConfig {
  double lambda1 = 0.4;  // utility cross entropy
  double lambda2 = 0.3;  // reconstruction error (subtracted)
  double lambda3 = 0.3;  // privacy cross entropy (subtracted)
  int inner_steps = 3;   // k
  int epochs = 20;       // n
  Index batch_size = 64;  // m
  double lr_utility = 1e-3;        // l1: encoder + utility discriminator on C_u
  double lr_privacy = 1e-3;        // l2: privacy discriminator on C_p1
  double lr_reconstructor = 1e-3;  // l3: reconstructor on C_p2
  double lr_adversarial = 1e-3;    // l4: encoder + utility discriminator on C_sum
  std::uint64_t seed = 1;

  /// Throws ConfigError on negative multipliers, lambda1 <= 0, non-positive
  /// sizes or rates, or lambda3 > 0 without privacy labels.
  void validate(bool has_privacy_labels) const;
};

/// Network presets used to instantiate the four roles.
struct Architecture {
  std::string encoder = "lenet";
  std::vector<LayerSpec> encoder_layers;  // for encoder == "custom"
  std::vector<Index> utility_hidden{128};
  std::vector<Index> privacy_hidden{128};
  std::string reconstructor = "mirror";  // "mirror" or a build_reconstructor preset
};

struct EpochRecord {
  int epoch = 0;
  double c_u = 0;
  std::optional<double> c_p1;  // absent when the privacy discriminator is disabled
  double c_p2 = 0;
  double c_sum = 0;
  double seconds = 0;
};

struct TrainingHistory {
  std::vector<EpochRecord> epochs;

  /// "epoch,c_u,c_p1,c_p2,c_sum" rows; wall-clock is left out so the file is
  /// reproducible.
  std::string to_csv() const;
};

struct PanModels {
  Model encoder;
  Model utility;
  std::optional<Model> privacy;
  Model reconstructor;
};

struct LossTerms {
  double c_u = 0;
  std::optional<double> c_p1;
  std::optional<double> c_p2;
  double c_sum = 0;
};

/// lambda1*C_u - lambda2*C_p2 - lambda3*C_p1 on one batch, every term
/// mean-reduced. Terms with a zero multiplier are not evaluated. Models are
/// evaluated in their current mode and are not modified.
LossTerms compute_c_sum(const Batch& batch, const Model& encoder, const Model& utility, const Model* privacy,
                        const Model& reconstructor, double lambda1, double lambda2, double lambda3);

enum class Stage { utility, privacy, reconstruction, adversarial };
const char* to_string(Stage stage);

/// Called after every parameter update with the models as they stand.
using StageObserver = std::function<void(Stage, int epoch, const PanModels&)>;

struct TrainResult {
  PanModels models;
  TrainingHistory history;
};

/// Alternating mini-batch training. For each batch: k rounds of
///   (a) encoder + utility discriminator descend C_u        (rate l1)
///   (b) privacy discriminator descends C_p1, if lambda3 > 0 (rate l2)
///   (c) reconstructor descends C_p2                          (rate l3)
/// followed by one encoder + utility discriminator step on C_sum (rate l4).
/// Stages (b) and (c) never touch encoder weights. Models are returned in
/// inference mode.
TrainResult train_pan(const Dataset& train, const TrainingConfig& config, const Architecture& arch,
                      std::ostream* log = nullptr, const StageObserver& observer = {});

/// train_pan with the privacy discriminator disabled (lambda3 forced to 0).
TrainResult train_pan1(const Dataset& train, TrainingConfig config, const Architecture& arch,
                       std::ostream* log = nullptr);

}  // namespace pan

#endif  // PAN_TRAINER_HPP
