#include "pan/trainer.hpp"

#include <chrono>
#include <cmath>
#include <ostream>
#include <sstream>

#include "pan/adam.hpp"
#include "pan/format.hpp"
#include "pan/rng.hpp"

namespace pan {

namespace {

// Seed streams for the independent random consumers of one run.
enum : std::uint64_t { kEncoderStream = 1, kUtilityStream, kPrivacyStream, kReconstructorStream, kBatchStream };

/// Parameters of several models addressed as "<role>/<parameter>".
class ParameterSet {
 public:
  void add(const std::string& role, Model& model) { models_.emplace_back(role, &model); }

  Tensor<Real>& operator()(const std::string& name) {
    const auto slash = name.find('/');
    for (auto& [role, model] : models_) {
      if (name.compare(0, slash, role) == 0 && slash == role.size()) {
        return model->parameters().at(name.substr(slash + 1));
      }
    }
    throw ContractError("no parameter '" + name + "'");
  }

 private:
  std::vector<std::pair<std::string, Model*>> models_;
};

NamedVars prefixed(const std::string& role, const NamedVars& vars) {
  NamedVars out;
  out.reserve(vars.size());
  for (const auto& [name, v] : vars) out.emplace_back(role + "/" + name, v);
  return out;
}

void append(NamedVars& dst, const NamedVars& src) { dst.insert(dst.end(), src.begin(), src.end()); }

void require_finite(double value, const char* term, Stage stage, int epoch) {
  if (!std::isfinite(value)) {
    std::ostringstream os;
    os << "non-finite " << term << " in stage '" << to_string(stage) << "' at epoch " << epoch + 1;
    throw TrainingError(os.str());
  }
}

struct RecordedTerms {
  VarR c_u;
  std::optional<VarR> c_p1;
  std::optional<VarR> c_p2;
  VarR c_sum;
};

/// Builds C_sum on `tape`. Only encoder and utility weights are bound as
/// variables when `trainable`; attackers are always frozen here.
RecordedTerms record_c_sum(TapeR& tape, const Batch& batch, Model& encoder, Model& utility, const Model* privacy,
                           const Model& reconstructor, double lambda1, double lambda2, double lambda3,
                           bool trainable, bool update_running, NamedVars* bound) {
  NamedVars enc_vars, ud_vars;
  VarR input = tape.constant(batch.images);
  VarR features = encoder.forward(tape, input, &enc_vars, {.trainable = trainable, .update_running = update_running});
  VarR probs = utility.forward(tape, features, &ud_vars, {.trainable = trainable});
  RecordedTerms terms;
  terms.c_u = cross_entropy(probs, std::span<const int>(batch.labels));
  terms.c_sum = Real(lambda1) * terms.c_u;
  if (lambda2 != 0.0) {
    VarR recon = reconstructor.forward(tape, features);
    terms.c_p2 = mse(recon, tape.constant(batch.images));
    terms.c_sum = terms.c_sum - Real(lambda2) * *terms.c_p2;
  }
  if (lambda3 != 0.0) {
    if (!privacy) throw ConfigError("lambda3 > 0 requires a privacy discriminator");
    if (batch.privacy_labels.size() != batch.labels.size()) {
      throw ConfigError("lambda3 > 0 requires privacy labels");
    }
    VarR pprobs = privacy->forward(tape, features);
    terms.c_p1 = cross_entropy(pprobs, std::span<const int>(batch.privacy_labels));
    terms.c_sum = terms.c_sum - Real(lambda3) * *terms.c_p1;
  }
  if (bound) {
    append(*bound, prefixed("encoder", enc_vars));
    append(*bound, prefixed("utility", ud_vars));
  }
  return terms;
}

}  // namespace

const char* to_string(Stage stage) {
  switch (stage) {
    case Stage::utility:
      return "utility";
    case Stage::privacy:
      return "privacy";
    case Stage::reconstruction:
      return "reconstruction";
    case Stage::adversarial:
      return "adversarial";
  }
  return "?";
}

void TrainingConfig::validate(bool has_privacy_labels) const {
  if (!(lambda1 > 0)) throw ConfigError("lambda1 must be positive");
  if (lambda2 < 0 || lambda3 < 0) throw ConfigError("lambda2 and lambda3 must be non-negative");
  if (lambda3 > 0 && !has_privacy_labels) {
    throw ConfigError("lambda3 > 0 requires a dataset with privacy labels");
  }
  if (inner_steps < 1 || epochs < 1 || batch_size < 1) throw ConfigError("k, epochs and batch size must be positive");
  for (double lr : {lr_utility, lr_privacy, lr_reconstructor, lr_adversarial}) {
    if (!(lr > 0)) throw ConfigError("learning rates must be positive");
  }
}

std::string TrainingHistory::to_csv() const {
  std::string out = "epoch,c_u,c_p1,c_p2,c_sum\n";
  for (const auto& r : epochs) {
    out += std::to_string(r.epoch) + "," + format_number(r.c_u) + "," + format_number(r.c_p1) + "," +
           format_number(r.c_p2) + "," + format_number(r.c_sum) + "\n";
  }
  return out;
}

LossTerms compute_c_sum(const Batch& batch, const Model& encoder, const Model& utility, const Model* privacy,
                        const Model& reconstructor, double lambda1, double lambda2, double lambda3) {
  if (lambda3 > 0 && !privacy) throw ConfigError("lambda3 > 0 requires a privacy discriminator");
  Model enc = encoder;
  Model ud = utility;
  TapeR tape;
  auto terms = record_c_sum(tape, batch, enc, ud, privacy, reconstructor, lambda1, lambda2, lambda3, false, false,
                            nullptr);
  LossTerms out;
  out.c_u = terms.c_u.value().item();
  if (terms.c_p1) out.c_p1 = terms.c_p1->value().item();
  if (terms.c_p2) out.c_p2 = terms.c_p2->value().item();
  out.c_sum = terms.c_sum.value().item();
  return out;
}

TrainResult train_pan(const Dataset& train, const TrainingConfig& config, const Architecture& arch,
                      std::ostream* log, const StageObserver& observer) {
  config.validate(train.has_privacy_labels());
  if (train.size() == 0) throw ConfigError("training set is empty");
  const bool use_privacy = config.lambda3 > 0;
  const std::uint64_t seed = config.seed;

  Model encoder = build_encoder(train.sample_shape(), arch.encoder, derive_seed(seed, kEncoderStream),
                                arch.encoder_layers);
  PanModels models{
      encoder,
      build_mlp_classifier(encoder.output_shape(), train.num_classes, arch.utility_hidden,
                           derive_seed(seed, kUtilityStream), "utility"),
      std::nullopt,
      arch.reconstructor == "mirror"
          ? mirror_of(encoder, derive_seed(seed, kReconstructorStream))
          : build_reconstructor(encoder.output_shape(), train.sample_shape(), arch.reconstructor,
                                derive_seed(seed, kReconstructorStream)),
  };
  if (use_privacy) {
    models.privacy = build_mlp_classifier(encoder.output_shape(), train.num_privacy_classes, arch.privacy_hidden,
                                          derive_seed(seed, kPrivacyStream), "privacy");
  }

  ParameterSet encoder_utility;
  encoder_utility.add("encoder", models.encoder);
  encoder_utility.add("utility", models.utility);
  AdamState<Real> adam_utility, adam_privacy, adam_reconstructor, adam_adversarial;

  auto notify = [&](Stage stage, int epoch) {
    if (observer) observer(stage, epoch, models);
  };

  TrainResult result;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    const auto started = std::chrono::steady_clock::now();
    double sum_u = 0, sum_p1 = 0, sum_p2 = 0, sum_total = 0;
    const std::vector<Batch> epoch_batches =
        batches(train, config.batch_size, derive_seed(seed, kBatchStream), epoch);
    for (const Batch& batch : epoch_batches) {
      double last_u = 0, last_p1 = 0, last_p2 = 0;
      for (int step = 0; step < config.inner_steps; ++step) {
        {  // (a) discriminative: encoder + utility discriminator on C_u
          TapeR tape;
          NamedVars enc_vars, ud_vars;
          VarR features = models.encoder.forward(tape, tape.constant(batch.images), &enc_vars,
                                                 {.trainable = true, .update_running = true});
          VarR probs = models.utility.forward(tape, features, &ud_vars, {.trainable = true});
          VarR loss = cross_entropy(probs, std::span<const int>(batch.labels));
          last_u = loss.value().item();
          require_finite(last_u, "C_u", Stage::utility, epoch);
          NamedVars bound = prefixed("encoder", enc_vars);
          append(bound, prefixed("utility", ud_vars));
          adam_step<Real>(encoder_utility, backward(loss, bound), adam_utility, config.lr_utility);
          notify(Stage::utility, epoch);
        }
        // Stages (b) and (c) see the encoder output as a constant.
        const TensorR features = models.encoder.forward(batch.images);
        if (use_privacy) {  // (b) privacy discriminator on C_p1
          TapeR tape;
          NamedVars vars;
          VarR probs = models.privacy->forward(tape, tape.constant(features), &vars, {.trainable = true});
          VarR loss = cross_entropy(probs, std::span<const int>(batch.privacy_labels));
          last_p1 = loss.value().item();
          require_finite(last_p1, "C_p1", Stage::privacy, epoch);
          adam_step(models.privacy->parameters(), backward(loss, vars), adam_privacy, config.lr_privacy);
          notify(Stage::privacy, epoch);
        }
        {  // (c) reconstructor on C_p2
          TapeR tape;
          NamedVars vars;
          VarR recon = models.reconstructor.forward(tape, tape.constant(features), &vars, {.trainable = true});
          VarR loss = mse(recon, tape.constant(batch.images));
          last_p2 = loss.value().item();
          require_finite(last_p2, "C_p2", Stage::reconstruction, epoch);
          adam_step(models.reconstructor.parameters(), backward(loss, vars), adam_reconstructor,
                    config.lr_reconstructor);
          notify(Stage::reconstruction, epoch);
        }
      }
      {  // (d) adversarial: encoder + utility discriminator on C_sum
        TapeR tape;
        NamedVars bound;
        auto terms = record_c_sum(tape, batch, models.encoder, models.utility,
                                  models.privacy ? &*models.privacy : nullptr, models.reconstructor,
                                  config.lambda1, config.lambda2, config.lambda3, true, true, &bound);
        const double total = terms.c_sum.value().item();
        require_finite(total, "C_sum", Stage::adversarial, epoch);
        adam_step<Real>(encoder_utility, backward(terms.c_sum, bound), adam_adversarial, config.lr_adversarial);
        sum_total += total;
        notify(Stage::adversarial, epoch);
      }
      sum_u += last_u;
      sum_p1 += last_p1;
      sum_p2 += last_p2;
    }
    const double count = double(epoch_batches.size());
    EpochRecord rec;
    rec.epoch = epoch + 1;
    rec.c_u = sum_u / count;
    if (use_privacy) rec.c_p1 = sum_p1 / count;
    rec.c_p2 = sum_p2 / count;
    rec.c_sum = sum_total / count;
    rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    if (log) {
      *log << "epoch " << rec.epoch << "/" << config.epochs << " c_u=" << rec.c_u;
      if (rec.c_p1) *log << " c_p1=" << *rec.c_p1;
      *log << " c_p2=" << rec.c_p2 << " c_sum=" << rec.c_sum << " (" << rec.seconds << "s)" << std::endl;
    }
    result.history.epochs.push_back(rec);
  }

  models.encoder.set_mode(Mode::infer);
  models.utility.set_mode(Mode::infer);
  models.reconstructor.set_mode(Mode::infer);
  if (models.privacy) models.privacy->set_mode(Mode::infer);
  result.models = std::move(models);
  return result;
}

TrainResult train_pan1(const Dataset& train, TrainingConfig config, const Architecture& arch, std::ostream* log) {
  config.lambda3 = 0;
  return train_pan(train, config, arch, log);
}

}  // namespace pan
