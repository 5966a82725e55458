#include "pan/attack.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>

#include "pan/format.hpp"
#include "pan/rng.hpp"

namespace pan {

namespace {

TensorR take_rows(const TensorR& t, std::span<const Index> rows) {
  Shape shape = t.shape();
  const Index stride = t.size() / shape[0];
  shape[0] = Index(rows.size());
  TensorR out(shape);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    std::copy_n(t.data() + rows[i] * stride, stride, out.data() + Index(i) * stride);
  }
  return out;
}

std::vector<int> take(const std::vector<int>& v, std::span<const Index> rows) {
  std::vector<int> out;
  out.reserve(rows.size());
  for (Index r : rows) out.push_back(v[std::size_t(r)]);
  return out;
}

/// Mini-batch Adam on `model`; `loss` builds the objective for one batch.
template <typename Loss>
void fit(Model& model, const TensorR& inputs, const AttackerBudget& budget, std::uint64_t seed, Loss&& loss) {
  model.set_mode(Mode::train);
  AdamState<Real> adam;
  const Index n = inputs.dim(0);
  for (int epoch = 0; epoch < budget.epochs; ++epoch) {
    Rng rng(derive_seed(seed, std::uint64_t(epoch)));
    const auto order = rng.permutation<Index>(n);
    for (Index start = 0; start < n; start += budget.batch_size) {
      const std::span<const Index> rows(order.data() + start, std::size_t(std::min(budget.batch_size, n - start)));
      TapeR tape;
      NamedVars vars;
      VarR out = model.forward(tape, tape.constant(take_rows(inputs, rows)), &vars, {.trainable = true});
      VarR value = loss(tape, out, rows);
      if (!std::isfinite(value.value().item())) throw TrainingError("attacker '" + model.name() + "' diverged");
      adam_step(model.parameters(), backward(value, vars), adam, budget.lr);
    }
  }
  model.set_mode(Mode::infer);
}

Attacker train_classifier(const std::string& role, const std::vector<Index>& hidden, const TensorR& features,
                          const std::vector<int>& labels, int classes, const AttackerBudget& budget,
                          std::uint64_t seed) {
  std::string name = role + "-mlp";
  for (Index h : hidden) name += "-" + std::to_string(h);
  Model model = build_mlp_classifier(Shape(features.shape().begin() + 1, features.shape().end()), classes, hidden,
                                     derive_seed(seed, 1), name);
  fit(model, features, budget, derive_seed(seed, 2), [&](TapeR&, VarR probs, std::span<const Index> rows) {
    const std::vector<int> y = take(labels, rows);
    return cross_entropy(probs, std::span<const int>(y));
  });
  return {name, std::move(model)};
}

}  // namespace

TensorR encode(const Model& encoder, const TensorR& images) {
  Model frozen = encoder;
  frozen.set_mode(Mode::infer);
  return frozen.predict(images);
}

AttackerEnsemble train_attackers_on_features(const TensorR& train_features, const Dataset& train,
                                             const Model* encoder, const AttackerBudget& budget, std::ostream* log) {
  if (train_features.rank() == 0 || train_features.dim(0) != train.size() || train.size() == 0) {
    throw DimensionError("attackers: " + std::to_string(train.size()) + " samples but features " +
                         shape_string(train_features.shape()));
  }
  const Shape feature_shape(train_features.shape().begin() + 1, train_features.shape().end());
  AttackerEnsemble ensemble;
  std::uint64_t stream = 0;
  auto note = [&](const Attacker& a) {
    if (log) *log << "  trained " << a.name << " (" << a.model.parameter_count() << " parameters)" << std::endl;
  };
  for (const auto& hidden : budget.classifier_hidden) {
    ensemble.utility.push_back(train_classifier("utility", hidden, train_features, train.labels, train.num_classes,
                                                budget, derive_seed(budget.seed, ++stream)));
    note(ensemble.utility.back());
  }
  if (train.has_privacy_labels()) {
    for (const auto& hidden : budget.classifier_hidden) {
      ensemble.privacy.push_back(train_classifier("privacy", hidden, train_features, *train.privacy_labels,
                                                  train.num_privacy_classes, budget,
                                                  derive_seed(budget.seed, ++stream)));
      note(ensemble.privacy.back());
    }
  }
  for (const auto& preset : budget.reconstructors) {
    const std::uint64_t seed = derive_seed(budget.seed, ++stream);
    if (preset == "mirror" && !encoder) continue;
    Model model = preset == "mirror" ? mirror_of(*encoder, derive_seed(seed, 1))
                                     : build_reconstructor(feature_shape, train.sample_shape(), preset,
                                                           derive_seed(seed, 1));
    fit(model, train_features, budget, derive_seed(seed, 2), [&](TapeR& tape, VarR recon, std::span<const Index> rows) {
      return mse(recon, tape.constant(take_rows(train.images, rows)));
    });
    ensemble.reconstructors.push_back({"reconstructor-" + preset, std::move(model)});
    note(ensemble.reconstructors.back());
  }
  return ensemble;
}

AttackerEnsemble train_third_party_attackers(const Model& encoder, const Dataset& data, const AttackerBudget& budget,
                                             std::ostream* log) {
  const Dataset train = data.train();
  AttackerBudget with_mirror = budget;
  auto& presets = with_mirror.reconstructors;
  if (std::find(presets.begin(), presets.end(), "mirror") == presets.end()) presets.push_back("mirror");
  return train_attackers_on_features(encode(encoder, train.images), train, &encoder, with_mirror, log);
}

double accuracy(const Model& classifier, const TensorR& features, const std::vector<int>& labels) {
  const TensorR probs = classifier.predict(features);
  const auto p = probs.matrix(probs.dim(0), probs.dim(1));
  Index correct = 0;
  for (Index i = 0; i < p.rows(); ++i) {
    Index best;
    p.row(i).maxCoeff(&best);
    correct += best == labels[std::size_t(i)];
  }
  return labels.empty() ? 0.0 : 100.0 * double(correct) / double(labels.size());
}

std::vector<double> utility_scores(const AttackerEnsemble& ensemble, const TensorR& features,
                                   const std::vector<int>& labels) {
  std::vector<double> out;
  for (const auto& a : ensemble.utility) out.push_back(accuracy(a.model, features, labels));
  return out;
}

std::vector<double> reconstruction_errors(const AttackerEnsemble& ensemble, const TensorR& features,
                                          const TensorR& images) {
  std::vector<double> out;
  for (const auto& a : ensemble.reconstructors) {
    const TensorR recon = a.model.predict(features);
    out.push_back((recon.array().template cast<double>() - images.array().template cast<double>()).square().mean());
  }
  return out;
}

double eval_utility(const Model& encoder, const AttackerEnsemble& ensemble, const Dataset& test) {
  const auto scores = utility_scores(ensemble, encode(encoder, test.images), test.labels);
  if (scores.empty()) throw ContractError("eval_utility: ensemble has no utility discriminator");
  return *std::max_element(scores.begin(), scores.end());
}

std::optional<double> eval_privacy_p1(const Model& encoder, const AttackerEnsemble& ensemble, const Dataset& test) {
  if (ensemble.privacy.empty() || !test.has_privacy_labels()) return std::nullopt;
  const TensorR features = encode(encoder, test.images);
  double best = 0;
  for (const auto& a : ensemble.privacy) best = std::max(best, accuracy(a.model, features, *test.privacy_labels));
  return best;
}

double log_normalize(double p2) { return std::log10(1.0 + p2); }

ReconstructionPrivacy eval_privacy_p2(const Model& encoder, const AttackerEnsemble& ensemble, const Dataset& test) {
  const auto errors = reconstruction_errors(ensemble, encode(encoder, test.images), test.images);
  if (errors.empty()) throw ContractError("eval_privacy_p2: ensemble has no reconstructor");
  const double p2 = *std::min_element(errors.begin(), errors.end());
  return {p2, log_normalize(p2)};
}

double tradeoff_score(const TradeoffPoint& point, const std::array<double, 3>& lambda, char sign) {
  if (sign != '+' && sign != '-') throw ConfigError(std::string("tradeoff sign must be '+' or '-', got '") + sign + "'");
  double score = lambda[0] * point.u;
  if (point.p1) score += lambda[1] * (100.0 - *point.p1);
  score += (sign == '+' ? 1.0 : -1.0) * lambda[2] * point.log_p2;
  return score;
}

bool dominates(const TradeoffPoint& a, const TradeoffPoint& b, bool use_p1) {
  std::vector<std::pair<double, double>> objectives{{a.u, b.u}, {a.log_p2, b.log_p2}};
  if (use_p1) objectives.emplace_back(100.0 - *a.p1, 100.0 - *b.p1);
  bool strictly = false;
  for (auto [x, y] : objectives) {
    if (x < y) return false;
    strictly = strictly || x > y;
  }
  return strictly;
}

std::vector<TradeoffPoint> pareto_front(const std::vector<TradeoffPoint>& points) {
  const bool use_p1 = std::all_of(points.begin(), points.end(), [](const auto& p) { return p.p1.has_value(); });
  std::vector<TradeoffPoint> front;
  for (const auto& candidate : points) {
    const bool dominated = std::any_of(points.begin(), points.end(),
                                       [&](const auto& other) { return dominates(other, candidate, use_p1); });
    if (!dominated) front.push_back(candidate);
  }
  return front;
}

std::string to_csv_row(const TradeoffPoint& p) {
  return p.method + "," + format_number(p.lambda1) + "," + format_number(p.lambda2) + "," + format_number(p.lambda3) +
         "," + format_number(p.u) + "," + format_number(p.p1) + "," + format_number(p.p2) + "," +
         format_number(p.log_p2) + "," + format_number(p.score);
}

std::string to_csv(const std::vector<TradeoffPoint>& points) {
  std::string out = std::string(kTradeoffHeader) + "\n";
  for (const auto& p : points) out += to_csv_row(p) + "\n";
  return out;
}

TradeoffPoint labelled_point(const PointLabel& label) {
  TradeoffPoint point;
  point.method = label.method;
  point.lambda1 = label.train_lambda[0];
  point.lambda2 = label.train_lambda[1];
  point.lambda3 = label.train_lambda[2];
  return point;
}

TradeoffPoint evaluate_encoder(const Model& encoder, const Dataset& data, const AttackerBudget& budget,
                               const PointLabel& label, std::ostream* log) {
  const AttackerEnsemble ensemble = train_third_party_attackers(encoder, data, budget, log);
  const Dataset test = data.test();
  TradeoffPoint point = labelled_point(label);
  point.u = eval_utility(encoder, ensemble, test);
  point.p1 = eval_privacy_p1(encoder, ensemble, test);
  const auto p2 = eval_privacy_p2(encoder, ensemble, test);
  point.p2 = p2.p2;
  point.log_p2 = p2.log_p2;
  point.score = tradeoff_score(point, label.score_lambda, label.sign);
  return point;
}

}  // namespace pan
