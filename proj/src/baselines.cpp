#include "pan/baselines.hpp"

#include <Eigen/Eigenvalues>
#include <ostream>

#include "pan/rng.hpp"

namespace pan {

namespace {

Eigen::MatrixXd as_rows(const TensorR& t) {
  const Index n = t.dim(0);
  return t.matrix(n, t.size() / n).template cast<double>();
}

TensorR select(const TensorR& t, std::span<const Index> rows) {
  Shape shape = t.shape();
  const Index stride = t.size() / shape[0];
  shape[0] = Index(rows.size());
  TensorR out(shape);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    std::copy_n(t.data() + rows[i] * stride, stride, out.data() + Index(i) * stride);
  }
  return out;
}

TradeoffPoint finish(TradeoffPoint point, const AttackerEnsemble& ensemble, const TensorR& test_features,
                     const Dataset& test, const PointLabel& label) {
  const auto u = utility_scores(ensemble, test_features, test.labels);
  point.u = *std::max_element(u.begin(), u.end());
  if (!ensemble.privacy.empty()) {
    double best = 0;
    for (const auto& a : ensemble.privacy) best = std::max(best, accuracy(a.model, test_features, *test.privacy_labels));
    point.p1 = best;
  }
  point.score = tradeoff_score(point, label.score_lambda, label.sign);
  return point;
}

}  // namespace

TensorR add_noise(const TensorR& data, const NoiseSpec& spec) {
  if (spec.scale < 0) throw ConfigError("noise scale must be non-negative");
  Rng rng(spec.seed);
  TensorR out = data;
  if (spec.scale == 0) return out;
  for (Index i = 0; i < out.size(); ++i) {
    const double noise = spec.mechanism == NoiseMechanism::laplace ? rng.laplace(spec.scale)
                                                                     : spec.scale * rng.normal();
    out[i] = Real(double(out[i]) + noise);
  }
  return out;
}

TensorR dp_laplace(const TensorR& data, const NoiseSpec& spec) {
  NoiseSpec s = spec;
  s.mechanism = NoiseMechanism::laplace;
  return add_noise(data, s);
}

TensorR fl_gaussian(const TensorR& data, const NoiseSpec& spec) {
  NoiseSpec s = spec;
  s.mechanism = NoiseMechanism::gaussian;
  return add_noise(data, s);
}

TrainResult train_plain_dnn(const Dataset& train, TrainingConfig config, const Architecture& arch,
                            std::ostream* log) {
  config.lambda2 = 0;
  config.lambda3 = 0;
  return train_pan(train, config, arch, log);
}

PcaBasis fit_pca(const TensorR& features, Index d) {
  if (features.rank() == 0 || features.dim(0) == 0) throw DimensionError("fit_pca: no samples");
  const Eigen::MatrixXd x = as_rows(features);
  if (d < 1 || d > x.cols()) {
    throw ConfigError("fit_pca: " + std::to_string(d) + " components requested for " + std::to_string(x.cols()) +
                      "-dimensional features");
  }
  PcaBasis basis;
  basis.mean = x.colwise().mean().transpose();
  const Eigen::MatrixXd centered = x.rowwise() - basis.mean.transpose();
  const Eigen::MatrixXd cov = centered.transpose() * centered / double(x.rows());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(cov);
  // Eigen sorts ascending; reverse for the leading directions.
  basis.all_eigenvalues = solver.eigenvalues().reverse();
  basis.components = solver.eigenvectors().rowwise().reverse().leftCols(d);
  basis.eigenvalues = basis.all_eigenvalues.head(d);
  return basis;
}

TensorR hybrid_transform(const TensorR& features, const HybridSpec& spec, const PcaBasis& basis) {
  const Eigen::MatrixXd x = as_rows(features);
  if (x.cols() != basis.mean.size()) {
    throw DimensionError("hybrid_transform: features have " + std::to_string(x.cols()) + " values per sample, basis " +
                         std::to_string(basis.mean.size()));
  }
  if (spec.components != basis.components.cols()) {
    throw ConfigError("hybrid_transform: basis has " + std::to_string(basis.components.cols()) +
                      " components, spec asks for " + std::to_string(spec.components));
  }
  Eigen::MatrixXd coeffs = (x.rowwise() - basis.mean.transpose()) * basis.components;
  if (spec.laplace_scale > 0) {
    Rng rng(spec.seed);
    for (Index i = 0; i < coeffs.rows(); ++i) {
      for (Index j = 0; j < coeffs.cols(); ++j) coeffs(i, j) += rng.laplace(spec.laplace_scale);
    }
  }
  const Eigen::MatrixXd back = (coeffs * basis.components.transpose()).rowwise() + basis.mean.transpose();
  TensorR out(features.shape());
  out.matrix(x.rows(), x.cols()) = back.cast<Real>();
  return out;
}

TradeoffPoint evaluate_perturbation(const Dataset& data, const TensorR& perturbed_all, const AttackerBudget& budget,
                                    const PointLabel& label, std::ostream* log) {
  // The perturbed data is itself the estimate of I, so no reconstructor is trained.
  AttackerBudget classifiers_only = budget;
  classifiers_only.reconstructors.clear();
  const Dataset train = data.train(), test = data.test();
  const AttackerEnsemble ensemble = train_attackers_on_features(select(perturbed_all, data.train_indices), train,
                                                                nullptr, classifiers_only, log);
  const TensorR test_features = select(perturbed_all, data.test_indices);
  TradeoffPoint point = labelled_point(label);
  point.p2 = (test_features.array().cast<double>() - test.images.array().cast<double>()).square().mean();
  point.log_p2 = log_normalize(point.p2);
  return finish(point, ensemble, test_features, test, label);
}

TradeoffPoint evaluate_features(const Dataset& data, const Model& encoder, const TensorR& features_all,
                                const AttackerBudget& budget, const PointLabel& label, std::ostream* log) {
  const Dataset train = data.train(), test = data.test();
  const AttackerEnsemble ensemble =
      train_attackers_on_features(select(features_all, data.train_indices), train, &encoder, budget, log);
  const TensorR test_features = select(features_all, data.test_indices);
  TradeoffPoint point = labelled_point(label);
  const auto errors = reconstruction_errors(ensemble, test_features, test.images);
  point.p2 = *std::min_element(errors.begin(), errors.end());
  point.log_p2 = log_normalize(point.p2);
  return finish(point, ensemble, test_features, test, label);
}

}  // namespace pan
