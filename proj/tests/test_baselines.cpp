#include <cmath>

#include "doctest.h"
#include "oracles.hpp"
#include "pan/baselines.hpp"

using namespace pan;

namespace {

struct Moments {
  double mean = 0, mean_square = 0;
};

Moments noise_moments(const TensorR& clean, const TensorR& noisy) {
  Moments m;
  for (Index i = 0; i < clean.size(); ++i) {
    const double e = double(noisy[i]) - double(clean[i]);
    m.mean += e;
    m.mean_square += e * e;
  }
  m.mean /= double(clean.size());
  m.mean_square /= double(clean.size());
  return m;
}

// Mean squared residual per sample, the covariance convention of fit_pca.
double residual(const TensorR& x, const TensorR& y) {
  double total = 0;
  for (Index i = 0; i < x.size(); ++i) total += (double(x[i]) - double(y[i])) * (double(x[i]) - double(y[i]));
  return total / double(x.dim(0));
}

}  // namespace

TEST_CASE("Laplace noise calibration") {
  const TensorR clean = TensorR::constant({1000, 1, 10, 10}, 0.5f);
  const TensorR noisy = dp_laplace(clean, {NoiseMechanism::laplace, 0.1, 3});
  const Moments m = noise_moments(clean, noisy);
  CHECK(std::abs(m.mean) < 0.005);
  CHECK(m.mean_square == doctest::Approx(2 * 0.1 * 0.1).epsilon(0.1));
  CHECK(noisy.array().maxCoeff() > 1);  // not clipped

  CHECK(dp_laplace(clean, {NoiseMechanism::laplace, 0.0, 3}) == clean);
  CHECK(dp_laplace(clean, {NoiseMechanism::laplace, 0.1, 3}) == noisy);
  CHECK_FALSE(dp_laplace(clean, {NoiseMechanism::laplace, 0.1, 4}) == noisy);
  for (int f = 1; f <= 9; ++f) CHECK_NOTHROW(dp_laplace(clean, {NoiseMechanism::laplace, f / 10.0, 1}));
  CHECK_THROWS_AS(dp_laplace(clean, {NoiseMechanism::laplace, -0.1, 1}), ConfigError);
}

TEST_CASE("Gaussian noise calibration") {
  const double sigma = normalized_sigma(40);
  CHECK(sigma == doctest::Approx(0.1569).epsilon(1e-3));
  const TensorR clean = TensorR::constant({1000, 1, 10, 10}, 0.25f);
  const TensorR noisy = fl_gaussian(clean, {NoiseMechanism::gaussian, sigma, 5});
  const Moments m = noise_moments(clean, noisy);
  CHECK(std::abs(m.mean) < 0.005);
  CHECK(m.mean_square == doctest::Approx(0.0246).epsilon(0.1));
  CHECK(m.mean_square == doctest::Approx(sigma * sigma).epsilon(0.1));
  CHECK(fl_gaussian(clean, {NoiseMechanism::gaussian, 0.0, 5}) == clean);
  CHECK(fl_gaussian(clean, {NoiseMechanism::gaussian, sigma, 5}) == noisy);
}

TEST_CASE("PCA against a Jacobi eigensolver") {
  Rng rng(8);
  const Index n = 50, dim = 8;
  TensorR x = oracle::random_tensor<float>(rng, {n, dim});
  // Uneven scales so the spectrum is well separated.
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < dim; ++j) x[i * dim + j] *= Real(1 + j);

  std::vector<double> mean(dim, 0.0), cov(std::size_t(dim * dim), 0.0);
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < dim; ++j) mean[std::size_t(j)] += x[i * dim + j] / double(n);
  for (Index i = 0; i < n; ++i)
    for (Index a = 0; a < dim; ++a)
      for (Index b = 0; b < dim; ++b)
        cov[std::size_t(a * dim + b)] +=
            (x[i * dim + a] - mean[std::size_t(a)]) * (x[i * dim + b] - mean[std::size_t(b)]) / double(n);
  std::vector<double> values, vectors;
  oracle::jacobi_eigen(cov, dim, values, vectors);

  const PcaBasis basis = fit_pca(x, 4);
  REQUIRE(basis.all_eigenvalues.size() == dim);
  for (Index j = 0; j < dim; ++j) CHECK(basis.all_eigenvalues[j] == doctest::Approx(values[std::size_t(j)]).epsilon(1e-4));
  for (Index j = 0; j < 4; ++j) {
    CHECK(basis.eigenvalues[j] == doctest::Approx(values[std::size_t(j)]).epsilon(1e-4));
    // Eigenvectors agree up to sign.
    double dot = 0;
    for (Index r = 0; r < dim; ++r) dot += basis.components(r, j) * vectors[std::size_t(r * dim + j)];
    CHECK(std::abs(dot) == doctest::Approx(1.0).epsilon(1e-4));
  }
  const Eigen::MatrixXd gram = basis.components.transpose() * basis.components;
  CHECK((gram - Eigen::MatrixXd::Identity(4, 4)).cwiseAbs().maxCoeff() < 1e-4);

  // Projection error equals the discarded eigenvalue mass.
  const TensorR projected = hybrid_transform(x, {4, 0.0, 1}, basis);
  double discarded = 0;
  for (Index j = 4; j < dim; ++j) discarded += values[std::size_t(j)];
  CHECK(residual(x, projected) == doctest::Approx(discarded).epsilon(1e-3));

  double prev = INFINITY;
  for (Index d = 1; d <= dim; ++d) {
    const double r = residual(x, hybrid_transform(x, {d, 0.0, 1}, fit_pca(x, d)));
    CHECK(r <= prev + 1e-6);
    prev = r;
  }
  CHECK_THROWS_AS(fit_pca(x, dim + 1), ConfigError);
  CHECK_THROWS_AS(fit_pca(x, 0), ConfigError);
}

TEST_CASE("PCA trivial cases") {
  // Axis-aligned data: variance only along the second axis.
  TensorR axis({4, 3}, {0, -2, 0, 0, -1, 0, 0, 1, 0, 0, 2, 0});
  const PcaBasis a = fit_pca(axis, 1);
  CHECK(std::abs(a.components(1, 0)) == doctest::Approx(1.0));
  CHECK(a.eigenvalues[0] == doctest::Approx(2.5));

  // Points on a line survive a rank-1 round trip.
  TensorR line({5, 2}, {0, 0, 1, 2, 2, 4, -1, -2, 3, 6});
  CHECK(residual(line, hybrid_transform(line, {1, 0.0, 1}, fit_pca(line, 1))) < 1e-8);

  Rng rng(2);
  const TensorR x = oracle::random_tensor<float>(rng, {30, 1, 2, 3});
  const TensorR full = hybrid_transform(x, {6, 0.0, 1}, fit_pca(x, 6));
  CHECK(full.shape() == x.shape());
  CHECK((full.array() - x.array()).abs().maxCoeff() < 1e-4);

  const TensorR noisy = hybrid_transform(x, {3, 0.5, 7}, fit_pca(x, 3));
  CHECK(noisy == hybrid_transform(x, {3, 0.5, 7}, fit_pca(x, 3)));
  CHECK(residual(x, noisy) > residual(x, hybrid_transform(x, {3, 0.0, 7}, fit_pca(x, 3))));
}

TEST_CASE("plain DNN equals the degenerate PAN configuration") {
  Dataset d = make_synthetic_dual(96, 1);
  d = split(d, 1.0, 1);
  TrainingConfig c;
  c.epochs = 1;
  c.batch_size = 32;
  const TrainResult plain = train_plain_dnn(d, c, Architecture{});
  c.lambda2 = c.lambda3 = 0;
  const TrainResult pan = train_pan(d, c, Architecture{});
  CHECK(plain.history.to_csv() == pan.history.to_csv());
  CHECK(same_weights(plain.models.encoder, pan.models.encoder));
  CHECK(same_weights(plain.models.utility, pan.models.utility));
}

TEST_CASE("perturbation baseline evaluation") {
  const Dataset d = split(make_synthetic_dual(400, 2), 0.75, 2);
  AttackerBudget budget;
  budget.epochs = 3;
  budget.classifier_hidden = {{16}};
  PointLabel label;
  label.method = "dp-0.1";
  const TradeoffPoint p = evaluate_perturbation(d, dp_laplace(d.images, {NoiseMechanism::laplace, 0.1, 1}), budget, label);
  CHECK(p.method == "dp-0.1");
  CHECK(p.p2 == doctest::Approx(0.02).epsilon(0.1));
  REQUIRE(p.p1);
  CHECK(p.u > 0);
  CHECK(p.score == doctest::Approx(tradeoff_score(p, label.score_lambda, label.sign)));

  const TradeoffPoint clean = evaluate_perturbation(d, d.images, budget, label);
  CHECK(clean.p2 == 0);
  CHECK(clean.log_p2 == 0);
}
