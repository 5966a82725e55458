#include "pan/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <functional>

#include "pan/autodiff.hpp"
#include "pan/errors.hpp"
#include "pan/rng.hpp"

namespace pan {

namespace {

using TensorD = Tensor<double>;
using VarD = Var<double>;
using TapeD = Tape<double>;

/// A scalar function of several tensors, recorded on a tape.
using Problem = std::function<VarD(TapeD&, const std::vector<VarD>&)>;

struct Case {
  std::vector<TensorD> inputs;
  Problem loss;
};

TensorD random_tensor(Rng& rng, const Shape& shape, double lo = -1.0, double hi = 1.0) {
  TensorD t(shape);
  for (Index i = 0; i < t.size(); ++i) t[i] = rng.uniform(lo, hi);
  return t;
}

/// Values bounded away from zero so relu kinks sit outside the difference stencil.
TensorD away_from_zero(Rng& rng, const Shape& shape) {
  TensorD t(shape);
  for (Index i = 0; i < t.size(); ++i) {
    const double m = rng.uniform(0.05, 1.0);
    t[i] = rng.below(2) ? m : -m;
  }
  return t;
}

/// Distinct values at least 0.01 apart so argmax never flips under perturbation.
TensorD distinct(Rng& rng, const Shape& shape) {
  TensorD t(shape);
  const auto order = rng.permutation<Index>(t.size());
  for (Index i = 0; i < t.size(); ++i) t[i] = 0.01 * double(order[std::size_t(i)]) - 0.5;
  return t;
}

/// mse against a fixed random target turns any op output into a scalar loss.
Problem against_target(TensorD target, std::function<VarD(TapeD&, const std::vector<VarD>&)> op) {
  return [target = std::move(target), op = std::move(op)](TapeD& tape, const std::vector<VarD>& in) {
    return mse(op(tape, in), tape.constant(target));
  };
}

Case make_case(const std::string& layer, Rng& rng) {
  const Index n = 2 + Index(rng.below(2));
  if (layer == "conv2d" || layer == "transposed_conv2d") {
    const Index c = 1 + Index(rng.below(3)), k = 1 + Index(rng.below(3));
    const Index kh = 1 + Index(rng.below(3)), stride = 1 + Index(rng.below(2)), pad = Index(rng.below(2));
    const Index h = 4 + Index(rng.below(3)), w = 4 + Index(rng.below(3));
    if (layer == "conv2d") {
      const Index oh = conv_output_size(h, kh, stride, pad), ow = conv_output_size(w, kh, stride, pad);
      return {{random_tensor(rng, {n, c, h, w}), random_tensor(rng, {k, c, kh, kh}), random_tensor(rng, {k})},
              against_target(random_tensor(rng, {n, k, oh, ow}), [=](TapeD&, const std::vector<VarD>& in) {
                return conv2d(in[0], in[1], in[2], stride, pad);
              })};
    }
    const Index oh = transposed_conv_output_size(h, kh, stride, pad),
                ow = transposed_conv_output_size(w, kh, stride, pad);
    return {{random_tensor(rng, {n, k, h, w}), random_tensor(rng, {k, c, kh, kh}), random_tensor(rng, {c})},
            against_target(random_tensor(rng, {n, c, oh, ow}), [=](TapeD&, const std::vector<VarD>& in) {
              return transposed_conv2d(in[0], in[1], in[2], stride, pad);
            })};
  }
  if (layer == "maxpool2d") {
    const Index window = 2 + Index(rng.below(2)), stride = 1 + Index(rng.below(2));
    const Index h = 4 + Index(rng.below(3));
    const Index o = conv_output_size(h, window, stride, 0);
    return {{distinct(rng, {n, 2, h, h})},
            against_target(random_tensor(rng, {n, 2, o, o}), [=](TapeD&, const std::vector<VarD>& in) {
              return maxpool2d(in[0], window, stride);
            })};
  }
  if (layer == "unpool_nearest") {
    const Index scale = 1 + Index(rng.below(3));
    return {{random_tensor(rng, {n, 2, 3, 3})},
            against_target(random_tensor(rng, {n, 2, 3 * scale, 3 * scale}),
                           [=](TapeD&, const std::vector<VarD>& in) { return unpool_nearest(in[0], scale); })};
  }
  if (layer == "batchnorm_train" || layer == "batchnorm_infer") {
    const bool training = layer == "batchnorm_train";
    const Index c = 1 + Index(rng.below(3));
    TensorD running_mean = random_tensor(rng, {c}, -0.5, 0.5);
    TensorD running_var = random_tensor(rng, {c}, 0.5, 2.0);
    return {{random_tensor(rng, {n + 1, c, 3, 3}), random_tensor(rng, {c}, 0.5, 1.5), random_tensor(rng, {c})},
            against_target(random_tensor(rng, {n + 1, c, 3, 3}),
                           [=](TapeD&, const std::vector<VarD>& in) mutable {
                             return batchnorm(in[0], in[1], in[2], training, running_mean, running_var, false);
                           })};
  }
  if (layer == "dense") {
    const Index d = 2 + Index(rng.below(4)), o = 1 + Index(rng.below(4));
    return {{random_tensor(rng, {n, d}), random_tensor(rng, {d, o}), random_tensor(rng, {o})},
            against_target(random_tensor(rng, {n, o}),
                           [](TapeD&, const std::vector<VarD>& in) { return dense(in[0], in[1], in[2]); })};
  }
  if (layer == "relu") {
    return {{away_from_zero(rng, {n, 6})},
            against_target(random_tensor(rng, {n, 6}), [](TapeD&, const std::vector<VarD>& in) { return relu(in[0]); })};
  }
  if (layer == "softmax") {
    const Index c = 2 + Index(rng.below(4));
    return {{random_tensor(rng, {n, c}, -2, 2)},
            against_target(random_tensor(rng, {n, c}, 0, 1),
                           [](TapeD&, const std::vector<VarD>& in) { return softmax(in[0]); })};
  }
  if (layer == "flatten") {
    return {{random_tensor(rng, {n, 2, 2, 3})},
            against_target(random_tensor(rng, {n, 12}),
                           [](TapeD&, const std::vector<VarD>& in) { return flatten(in[0]); })};
  }
  if (layer == "cross_entropy") {
    const Index c = 2 + Index(rng.below(4));
    std::vector<int> labels(static_cast<std::size_t>(n));
    for (auto& l : labels) l = int(rng.below(std::uint64_t(c)));
    return {{random_tensor(rng, {n, c}, 0.1, 1.0)}, [labels](TapeD&, const std::vector<VarD>& in) {
              return cross_entropy(in[0], std::span<const int>(labels));
            }};
  }
  if (layer == "mse") {
    return {{random_tensor(rng, {n, 5}), random_tensor(rng, {n, 5})},
            [](TapeD&, const std::vector<VarD>& in) { return mse(in[0], in[1]); }};
  }
  throw ContractError("gradcheck: unknown layer '" + layer + "'");
}

double evaluate(const Case& c, const std::vector<TensorD>& inputs) {
  TapeD tape;
  std::vector<VarD> vars;
  for (const auto& t : inputs) vars.push_back(tape.constant(t));
  return c.loss(tape, vars).value().item();
}

double relative_error(const Case& c, bool corrupt) {
  TapeD tape;
  std::vector<VarD> vars;
  for (const auto& t : c.inputs) vars.push_back(tape.variable(t));
  tape.backward(c.loss(tape, vars));

  double diff2 = 0, analytic2 = 0, numeric2 = 0;
  std::vector<TensorD> probe = c.inputs;
  for (std::size_t k = 0; k < probe.size(); ++k) {
    TensorD analytic = tape.grad(vars[k]);
    if (corrupt) analytic.array() *= 1.01;
    for (Index i = 0; i < probe[k].size(); ++i) {
      const double saved = probe[k][i];
      probe[k][i] = saved + kGradcheckStep;
      const double up = evaluate(c, probe);
      probe[k][i] = saved - kGradcheckStep;
      const double down = evaluate(c, probe);
      probe[k][i] = saved;
      const double numeric = (up - down) / (2 * kGradcheckStep);
      diff2 += (analytic[i] - numeric) * (analytic[i] - numeric);
      analytic2 += analytic[i] * analytic[i];
      numeric2 += numeric * numeric;
    }
  }
  const double scale = std::sqrt(std::max(analytic2, numeric2));
  return scale == 0 ? 0.0 : std::sqrt(diff2) / scale;
}

}  // namespace

std::vector<std::string> gradcheck_layers() {
  return {"conv2d",          "transposed_conv2d", "maxpool2d", "unpool_nearest", "batchnorm_train",
          "batchnorm_infer", "dense",             "relu",      "softmax",        "flatten",
          "cross_entropy",   "mse"};
}

std::vector<GradcheckResult> run_gradcheck(std::uint64_t seed, int cases, const std::string& corrupt) {
  const auto layers = gradcheck_layers();
  if (!corrupt.empty() && std::find(layers.begin(), layers.end(), corrupt) == layers.end()) {
    throw ConfigError("gradcheck: unknown layer '" + corrupt + "'");
  }
  std::vector<GradcheckResult> report;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    GradcheckResult r{layers[l], cases, 0.0, true};
    for (int i = 0; i < cases; ++i) {
      Rng rng(derive_seed(derive_seed(seed, l), std::uint64_t(i)));
      const Case c = make_case(layers[l], rng);
      r.max_relative_error = std::max(r.max_relative_error, relative_error(c, layers[l] == corrupt));
    }
    r.passed = r.max_relative_error <= kGradcheckTolerance;
    report.push_back(r);
  }
  return report;
}

}  // namespace pan
