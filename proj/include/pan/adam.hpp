#ifndef PAN_ADAM_HPP
#define PAN_ADAM_HPP

#include <cmath>
#include <cstdint>
#include <map>
#include <string>

#include "pan/autodiff.hpp"

namespace pan {

template <typename Scalar>
struct AdamState {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::int64_t step = 0;
  std::map<std::string, Tensor<Scalar>> first_moment;
  std::map<std::string, Tensor<Scalar>> second_moment;
};

template <typename Scalar>
using ParameterMap = std::map<std::string, Tensor<Scalar>>;

/// One bias-corrected Adam update of every parameter named in `grads`.
/// Moments are created lazily on first use.
template <typename Scalar, typename ParameterLookup>
void adam_step(ParameterLookup&& parameter, const GradientRecord<Scalar>& grads, AdamState<Scalar>& state,
               double learning_rate) {
  state.step += 1;
  const double t = double(state.step);
  const double correction1 = 1.0 - std::pow(state.beta1, t);
  const double correction2 = 1.0 - std::pow(state.beta2, t);
  const Scalar b1 = Scalar(state.beta1), b2 = Scalar(state.beta2);
  const Scalar step_size = Scalar(learning_rate / correction1);
  const Scalar inv_sqrt_c2 = Scalar(1.0 / std::sqrt(correction2));
  const Scalar eps = Scalar(state.epsilon);
  for (const auto& [name, g] : grads) {
    Tensor<Scalar>& theta = parameter(name);
    if (theta.shape() != g.shape()) {
      throw DimensionError("adam_step: gradient " + shape_string(g.shape()) + " for parameter '" + name +
                           "' of shape " + shape_string(theta.shape()));
    }
    auto [m_it, m_new] = state.first_moment.try_emplace(name, theta.shape());
    auto [v_it, v_new] = state.second_moment.try_emplace(name, theta.shape());
    auto& m = m_it->second.array();
    auto& v = v_it->second.array();
    m = b1 * m + (Scalar(1) - b1) * g.array();
    v = b2 * v + (Scalar(1) - b2) * g.array().square();
    theta.array() -= step_size * m / (v.sqrt() * inv_sqrt_c2 + eps);
  }
}

/// Overload for a plain name -> tensor map.
template <typename Scalar>
void adam_step(ParameterMap<Scalar>& params, const GradientRecord<Scalar>& grads, AdamState<Scalar>& state,
               double learning_rate) {
  adam_step<Scalar>(
      [&params](const std::string& name) -> Tensor<Scalar>& {
        auto it = params.find(name);
        if (it == params.end()) throw ContractError("adam_step: unknown parameter '" + name + "'");
        return it->second;
      },
      grads, state, learning_rate);
}

}  // namespace pan

#endif  // PAN_ADAM_HPP
