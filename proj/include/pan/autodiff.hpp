#ifndef PAN_AUTODIFF_HPP
#define PAN_AUTODIFF_HPP

#include <functional>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "pan/ops.hpp"

namespace pan {

/// Partial derivatives of a scalar loss, keyed by parameter name.
template <typename Scalar>
using GradientRecord = std::map<std::string, Tensor<Scalar>>;

template <typename Scalar>
class Tape;

/// Handle to a value recorded on a Tape.
template <typename Scalar>
class Var {
 public:
  Var() = default;
  Var(Tape<Scalar>* tape, std::size_t id) : tape_(tape), id_(id) {}

  const Tensor<Scalar>& value() const { return tape_->value(*this); }
  const Shape& shape() const { return value().shape(); }
  bool requires_grad() const { return tape_->requires_grad(*this); }
  Tape<Scalar>* tape() const { return tape_; }
  std::size_t id() const { return id_; }

 private:
  Tape<Scalar>* tape_ = nullptr;
  std::size_t id_ = 0;
};

/// Linear record of operations for reverse-mode differentiation.
///
/// Nodes are appended in evaluation order, so a reverse sweep over the node
/// list is a valid topological order. A tape is single-use: record a forward
/// pass, call backward once, read gradients.
template <typename Scalar>
class Tape {
 public:
  using TensorT = Tensor<Scalar>;
  using VarT = Var<Scalar>;

  /// A leaf that never receives gradient (data, frozen weights).
  VarT constant(TensorT value) { return push(std::move(value), false, {}); }

  /// A leaf whose gradient is accumulated (trainable parameter).
  VarT variable(TensorT value) { return push(std::move(value), true, {}); }

  const TensorT& value(VarT v) const { return nodes_.at(v.id()).value; }
  bool requires_grad(VarT v) const { return nodes_.at(v.id()).requires_grad; }

  /// Gradient of the last backward() target with respect to `v`; zeros when
  /// `v` was not on the path to the loss.
  TensorT grad(VarT v) const {
    const Node& node = nodes_.at(v.id());
    return node.grad.empty() && node.value.size() != 0 ? TensorT(node.value.shape()) : node.grad;
  }

  /// Records an op result. `backprop` receives the output gradient and must
  /// route it to the inputs through accumulate().
  VarT record(TensorT value, std::initializer_list<VarT> inputs,
              std::function<void(const TensorT& grad_out)> backprop) {
    bool needs = false;
    for (const VarT& in : inputs) needs = needs || requires_grad(in);
    return push(std::move(value), needs, needs ? std::move(backprop) : nullptr);
  }

  void accumulate(VarT v, const TensorT& g) {
    Node& node = nodes_.at(v.id());
    if (!node.requires_grad) return;
    if (node.grad.empty() && node.value.size() != 0) {
      node.grad = g;
    } else {
      node.grad.array() += g.array();
    }
  }

  /// Reverse sweep from a scalar loss.
  void backward(VarT loss) {
    if (loss.tape() != this) throw ContractError("backward: loss recorded on a different tape");
    if (value(loss).size() != 1) {
      throw ContractError("backward: loss must be a scalar, got shape " + shape_string(value(loss).shape()));
    }
    for (auto& node : nodes_) node.grad = TensorT();
    if (!requires_grad(loss)) return;
    nodes_[loss.id()].grad = TensorT::constant(value(loss).shape(), Scalar(1));
    for (std::size_t i = loss.id() + 1; i-- > 0;) {
      Node& node = nodes_[i];
      if (node.backprop && !node.grad.empty()) {
        const TensorT g = node.grad;
        node.backprop(g);
      }
    }
  }

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    TensorT value;
    TensorT grad;
    bool requires_grad = false;
    std::function<void(const TensorT&)> backprop;
  };

  VarT push(TensorT value, bool requires_grad, std::function<void(const TensorT&)> backprop) {
    nodes_.push_back(Node{std::move(value), TensorT(), requires_grad, std::move(backprop)});
    return VarT(this, nodes_.size() - 1);
  }

  std::vector<Node> nodes_;
};

/// Runs the reverse sweep and collects gradients for the named parameters.
/// Parameters not reachable from `loss` receive zero gradients.
template <typename Scalar>
GradientRecord<Scalar> backward(Var<Scalar> loss, std::span<const std::pair<std::string, Var<Scalar>>> params) {
  loss.tape()->backward(loss);
  GradientRecord<Scalar> record;
  for (const auto& [name, var] : params) {
    if (!record.emplace(name, loss.tape()->grad(var)).second) {
      throw ContractError("backward: duplicate parameter name '" + name + "'");
    }
  }
  return record;
}

template <typename Scalar>
GradientRecord<Scalar> backward(Var<Scalar> loss, const std::vector<std::pair<std::string, Var<Scalar>>>& params) {
  return backward(loss, std::span<const std::pair<std::string, Var<Scalar>>>(params));
}

// ---------------------------------------------------------------------------
// Differentiable operations on tape variables

template <typename Scalar>
Var<Scalar> conv2d(Var<Scalar> x, Var<Scalar> w, Var<Scalar> b, Index stride, Index padding) {
  Tape<Scalar>& t = *x.tape();
  return t.record(conv2d(x.value(), w.value(), b.value(), stride, padding), {x, w, b},
                  [&t, x, w, b, stride, padding](const Tensor<Scalar>& g) {
                    auto grads = conv2d_backward(x.value(), w.value(), g, stride, padding, x.requires_grad());
                    if (x.requires_grad()) t.accumulate(x, grads.input);
                    t.accumulate(w, grads.kernels);
                    t.accumulate(b, grads.bias);
                  });
}

template <typename Scalar>
Var<Scalar> transposed_conv2d(Var<Scalar> x, Var<Scalar> w, Var<Scalar> b, Index stride, Index padding) {
  Tape<Scalar>& t = *x.tape();
  return t.record(transposed_conv2d(x.value(), w.value(), b.value(), stride, padding), {x, w, b},
                  [&t, x, w, b, stride, padding](const Tensor<Scalar>& g) {
                    auto grads =
                        transposed_conv2d_backward(x.value(), w.value(), g, stride, padding, x.requires_grad());
                    if (x.requires_grad()) t.accumulate(x, grads.input);
                    t.accumulate(w, grads.kernels);
                    t.accumulate(b, grads.bias);
                  });
}

template <typename Scalar>
Var<Scalar> maxpool2d(Var<Scalar> x, Index window, Index stride) {
  Tape<Scalar>& t = *x.tape();
  auto pooled = maxpool2d(x.value(), window, stride);
  return t.record(std::move(pooled.output), {x},
                  [&t, x, argmax = std::move(pooled.argmax)](const Tensor<Scalar>& g) {
                    t.accumulate(x, maxpool2d_backward<Scalar>(x.shape(), argmax, g));
                  });
}

template <typename Scalar>
Var<Scalar> unpool_nearest(Var<Scalar> x, Index scale) {
  Tape<Scalar>& t = *x.tape();
  return t.record(unpool_nearest(x.value(), scale), {x},
                  [&t, x, scale](const Tensor<Scalar>& g) { t.accumulate(x, unpool_nearest_backward(g, scale)); });
}

/// Batch normalization. In training mode the running statistics are updated
/// in place when `update_running` is set.
template <typename Scalar>
Var<Scalar> batchnorm(Var<Scalar> x, Var<Scalar> gamma, Var<Scalar> beta, bool training,
                      Tensor<Scalar>& running_mean, Tensor<Scalar>& running_var, bool update_running) {
  Tape<Scalar>& t = *x.tape();
  auto r = batchnorm(x.value(), gamma.value(), beta.value(), training, running_mean, running_var);
  if (training && update_running) {
    update_running_stats(r.cache, x.value().size() / x.value().dim(1), running_mean, running_var);
  }
  return t.record(std::move(r.output), {x, gamma, beta},
                  [&t, x, gamma, beta, cache = std::move(r.cache)](const Tensor<Scalar>& g) {
                    auto grads = batchnorm_backward(g, gamma.value(), cache);
                    t.accumulate(x, grads.input);
                    t.accumulate(gamma, grads.gamma);
                    t.accumulate(beta, grads.beta);
                  });
}

template <typename Scalar>
Var<Scalar> dense(Var<Scalar> x, Var<Scalar> w, Var<Scalar> b) {
  Tape<Scalar>& t = *x.tape();
  return t.record(dense(x.value(), w.value(), b.value()), {x, w, b}, [&t, x, w, b](const Tensor<Scalar>& g) {
    auto grads = dense_backward(x.value(), w.value(), g, x.requires_grad());
    if (x.requires_grad()) t.accumulate(x, grads.input);
    t.accumulate(w, grads.weights);
    t.accumulate(b, grads.bias);
  });
}

template <typename Scalar>
Var<Scalar> relu(Var<Scalar> x) {
  Tape<Scalar>& t = *x.tape();
  return t.record(relu(x.value()), {x},
                  [&t, x](const Tensor<Scalar>& g) { t.accumulate(x, relu_backward(x.value(), g)); });
}

template <typename Scalar>
Var<Scalar> softmax(Var<Scalar> x) {
  Tape<Scalar>& t = *x.tape();
  Var<Scalar> out;
  out = t.record(softmax(x.value()), {x}, [&t, x, id = t.size()](const Tensor<Scalar>& g) {
    t.accumulate(x, softmax_backward(t.value(Var<Scalar>(&t, id)), g));
  });
  return out;
}

/// Reshape keeping the leading (batch) axis: [N, ...] -> [N, prod(...)].
template <typename Scalar>
Var<Scalar> flatten(Var<Scalar> x) {
  Tape<Scalar>& t = *x.tape();
  const Shape in_shape = x.shape();
  const Index n = in_shape.empty() ? 1 : in_shape[0];
  const Index rest = n == 0 ? shape_size(Shape(in_shape.begin() + 1, in_shape.end())) : x.value().size() / n;
  return t.record(x.value().reshaped({n, rest}), {x},
                  [&t, x, in_shape](const Tensor<Scalar>& g) { t.accumulate(x, g.reshaped(in_shape)); });
}

template <typename Scalar>
Var<Scalar> cross_entropy(Var<Scalar> probabilities, std::span<const int> labels) {
  Tape<Scalar>& t = *probabilities.tape();
  const Scalar loss = cross_entropy(probabilities.value(), labels);
  return t.record(Tensor<Scalar>::scalar(loss), {probabilities},
                  [&t, probabilities, labels = std::vector<int>(labels.begin(), labels.end())](
                      const Tensor<Scalar>& g) {
                    t.accumulate(probabilities, cross_entropy_backward(probabilities.value(), labels, g.item()));
                  });
}

template <typename Scalar>
Var<Scalar> mse(Var<Scalar> a, Var<Scalar> b) {
  Tape<Scalar>& t = *a.tape();
  return t.record(Tensor<Scalar>::scalar(mse(a.value(), b.value())), {a, b}, [&t, a, b](const Tensor<Scalar>& g) {
    if (a.requires_grad()) t.accumulate(a, mse_backward(a.value(), b.value(), g.item()));
    if (b.requires_grad()) t.accumulate(b, mse_backward(b.value(), a.value(), g.item()));
  });
}

namespace detail {
template <typename Scalar>
void require_same_shape(Var<Scalar> a, Var<Scalar> b, const char* what) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(what) + ": shapes " + shape_string(a.shape()) + " and " +
                         shape_string(b.shape()) + " differ");
  }
}
}  // namespace detail

template <typename Scalar>
Var<Scalar> operator+(Var<Scalar> a, Var<Scalar> b) {
  detail::require_same_shape(a, b, "add");
  Tape<Scalar>& t = *a.tape();
  return t.record(Tensor<Scalar>(a.shape(), a.value().array() + b.value().array()), {a, b},
                  [&t, a, b](const Tensor<Scalar>& g) {
                    t.accumulate(a, g);
                    t.accumulate(b, g);
                  });
}

template <typename Scalar>
Var<Scalar> operator-(Var<Scalar> a, Var<Scalar> b) {
  detail::require_same_shape(a, b, "subtract");
  Tape<Scalar>& t = *a.tape();
  return t.record(Tensor<Scalar>(a.shape(), a.value().array() - b.value().array()), {a, b},
                  [&t, a, b](const Tensor<Scalar>& g) {
                    t.accumulate(a, g);
                    t.accumulate(b, Tensor<Scalar>(g.shape(), -g.array()));
                  });
}

/// Elementwise product.
template <typename Scalar>
Var<Scalar> operator*(Var<Scalar> a, Var<Scalar> b) {
  detail::require_same_shape(a, b, "multiply");
  Tape<Scalar>& t = *a.tape();
  return t.record(Tensor<Scalar>(a.shape(), a.value().array() * b.value().array()), {a, b},
                  [&t, a, b](const Tensor<Scalar>& g) {
                    t.accumulate(a, Tensor<Scalar>(g.shape(), g.array() * b.value().array()));
                    t.accumulate(b, Tensor<Scalar>(g.shape(), g.array() * a.value().array()));
                  });
}

template <typename Scalar>
Var<Scalar> operator*(Scalar s, Var<Scalar> a) {
  Tape<Scalar>& t = *a.tape();
  return t.record(Tensor<Scalar>(a.shape(), a.value().array() * s), {a}, [&t, a, s](const Tensor<Scalar>& g) {
    t.accumulate(a, Tensor<Scalar>(g.shape(), g.array() * s));
  });
}

}  // namespace pan

#endif  // PAN_AUTODIFF_HPP
