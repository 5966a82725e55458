#ifndef PAN_OPS_HPP
#define PAN_OPS_HPP

// Forward and backward kernels for the layer types used by the encoder,
// discriminators and reconstructors. All kernels are pure functions of their
// arguments; the reverse-mode tape in autodiff.hpp wires them together.

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "pan/tensor.hpp"

namespace pan {

inline constexpr double kBatchNormEpsilon = 1e-5;
inline constexpr double kLogClamp = 1e-7;
inline constexpr double kBatchNormMomentum = 0.1;

namespace detail {

inline void require_rank(const Shape& shape, Index rank, const char* what) {
  if (Index(shape.size()) != rank) {
    throw DimensionError(std::string(what) + " expects rank " + std::to_string(rank) + " but got " +
                         shape_string(shape));
  }
}

/// Sliding-window geometry shared by conv2d, its adjoint and im2col.
struct WindowGeometry {
  Index channels, in_h, in_w, kernel_h, kernel_w, stride, pad, out_h, out_w;
  Index col_rows() const { return channels * kernel_h * kernel_w; }
  Index col_cols() const { return out_h * out_w; }
};

inline Index window_output(Index in, Index kernel, Index stride, Index pad, const char* what) {
  if (stride < 1) throw DimensionError(std::string(what) + ": stride must be positive");
  if (pad < 0) throw DimensionError(std::string(what) + ": padding must be non-negative");
  if (kernel < 1 || kernel > in + 2 * pad) {
    throw DimensionError(std::string(what) + ": kernel " + std::to_string(kernel) +
                         " does not fit padded extent " + std::to_string(in + 2 * pad));
  }
  return (in + 2 * pad - kernel) / stride + 1;
}

/// Output columns [lo, hi) whose stride-1 input column lies inside the image.
inline std::pair<Index, Index> valid_columns(const WindowGeometry& g, Index kj) {
  const Index lo = std::clamp<Index>(g.pad - kj, 0, g.out_w);
  const Index hi = std::clamp<Index>(g.in_w + g.pad - kj, lo, g.out_w);
  return {lo, hi};
}

template <typename Scalar>
void im2col(const Scalar* image, const WindowGeometry& g, Scalar* cols) {
  const Index plane = g.col_cols();
  for (Index c = 0; c < g.channels; ++c) {
    for (Index ki = 0; ki < g.kernel_h; ++ki) {
      for (Index kj = 0; kj < g.kernel_w; ++kj) {
        Scalar* row = cols + ((c * g.kernel_h + ki) * g.kernel_w + kj) * plane;
        for (Index oy = 0; oy < g.out_h; ++oy) {
          const Index iy = oy * g.stride - g.pad + ki;
          Scalar* dst = row + oy * g.out_w;
          if (iy < 0 || iy >= g.in_h) {
            std::fill(dst, dst + g.out_w, Scalar(0));
            continue;
          }
          const Scalar* src = image + (c * g.in_h + iy) * g.in_w;
          if (g.stride == 1) {
            const auto [lo, hi] = valid_columns(g, kj);
            std::fill(dst, dst + lo, Scalar(0));
            std::copy(src + lo - g.pad + kj, src + hi - g.pad + kj, dst + lo);
            std::fill(dst + hi, dst + g.out_w, Scalar(0));
            continue;
          }
          for (Index ox = 0; ox < g.out_w; ++ox) {
            const Index ix = ox * g.stride - g.pad + kj;
            dst[ox] = (ix >= 0 && ix < g.in_w) ? src[ix] : Scalar(0);
          }
        }
      }
    }
  }
}

/// Scatter-add of im2col columns back into an image (adjoint of im2col).
template <typename Scalar>
void col2im(const Scalar* cols, const WindowGeometry& g, Scalar* image) {
  const Index plane = g.col_cols();
  for (Index c = 0; c < g.channels; ++c) {
    for (Index ki = 0; ki < g.kernel_h; ++ki) {
      for (Index kj = 0; kj < g.kernel_w; ++kj) {
        const Scalar* row = cols + ((c * g.kernel_h + ki) * g.kernel_w + kj) * plane;
        for (Index oy = 0; oy < g.out_h; ++oy) {
          const Index iy = oy * g.stride - g.pad + ki;
          if (iy < 0 || iy >= g.in_h) continue;
          Scalar* dst = image + (c * g.in_h + iy) * g.in_w;
          const Scalar* src = row + oy * g.out_w;
          if (g.stride == 1) {
            const auto [lo, hi] = valid_columns(g, kj);
            Scalar* shifted = dst - g.pad + kj;
            for (Index ox = lo; ox < hi; ++ox) shifted[ox] += src[ox];
            continue;
          }
          for (Index ox = 0; ox < g.out_w; ++ox) {
            const Index ix = ox * g.stride - g.pad + kj;
            if (ix >= 0 && ix < g.in_w) dst[ix] += src[ox];
          }
        }
      }
    }
  }
}

template <typename Scalar>
void check_conv_params(const Tensor<Scalar>& kernels, const Tensor<Scalar>& bias, Index bias_len,
                       Index in_channels, Index kernel_in_axis, const char* what) {
  require_rank(kernels.shape(), 4, what);
  if (kernels.dim(kernel_in_axis) != in_channels) {
    throw DimensionError(std::string(what) + ": kernel " + shape_string(kernels.shape()) +
                         " does not match " + std::to_string(in_channels) + " input channels");
  }
  if (bias.size() != bias_len) {
    throw DimensionError(std::string(what) + ": bias length " + std::to_string(bias.size()) +
                         " != " + std::to_string(bias_len));
  }
}

inline Index channel_spatial(const Shape& shape) {
  Index s = 1;
  for (std::size_t i = 2; i < shape.size(); ++i) s *= shape[i];
  return s;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Convolution

/// Output size of a conv2d window along one axis.
inline Index conv_output_size(Index in, Index kernel, Index stride, Index pad) {
  return detail::window_output(in, kernel, stride, pad, "conv2d");
}

/// Output size of transposed_conv2d along one axis.
inline Index transposed_conv_output_size(Index in, Index kernel, Index stride, Index pad) {
  const Index out = (in - 1) * stride - 2 * pad + kernel;
  if (stride < 1 || pad < 0 || kernel < 1 || out < 1) {
    throw DimensionError("transposed_conv2d: input " + std::to_string(in) + ", kernel " + std::to_string(kernel) +
                         ", stride " + std::to_string(stride) + ", padding " + std::to_string(pad) +
                         " gives empty output");
  }
  return out;
}

/// Cross-correlation of x[N,C,H,W] with kernels[K,C,kh,kw] plus bias[K].
template <typename Scalar>
Tensor<Scalar> conv2d(const Tensor<Scalar>& input, const Tensor<Scalar>& kernels, const Tensor<Scalar>& bias,
                      Index stride, Index padding) {
  detail::require_rank(input.shape(), 4, "conv2d input");
  const Index n = input.dim(0), c = input.dim(1), h = input.dim(2), w = input.dim(3);
  detail::check_conv_params(kernels, bias, kernels.rank() == 4 ? kernels.dim(0) : 0, c, 1, "conv2d");
  const Index k = kernels.dim(0), kh = kernels.dim(2), kw = kernels.dim(3);
  const detail::WindowGeometry g{c, h, w, kh, kw, stride, padding,
                                 detail::window_output(h, kh, stride, padding, "conv2d"),
                                 detail::window_output(w, kw, stride, padding, "conv2d")};
  Tensor<Scalar> out({n, k, g.out_h, g.out_w});
  RowMajorMatrix<Scalar> cols(g.col_rows(), g.col_cols());
  const auto weights = kernels.matrix(k, g.col_rows());
  const auto b = bias.array().matrix();
  for (Index i = 0; i < n; ++i) {
    detail::im2col(input.data() + i * c * h * w, g, cols.data());
    Eigen::Map<RowMajorMatrix<Scalar>> dst(out.data() + i * k * g.col_cols(), k, g.col_cols());
    dst.noalias() = weights * cols;
    dst.colwise() += b;
  }
  return out;
}

template <typename Scalar>
struct ConvGrads {
  Tensor<Scalar> input, kernels, bias;
};

/// Gradients of conv2d. `need_input` = false skips the input gradient.
template <typename Scalar>
ConvGrads<Scalar> conv2d_backward(const Tensor<Scalar>& input, const Tensor<Scalar>& kernels,
                                  const Tensor<Scalar>& grad_out, Index stride, Index padding,
                                  bool need_input = true) {
  const Index n = input.dim(0), c = input.dim(1), h = input.dim(2), w = input.dim(3);
  const Index k = kernels.dim(0), kh = kernels.dim(2), kw = kernels.dim(3);
  const detail::WindowGeometry g{c, h, w, kh, kw, stride, padding, grad_out.dim(2), grad_out.dim(3)};
  ConvGrads<Scalar> grads{need_input ? Tensor<Scalar>(input.shape()) : Tensor<Scalar>(),
                          Tensor<Scalar>(kernels.shape()), Tensor<Scalar>({k})};
  RowMajorMatrix<Scalar> cols(g.col_rows(), g.col_cols());
  RowMajorMatrix<Scalar> dcols(g.col_rows(), g.col_cols());
  auto dw = grads.kernels.matrix(k, g.col_rows());
  const auto weights = kernels.matrix(k, g.col_rows());
  for (Index i = 0; i < n; ++i) {
    Eigen::Map<const RowMajorMatrix<Scalar>> dy(grad_out.data() + i * k * g.col_cols(), k, g.col_cols());
    detail::im2col(input.data() + i * c * h * w, g, cols.data());
    dw.noalias() += dy * cols.transpose();
    grads.bias.array() += dy.rowwise().sum().array();
    if (need_input) {
      dcols.noalias() = weights.transpose() * dy;
      detail::col2im(dcols.data(), g, grads.input.data() + i * c * h * w);
    }
  }
  return grads;
}

/// Adjoint of conv2d: x[N,K,H,W] with kernels[K,C,kh,kw] gives [N,C,H',W'],
/// H' = (H-1)*stride - 2*padding + kh, plus bias[C].
template <typename Scalar>
Tensor<Scalar> transposed_conv2d(const Tensor<Scalar>& input, const Tensor<Scalar>& kernels,
                                 const Tensor<Scalar>& bias, Index stride, Index padding) {
  detail::require_rank(input.shape(), 4, "transposed_conv2d input");
  const Index n = input.dim(0), k = input.dim(1), h = input.dim(2), w = input.dim(3);
  detail::check_conv_params(kernels, bias, kernels.rank() == 4 ? kernels.dim(1) : 0, k, 0, "transposed_conv2d");
  const Index c = kernels.dim(1), kh = kernels.dim(2), kw = kernels.dim(3);
  const Index oh = transposed_conv_output_size(h, kh, stride, padding);
  const Index ow = transposed_conv_output_size(w, kw, stride, padding);
  const detail::WindowGeometry g{c, oh, ow, kh, kw, stride, padding, h, w};
  Tensor<Scalar> out({n, c, oh, ow});
  RowMajorMatrix<Scalar> cols(g.col_rows(), g.col_cols());
  const auto weights = kernels.matrix(k, g.col_rows());
  for (Index i = 0; i < n; ++i) {
    Eigen::Map<const RowMajorMatrix<Scalar>> x(input.data() + i * k * h * w, k, h * w);
    cols.noalias() = weights.transpose() * x;
    Scalar* dst = out.data() + i * c * oh * ow;
    detail::col2im(cols.data(), g, dst);
    for (Index ch = 0; ch < c; ++ch) {
      Eigen::Map<Eigen::Array<Scalar, Eigen::Dynamic, 1>>(dst + ch * oh * ow, oh * ow) += bias[ch];
    }
  }
  return out;
}

template <typename Scalar>
ConvGrads<Scalar> transposed_conv2d_backward(const Tensor<Scalar>& input, const Tensor<Scalar>& kernels,
                                             const Tensor<Scalar>& grad_out, Index stride, Index padding,
                                             bool need_input = true) {
  const Index n = input.dim(0), k = input.dim(1), h = input.dim(2), w = input.dim(3);
  const Index c = kernels.dim(1), kh = kernels.dim(2), kw = kernels.dim(3);
  const Index oh = grad_out.dim(2), ow = grad_out.dim(3);
  const detail::WindowGeometry g{c, oh, ow, kh, kw, stride, padding, h, w};
  ConvGrads<Scalar> grads{need_input ? Tensor<Scalar>(input.shape()) : Tensor<Scalar>(),
                          Tensor<Scalar>(kernels.shape()), Tensor<Scalar>({c})};
  RowMajorMatrix<Scalar> dcols(g.col_rows(), g.col_cols());
  auto dw = grads.kernels.matrix(k, g.col_rows());
  const auto weights = kernels.matrix(k, g.col_rows());
  for (Index i = 0; i < n; ++i) {
    const Scalar* dy = grad_out.data() + i * c * oh * ow;
    detail::im2col(dy, g, dcols.data());
    Eigen::Map<const RowMajorMatrix<Scalar>> x(input.data() + i * k * h * w, k, h * w);
    dw.noalias() += x * dcols.transpose();
    if (need_input) {
      Eigen::Map<RowMajorMatrix<Scalar>> dx(grads.input.data() + i * k * h * w, k, h * w);
      dx.noalias() = weights * dcols;
    }
    for (Index ch = 0; ch < c; ++ch) {
      grads.bias[ch] += Eigen::Map<const Eigen::Array<Scalar, Eigen::Dynamic, 1>>(dy + ch * oh * ow, oh * ow).sum();
    }
  }
  return grads;
}

// ---------------------------------------------------------------------------
// Pooling

template <typename Scalar>
struct PoolResult {
  Tensor<Scalar> output;
  std::vector<Index> argmax;  // flat input index per output element
};

/// Max pooling; ties resolve to the lowest linear index.
template <typename Scalar>
PoolResult<Scalar> maxpool2d(const Tensor<Scalar>& input, Index window, Index stride) {
  detail::require_rank(input.shape(), 4, "maxpool2d input");
  const Index n = input.dim(0), c = input.dim(1), h = input.dim(2), w = input.dim(3);
  if (window < 1 || window > h || window > w) {
    throw DimensionError("maxpool2d: window " + std::to_string(window) + " larger than input " +
                         shape_string(input.shape()));
  }
  const Index oh = detail::window_output(h, window, stride, 0, "maxpool2d");
  const Index ow = detail::window_output(w, window, stride, 0, "maxpool2d");
  PoolResult<Scalar> r{Tensor<Scalar>({n, c, oh, ow}), std::vector<Index>(std::size_t(n * c * oh * ow))};
  Index o = 0;
  for (Index plane = 0; plane < n * c; ++plane) {
    const Index base = plane * h * w;
    for (Index oy = 0; oy < oh; ++oy) {
      for (Index ox = 0; ox < ow; ++ox, ++o) {
        Index best = base + (oy * stride) * w + ox * stride;
        for (Index dy = 0; dy < window; ++dy) {
          for (Index dx = 0; dx < window; ++dx) {
            const Index idx = base + (oy * stride + dy) * w + ox * stride + dx;
            if (input[idx] > input[best]) best = idx;
          }
        }
        r.output[o] = input[best];
        r.argmax[std::size_t(o)] = best;
      }
    }
  }
  return r;
}

template <typename Scalar>
Tensor<Scalar> maxpool2d_backward(const Shape& input_shape, std::span<const Index> argmax,
                                  const Tensor<Scalar>& grad_out) {
  Tensor<Scalar> grad(input_shape);
  for (Index o = 0; o < grad_out.size(); ++o) grad[argmax[std::size_t(o)]] += grad_out[o];
  return grad;
}

/// Nearest-value un-pooling: each spatial value becomes a scale x scale block.
template <typename Scalar>
Tensor<Scalar> unpool_nearest(const Tensor<Scalar>& input, Index scale) {
  detail::require_rank(input.shape(), 4, "unpool_nearest input");
  if (scale < 1) throw DimensionError("unpool_nearest: scale must be >= 1");
  const Index n = input.dim(0), c = input.dim(1), h = input.dim(2), w = input.dim(3);
  const Index oh = h * scale, ow = w * scale;
  Tensor<Scalar> out({n, c, oh, ow});
  for (Index plane = 0; plane < n * c; ++plane) {
    for (Index y = 0; y < oh; ++y) {
      const Scalar* src = input.data() + (plane * h + y / scale) * w;
      Scalar* dst = out.data() + (plane * oh + y) * ow;
      for (Index x = 0; x < ow; ++x) dst[x] = src[x / scale];
    }
  }
  return out;
}

template <typename Scalar>
Tensor<Scalar> unpool_nearest_backward(const Tensor<Scalar>& grad_out, Index scale) {
  const Index n = grad_out.dim(0), c = grad_out.dim(1), oh = grad_out.dim(2), ow = grad_out.dim(3);
  const Index h = oh / scale, w = ow / scale;
  Tensor<Scalar> grad({n, c, h, w});
  for (Index plane = 0; plane < n * c; ++plane) {
    for (Index y = 0; y < oh; ++y) {
      const Scalar* src = grad_out.data() + (plane * oh + y) * ow;
      Scalar* dst = grad.data() + (plane * h + y / scale) * w;
      for (Index x = 0; x < ow; ++x) dst[x / scale] += src[x];
    }
  }
  return grad;
}

// ---------------------------------------------------------------------------
// Batch normalization (channel axis 1; works for [N,C] and [N,C,H,W])

template <typename Scalar>
struct BatchNormCache {
  Tensor<Scalar> normalized;                     // x-hat
  Eigen::Array<Scalar, Eigen::Dynamic, 1> inv_std;  // per channel
  Eigen::Array<Scalar, Eigen::Dynamic, 1> mean;     // batch mean (train) or running mean (infer)
  Eigen::Array<Scalar, Eigen::Dynamic, 1> variance; // biased batch variance (train) or running variance
  bool training = true;
};

template <typename Scalar>
struct BatchNormResult {
  Tensor<Scalar> output;
  BatchNormCache<Scalar> cache;
};

/// Normalizes with batch statistics (training) or the supplied running
/// statistics (inference), then applies gamma/beta.
template <typename Scalar>
BatchNormResult<Scalar> batchnorm(const Tensor<Scalar>& input, const Tensor<Scalar>& gamma,
                                  const Tensor<Scalar>& beta, bool training, const Tensor<Scalar>& running_mean,
                                  const Tensor<Scalar>& running_var, double eps = kBatchNormEpsilon) {
  if (input.rank() < 2) throw DimensionError("batchnorm expects rank >= 2, got " + shape_string(input.shape()));
  const Index n = input.dim(0), c = input.dim(1), s = detail::channel_spatial(input.shape());
  if (gamma.size() != c || beta.size() != c || running_mean.size() != c || running_var.size() != c) {
    throw DimensionError("batchnorm: parameters do not match " + std::to_string(c) + " channels");
  }
  BatchNormResult<Scalar> r{Tensor<Scalar>(input.shape()), {}};
  auto& cache = r.cache;
  cache.training = training;
  cache.normalized = Tensor<Scalar>(input.shape());
  if (training) {
    if (n * s == 0) throw DimensionError("batchnorm: empty batch in training mode");
    cache.mean.setZero(c);
    cache.variance.setZero(c);
    const Scalar count = Scalar(n * s);
    for (Index i = 0; i < n; ++i) {
      for (Index ch = 0; ch < c; ++ch) {
        cache.mean[ch] += Eigen::Map<const Eigen::Array<Scalar, Eigen::Dynamic, 1>>(
                              input.data() + (i * c + ch) * s, s).sum();
      }
    }
    cache.mean /= count;
    for (Index i = 0; i < n; ++i) {
      for (Index ch = 0; ch < c; ++ch) {
        cache.variance[ch] += (Eigen::Map<const Eigen::Array<Scalar, Eigen::Dynamic, 1>>(
                                   input.data() + (i * c + ch) * s, s) - cache.mean[ch]).square().sum();
      }
    }
    cache.variance /= count;
  } else {
    cache.mean = running_mean.array();
    cache.variance = running_var.array();
  }
  cache.inv_std = (cache.variance + Scalar(eps)).rsqrt();
  for (Index i = 0; i < n; ++i) {
    for (Index ch = 0; ch < c; ++ch) {
      const Index off = (i * c + ch) * s;
      Eigen::Map<const Eigen::Array<Scalar, Eigen::Dynamic, 1>> x(input.data() + off, s);
      Eigen::Map<Eigen::Array<Scalar, Eigen::Dynamic, 1>> xh(cache.normalized.data() + off, s);
      Eigen::Map<Eigen::Array<Scalar, Eigen::Dynamic, 1>> y(r.output.data() + off, s);
      xh = (x - cache.mean[ch]) * cache.inv_std[ch];
      y = xh * gamma[ch] + beta[ch];
    }
  }
  return r;
}

/// Running-statistics update after a training-mode forward pass. The running
/// variance uses the unbiased batch estimate.
template <typename Scalar>
void update_running_stats(const BatchNormCache<Scalar>& cache, Index count, Tensor<Scalar>& running_mean,
                          Tensor<Scalar>& running_var, double momentum = kBatchNormMomentum) {
  const Scalar m = Scalar(momentum);
  const Scalar unbias = count > 1 ? Scalar(double(count) / double(count - 1)) : Scalar(1);
  running_mean.array() = (Scalar(1) - m) * running_mean.array() + m * cache.mean;
  running_var.array() = (Scalar(1) - m) * running_var.array() + m * cache.variance * unbias;
}

template <typename Scalar>
struct BatchNormGrads {
  Tensor<Scalar> input, gamma, beta;
};

template <typename Scalar>
BatchNormGrads<Scalar> batchnorm_backward(const Tensor<Scalar>& grad_out, const Tensor<Scalar>& gamma,
                                          const BatchNormCache<Scalar>& cache) {
  const Index n = grad_out.dim(0), c = grad_out.dim(1), s = detail::channel_spatial(grad_out.shape());
  BatchNormGrads<Scalar> g{Tensor<Scalar>(grad_out.shape()), Tensor<Scalar>({c}), Tensor<Scalar>({c})};
  using MapC = Eigen::Map<const Eigen::Array<Scalar, Eigen::Dynamic, 1>>;
  for (Index i = 0; i < n; ++i) {
    for (Index ch = 0; ch < c; ++ch) {
      const Index off = (i * c + ch) * s;
      MapC dy(grad_out.data() + off, s), xh(cache.normalized.data() + off, s);
      g.beta[ch] += dy.sum();
      g.gamma[ch] += (dy * xh).sum();
    }
  }
  const Scalar count = Scalar(n * s);
  for (Index i = 0; i < n; ++i) {
    for (Index ch = 0; ch < c; ++ch) {
      const Index off = (i * c + ch) * s;
      MapC dy(grad_out.data() + off, s), xh(cache.normalized.data() + off, s);
      Eigen::Map<Eigen::Array<Scalar, Eigen::Dynamic, 1>> dx(g.input.data() + off, s);
      const Scalar scale = gamma[ch] * cache.inv_std[ch];
      if (cache.training) {
        dx = scale * (dy - g.beta[ch] / count - xh * (g.gamma[ch] / count));
      } else {
        dx = scale * dy;
      }
    }
  }
  return g;
}

// ---------------------------------------------------------------------------
// Dense and activations

/// x[N,D] * W[D,O] + b[O].
template <typename Scalar>
Tensor<Scalar> dense(const Tensor<Scalar>& input, const Tensor<Scalar>& weights, const Tensor<Scalar>& bias) {
  detail::require_rank(input.shape(), 2, "dense input");
  detail::require_rank(weights.shape(), 2, "dense weights");
  const Index n = input.dim(0), d = input.dim(1), o = weights.dim(1);
  if (weights.dim(0) != d || bias.size() != o) {
    throw DimensionError("dense: input " + shape_string(input.shape()) + ", weights " +
                         shape_string(weights.shape()) + ", bias " + shape_string(bias.shape()));
  }
  Tensor<Scalar> out({n, o});
  auto y = out.matrix(n, o);
  y.noalias() = input.matrix(n, d) * weights.matrix(d, o);
  y.rowwise() += bias.array().matrix().transpose();
  return out;
}

template <typename Scalar>
struct DenseGrads {
  Tensor<Scalar> input, weights, bias;
};

template <typename Scalar>
DenseGrads<Scalar> dense_backward(const Tensor<Scalar>& input, const Tensor<Scalar>& weights,
                                  const Tensor<Scalar>& grad_out, bool need_input = true) {
  const Index n = input.dim(0), d = input.dim(1), o = weights.dim(1);
  DenseGrads<Scalar> g{need_input ? Tensor<Scalar>(input.shape()) : Tensor<Scalar>(),
                       Tensor<Scalar>(weights.shape()), Tensor<Scalar>({o})};
  const auto dy = grad_out.matrix(n, o);
  g.weights.matrix(d, o).noalias() = input.matrix(n, d).transpose() * dy;
  g.bias.array() = dy.colwise().sum().transpose().array();
  if (need_input) g.input.matrix(n, d).noalias() = dy * weights.matrix(d, o).transpose();
  return g;
}

template <typename Scalar>
Tensor<Scalar> relu(const Tensor<Scalar>& input) {
  return Tensor<Scalar>(input.shape(), input.array().max(Scalar(0)));
}

/// Gradient passes where the forward input was strictly positive.
template <typename Scalar>
Tensor<Scalar> relu_backward(const Tensor<Scalar>& input, const Tensor<Scalar>& grad_out) {
  return Tensor<Scalar>(input.shape(), (input.array() > Scalar(0)).select(grad_out.array(), Scalar(0)));
}

/// Row-wise softmax over a [N,C] tensor (max-shifted).
template <typename Scalar>
Tensor<Scalar> softmax(const Tensor<Scalar>& input) {
  detail::require_rank(input.shape(), 2, "softmax input");
  const Index n = input.dim(0), c = input.dim(1);
  Tensor<Scalar> out(input.shape());
  auto x = input.matrix(n, c);
  auto y = out.matrix(n, c);
  for (Index i = 0; i < n; ++i) {
    const Scalar m = x.row(i).maxCoeff();
    y.row(i) = (x.row(i).array() - m).exp().matrix();
    y.row(i) /= y.row(i).sum();
  }
  return out;
}

template <typename Scalar>
Tensor<Scalar> softmax_backward(const Tensor<Scalar>& output, const Tensor<Scalar>& grad_out) {
  const Index n = output.dim(0), c = output.dim(1);
  Tensor<Scalar> grad(output.shape());
  auto p = output.matrix(n, c);
  auto dy = grad_out.matrix(n, c);
  auto dx = grad.matrix(n, c);
  for (Index i = 0; i < n; ++i) {
    const Scalar dot = p.row(i).dot(dy.row(i));
    dx.row(i) = (p.row(i).array() * (dy.row(i).array() - dot)).matrix();
  }
  return grad;
}

// ---------------------------------------------------------------------------
// Losses (mean-reduced)

inline void check_labels(std::span<const int> labels, Index rows, Index classes) {
  if (Index(labels.size()) != rows) {
    throw DimensionError("cross_entropy: " + std::to_string(labels.size()) + " labels for " + std::to_string(rows) +
                         " rows");
  }
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || labels[i] >= classes) {
      throw IndexError("label " + std::to_string(labels[i]) + " at position " + std::to_string(i) +
                       " outside [0, " + std::to_string(classes) + ")");
    }
  }
}

/// Mean over rows of -log(max(p[true], 1e-7)); `probabilities` are softmax rows.
template <typename Scalar>
Scalar cross_entropy(const Tensor<Scalar>& probabilities, std::span<const int> labels) {
  detail::require_rank(probabilities.shape(), 2, "cross_entropy predictions");
  const Index n = probabilities.dim(0), c = probabilities.dim(1);
  check_labels(labels, n, c);
  if (n == 0) return Scalar(0);
  Scalar total = 0;
  for (Index i = 0; i < n; ++i) {
    total -= std::log(std::max(probabilities[i * c + labels[std::size_t(i)]], Scalar(kLogClamp)));
  }
  return total / Scalar(n);
}

template <typename Scalar>
Tensor<Scalar> cross_entropy_backward(const Tensor<Scalar>& probabilities, std::span<const int> labels,
                                      Scalar grad_loss = Scalar(1)) {
  const Index n = probabilities.dim(0), c = probabilities.dim(1);
  Tensor<Scalar> grad(probabilities.shape());
  for (Index i = 0; i < n; ++i) {
    const Index idx = i * c + labels[std::size_t(i)];
    const Scalar p = probabilities[idx];
    if (p > Scalar(kLogClamp)) grad[idx] = -grad_loss / (Scalar(n) * p);
  }
  return grad;
}

/// Mean of squared elementwise differences.
template <typename Scalar>
Scalar mse(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  if (a.shape() != b.shape()) {
    throw DimensionError("mse: shapes " + shape_string(a.shape()) + " and " + shape_string(b.shape()) + " differ");
  }
  if (a.size() == 0) return Scalar(0);
  return (a.array() - b.array()).square().sum() / Scalar(a.size());
}

/// d mse / d a.
template <typename Scalar>
Tensor<Scalar> mse_backward(const Tensor<Scalar>& a, const Tensor<Scalar>& b, Scalar grad_loss = Scalar(1)) {
  const Scalar scale = Scalar(2) * grad_loss / Scalar(a.size());
  return Tensor<Scalar>(a.shape(), (a.array() - b.array()) * scale);
}

}  // namespace pan

#endif  // PAN_OPS_HPP
