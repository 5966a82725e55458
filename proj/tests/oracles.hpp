#ifndef PAN_TESTS_ORACLES_HPP
#define PAN_TESTS_ORACLES_HPP

// Independent reference implementations used to check the library. They are
// deliberately naive: direct loops over the defining formulas.

#include <algorithm>
#include <cmath>
#include <vector>

#include "pan/rng.hpp"
#include "pan/tensor.hpp"

namespace oracle {

using pan::Index;

template <typename T>
pan::Tensor<T> random_tensor(pan::Rng& rng, const pan::Shape& shape, double lo = -1, double hi = 1) {
  pan::Tensor<T> t(shape);
  for (Index i = 0; i < t.size(); ++i) t[i] = T(rng.uniform(lo, hi));
  return t;
}

/// Direct sliding-window cross-correlation.
inline pan::Tensord conv2d(const pan::Tensord& x, const pan::Tensord& w, const pan::Tensord& b, Index stride,
                           Index pad) {
  const Index n = x.dim(0), c = x.dim(1), h = x.dim(2), wd = x.dim(3);
  const Index k = w.dim(0), kh = w.dim(2), kw = w.dim(3);
  const Index oh = (h + 2 * pad - kh) / stride + 1, ow = (wd + 2 * pad - kw) / stride + 1;
  pan::Tensord out({n, k, oh, ow});
  for (Index s = 0; s < n; ++s)
    for (Index o = 0; o < k; ++o)
      for (Index y = 0; y < oh; ++y)
        for (Index xx = 0; xx < ow; ++xx) {
          double acc = b[o];
          for (Index ch = 0; ch < c; ++ch)
            for (Index i = 0; i < kh; ++i)
              for (Index j = 0; j < kw; ++j) {
                const Index iy = y * stride - pad + i, ix = xx * stride - pad + j;
                if (iy >= 0 && iy < h && ix >= 0 && ix < wd) acc += x.at(s, ch, iy, ix) * w.at(o, ch, i, j);
              }
          out.at(s, o, y, xx) = acc;
        }
  return out;
}

/// Scatter form of the transposed convolution: every input value spreads a
/// scaled copy of the kernel into the output.
inline pan::Tensord transposed_conv2d(const pan::Tensord& x, const pan::Tensord& w, const pan::Tensord& b,
                                      Index stride, Index pad) {
  const Index n = x.dim(0), k = x.dim(1), h = x.dim(2), wd = x.dim(3);
  const Index c = w.dim(1), kh = w.dim(2), kw = w.dim(3);
  const Index oh = (h - 1) * stride - 2 * pad + kh, ow = (wd - 1) * stride - 2 * pad + kw;
  pan::Tensord out({n, c, oh, ow});
  for (Index s = 0; s < n; ++s) {
    for (Index ch = 0; ch < c; ++ch)
      for (Index y = 0; y < oh; ++y)
        for (Index xx = 0; xx < ow; ++xx) out.at(s, ch, y, xx) = b[ch];
    for (Index o = 0; o < k; ++o)
      for (Index y = 0; y < h; ++y)
        for (Index xx = 0; xx < wd; ++xx)
          for (Index ch = 0; ch < c; ++ch)
            for (Index i = 0; i < kh; ++i)
              for (Index j = 0; j < kw; ++j) {
                const Index oy = y * stride - pad + i, ox = xx * stride - pad + j;
                if (oy >= 0 && oy < oh && ox >= 0 && ox < ow) out.at(s, ch, oy, ox) += x.at(s, o, y, xx) * w.at(o, ch, i, j);
              }
  }
  return out;
}

/// Brute-force window maximum.
inline pan::Tensord maxpool(const pan::Tensord& x, Index window, Index stride) {
  const Index n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  const Index oh = (h - window) / stride + 1, ow = (w - window) / stride + 1;
  pan::Tensord out({n, c, oh, ow});
  for (Index s = 0; s < n; ++s)
    for (Index ch = 0; ch < c; ++ch)
      for (Index y = 0; y < oh; ++y)
        for (Index xx = 0; xx < ow; ++xx) {
          double best = -INFINITY;
          for (Index i = 0; i < window; ++i)
            for (Index j = 0; j < window; ++j) best = std::max(best, x.at(s, ch, y * stride + i, xx * stride + j));
          out.at(s, ch, y, xx) = best;
        }
  return out;
}

/// Cyclic Jacobi eigenvalue iteration for a symmetric matrix (row-major n x n).
/// Returns eigenvalues sorted descending and eigenvectors as columns.
inline void jacobi_eigen(std::vector<double> a, Index n, std::vector<double>& values, std::vector<double>& vectors) {
  vectors.assign(std::size_t(n * n), 0.0);
  for (Index i = 0; i < n; ++i) vectors[std::size_t(i * n + i)] = 1.0;
  auto A = [&](Index r, Index c) -> double& { return a[std::size_t(r * n + c)]; };
  auto V = [&](Index r, Index c) -> double& { return vectors[std::size_t(r * n + c)]; };
  for (int sweep = 0; sweep < 100; ++sweep) {
    double off = 0;
    for (Index p = 0; p < n; ++p)
      for (Index q = p + 1; q < n; ++q) off += A(p, q) * A(p, q);
    if (off < 1e-24) break;
    for (Index p = 0; p < n; ++p)
      for (Index q = p + 1; q < n; ++q) {
        if (std::abs(A(p, q)) < 1e-300) continue;
        const double theta = (A(q, q) - A(p, p)) / (2 * A(p, q));
        const double t = (theta >= 0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1));
        const double cs = 1 / std::sqrt(t * t + 1), sn = t * cs;
        for (Index k = 0; k < n; ++k) {
          const double akp = A(k, p), akq = A(k, q);
          A(k, p) = cs * akp - sn * akq;
          A(k, q) = sn * akp + cs * akq;
        }
        for (Index k = 0; k < n; ++k) {
          const double apk = A(p, k), aqk = A(q, k);
          A(p, k) = cs * apk - sn * aqk;
          A(q, k) = sn * apk + cs * aqk;
        }
        for (Index k = 0; k < n; ++k) {
          const double vkp = V(k, p), vkq = V(k, q);
          V(k, p) = cs * vkp - sn * vkq;
          V(k, q) = sn * vkp + cs * vkq;
        }
      }
  }
  std::vector<Index> order(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) order[std::size_t(i)] = i;
  std::sort(order.begin(), order.end(), [&](Index x, Index y) { return A(x, x) > A(y, y); });
  values.clear();
  std::vector<double> sorted(std::size_t(n * n));
  for (Index j = 0; j < n; ++j) {
    values.push_back(A(order[std::size_t(j)], order[std::size_t(j)]));
    for (Index r = 0; r < n; ++r) sorted[std::size_t(r * n + j)] = V(r, order[std::size_t(j)]);
  }
  vectors = sorted;
}

}  // namespace oracle

#endif  // PAN_TESTS_ORACLES_HPP
