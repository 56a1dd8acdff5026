#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "daso/rng.hpp"

namespace daso {

/// Dense row-major matrix of Real. Rows are exposed as spans; all model
/// tables and MLP weights use this.
template <typename Real>
struct Table {
  int rows = 0;
  int cols = 0;
  std::vector<Real> data;

  Table() = default;
  Table(int r, int c) : rows(r), cols(c), data(static_cast<std::size_t>(r) * c, Real(0)) {}

  std::span<Real> row(int i) {
    return {data.data() + static_cast<std::size_t>(i) * cols, static_cast<std::size_t>(cols)};
  }
  std::span<const Real> row(int i) const {
    return {data.data() + static_cast<std::size_t>(i) * cols, static_cast<std::size_t>(cols)};
  }
  std::size_t size() const { return data.size(); }
  void fill(Real v) { data.assign(data.size(), v); }
};

/// Inner product accumulated in Real's own precision (the hot path; scores
/// feed softmax/sigmoid, which tolerate float rounding).
template <typename Real>
inline double dot(std::span<const Real> a, std::span<const Real> b) {
  Real s = Real(0);
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return static_cast<double>(s);
}

/// y += alpha * x
template <typename Real>
inline void axpy(Real alpha, std::span<const Real> x, std::span<Real> y) {
  for (std::size_t i = 0; i < x.size(); ++i) y[i] += alpha * x[i];
}

/// Overflow-safe logistic sigmoid.
inline double sigmoid(double f) {
  if (f >= 0.0) {
    return 1.0 / (1.0 + std::exp(-f));
  }
  const double e = std::exp(f);
  return e / (1.0 + e);
}

/// log(1 + exp(x)) without overflow for large |x|.
inline double softplus(double x) {
  if (x > 0.0) return x + std::log1p(std::exp(-x));
  return std::log1p(std::exp(x));
}

/// -log(sigmoid(x)) = softplus(-x), the saturation-safe form of -log D.
inline double neg_log_sigmoid(double x) { return softplus(-x); }

/// In-place stable softmax: scores -> probabilities. Entries with
/// `scores[i] = -inf` sentinel come out exactly zero. The normalizer is
/// accumulated in double so the result sums to 1 well within 1e-6 even for
/// Real = float.
template <typename Real>
inline void softmax_inplace(std::span<Real> scores) {
  double mx = -INFINITY;
  for (Real s : scores) mx = std::max(mx, static_cast<double>(s));
  double z = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const double e = std::isinf(static_cast<double>(scores[i])) && scores[i] < 0
                         ? 0.0
                         : std::exp(static_cast<double>(scores[i]) - mx);
    scores[i] = static_cast<Real>(e);
    z += e;
  }
  for (std::size_t i = 0; i < scores.size(); ++i) {
    scores[i] = static_cast<Real>(static_cast<double>(scores[i]) / z);
  }
}

/// One draw from a categorical distribution given by `probs` (assumed
/// normalized). Returns the index; skips zero-mass entries by construction.
template <typename Real>
inline int sample_categorical(std::span<const Real> probs, Rng& rng) {
  const double u = rng.uniform();
  double c = 0.0;
  int last_positive = -1;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    const double p = static_cast<double>(probs[i]);
    if (p <= 0.0) continue;
    last_positive = static_cast<int>(i);
    c += p;
    if (u < c) return static_cast<int>(i);
  }
  return last_positive;  // rounding left u just above the final cumsum
}

template <typename Real>
inline bool all_finite(std::span<const Real> v) {
  for (Real x : v) {
    if (!std::isfinite(static_cast<double>(x))) return false;
  }
  return true;
}

}  // namespace daso
