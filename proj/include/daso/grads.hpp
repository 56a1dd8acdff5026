#pragma once

#include <span>
#include <vector>

namespace daso {

/// Row-sparse gradient for an embedding table: only rows touched by a batch
/// carry entries. Rows are kept in first-touch order.
template <typename Real>
struct RowGrads {
  int cols = 0;
  std::vector<int> rows;
  std::vector<std::vector<Real>> grads;

  explicit RowGrads(int c = 0) : cols(c) {}

  std::span<Real> acc(int row) {
    for (std::size_t i = 0; i < rows.size(); ++i) {
      if (rows[i] == row) return {grads[i].data(), grads[i].size()};
    }
    rows.push_back(row);
    grads.emplace_back(cols, Real(0));
    return {grads.back().data(), grads.back().size()};
  }

  std::span<const Real> find(int row) const {
    for (std::size_t i = 0; i < rows.size(); ++i) {
      if (rows[i] == row) return {grads[i].data(), grads[i].size()};
    }
    return {};
  }

  void scale(Real s) {
    for (auto& g : grads)
      for (Real& x : g) x *= s;
  }
  bool empty() const { return rows.empty(); }
};

struct PolicyGradOptions {
  bool reward_baseline = false;  // subtract the per-user mean sample reward
};

/// Sparse gradient for a bias vector.
template <typename Real>
struct ScalarGrads {
  std::vector<int> idx;
  std::vector<Real> g;

  Real& acc(int i) {
    for (std::size_t k = 0; k < idx.size(); ++k) {
      if (idx[k] == i) return g[k];
    }
    idx.push_back(i);
    g.push_back(Real(0));
    return g.back();
  }
  Real find(int i) const {
    for (std::size_t k = 0; k < idx.size(); ++k) {
      if (idx[k] == i) return g[k];
    }
    return Real(0);
  }
  void scale(Real s) {
    for (Real& x : g) x *= s;
  }
};

}  // namespace daso
