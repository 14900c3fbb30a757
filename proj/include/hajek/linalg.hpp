#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "hajek/error.hpp"

namespace hajek::linalg {

// Dense row-major matrix, just big enough for the small regression designs
// used here (a handful of columns).
class matrix {
 public:
  matrix() = default;
  matrix(std::size_t rows, std::size_t cols)
      : rows_(rows), cols_(cols), data_(rows * cols, 0.0) {}

  double& operator()(std::size_t r, std::size_t c) {
    return data_[r * cols_ + c];
  }
  double operator()(std::size_t r, std::size_t c) const {
    return data_[r * cols_ + c];
  }
  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

struct wls_fit {
  std::vector<double> beta;   // one per design column; dropped columns get 0
  std::vector<bool> kept;     // false where a column was dropped
  matrix xtwx_inv;            // inverse of X'WX on kept columns, 0 elsewhere
};

enum class on_singular { fail, drop_columns };

// Weighted least squares via the normal equations with diagonal pivoting.
// Columns whose pivot falls below `tol` times the largest initial diagonal
// are either reported as a singular design or dropped from the fit,
// depending on `mode`. Designs here have at most a dozen columns, so the
// O(k^3) solve is irrelevant next to forming X'WX.
inline wls_fit wls(const matrix& x, std::span<const double> y,
                   std::span<const double> w,
                   on_singular mode = on_singular::fail,
                   double tol = 1e-12) {
  const std::size_t n = x.rows(), k = x.cols();
  if (y.size() != n || w.size() != n)
    fail_validation(errc::weight_mismatch, "wls: row count mismatch");
  if (n == 0 || k == 0) fail_validation(errc::empty_input, "wls: empty design");

  matrix a(k, k);
  std::vector<double> c(k, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const double wi = w[i];
    for (std::size_t p = 0; p < k; ++p) {
      const double xip = x(i, p) * wi;
      c[p] += xip * y[i];
      for (std::size_t q = p; q < k; ++q) a(p, q) += xip * x(i, q);
    }
  }
  for (std::size_t p = 0; p < k; ++p)
    for (std::size_t q = 0; q < p; ++q) a(p, q) = a(q, p);

  double scale = 0.0;
  for (std::size_t p = 0; p < k; ++p) scale = std::max(scale, a(p, p));
  if (!(scale > 0.0)) {
    if (mode == on_singular::fail)
      fail_numeric(errc::singular_design, "wls: design has no mass");
    scale = 1.0;
  }

  // Pass 1: pivoted elimination on a scratch copy to pick the kept columns.
  matrix g = a;
  std::vector<bool> kept(k, false);
  std::vector<bool> pivoted(k, false);
  for (std::size_t step = 0; step < k; ++step) {
    std::size_t best = k;
    double best_diag = tol * scale;
    for (std::size_t p = 0; p < k; ++p)
      if (!pivoted[p] && g(p, p) > best_diag) {
        best_diag = g(p, p);
        best = p;
      }
    if (best == k) break;  // all remaining pivots are below threshold
    pivoted[best] = true;
    kept[best] = true;
    const double inv_piv = 1.0 / g(best, best);
    for (std::size_t p = 0; p < k; ++p) {
      if (pivoted[p] || p == best) continue;
      const double f = g(p, best) * inv_piv;
      for (std::size_t q = 0; q < k; ++q) g(p, q) -= f * g(best, q);
    }
  }
  std::size_t n_kept = 0;
  for (std::size_t p = 0; p < k; ++p) n_kept += kept[p] ? 1 : 0;
  if (n_kept < k && mode == on_singular::fail)
    fail_numeric(errc::singular_design, "wls: rank-deficient design");
  if (n_kept == 0)
    fail_numeric(errc::singular_design, "wls: no usable columns");

  // Pass 2: plain Gauss-Jordan inverse+solve on the kept submatrix.
  std::vector<std::size_t> idx;
  idx.reserve(n_kept);
  for (std::size_t p = 0; p < k; ++p)
    if (kept[p]) idx.push_back(p);
  const std::size_t m = idx.size();
  matrix aug(m, 2 * m + 1);
  for (std::size_t p = 0; p < m; ++p) {
    for (std::size_t q = 0; q < m; ++q) aug(p, q) = a(idx[p], idx[q]);
    aug(p, m + p) = 1.0;
    aug(p, 2 * m) = c[idx[p]];
  }
  for (std::size_t step = 0; step < m; ++step) {
    std::size_t piv = step;
    for (std::size_t p = step + 1; p < m; ++p)
      if (std::abs(aug(p, step)) > std::abs(aug(piv, step))) piv = p;
    if (piv != step)
      for (std::size_t q = 0; q < 2 * m + 1; ++q)
        std::swap(aug(step, q), aug(piv, q));
    const double d = aug(step, step);
    if (!(std::abs(d) > 0.0))
      fail_numeric(errc::singular_design, "wls: singular kept block");
    for (std::size_t q = 0; q < 2 * m + 1; ++q) aug(step, q) /= d;
    for (std::size_t p = 0; p < m; ++p) {
      if (p == step) continue;
      const double f = aug(p, step);
      if (f == 0.0) continue;
      for (std::size_t q = 0; q < 2 * m + 1; ++q)
        aug(p, q) -= f * aug(step, q);
    }
  }

  wls_fit out;
  out.beta.assign(k, 0.0);
  out.kept = kept;
  out.xtwx_inv = matrix(k, k);
  for (std::size_t p = 0; p < m; ++p) {
    out.beta[idx[p]] = aug(p, 2 * m);
    for (std::size_t q = 0; q < m; ++q)
      out.xtwx_inv(idx[p], idx[q]) = aug(p, m + q);
  }
  return out;
}

inline double fitted_value(const matrix& x, std::size_t row,
                           std::span<const double> beta) {
  double v = 0.0;
  for (std::size_t p = 0; p < x.cols(); ++p) v += x(row, p) * beta[p];
  return v;
}

}  // namespace hajek::linalg
