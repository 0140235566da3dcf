#pragma once

// Small dense kernels on row-major buffers. Shapes are checked by callers.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

namespace delelstm::linalg {

namespace detail {

// c[R x C] += a * b[k x C] with a(r, p) = a[r * ars + p * acs]. Each output
// accumulates over p in ascending order, like the naive triple loop.
template <std::size_t R, std::size_t C>
inline void gemm_block(std::size_t n, std::size_t k, const double* a, std::size_t ars, std::size_t acs,
                       const double* b, double* c) {
  double acc[R][C];
  for (std::size_t r = 0; r < R; ++r)
    for (std::size_t j = 0; j < C; ++j) acc[r][j] = c[r * n + j];
  for (std::size_t p = 0; p < k; ++p) {
    const double* bp = b + p * n;
    for (std::size_t r = 0; r < R; ++r) {
      const double ar = a[r * ars + p * acs];
      for (std::size_t j = 0; j < C; ++j) acc[r][j] += ar * bp[j];
    }
  }
  for (std::size_t r = 0; r < R; ++r)
    for (std::size_t j = 0; j < C; ++j) c[r * n + j] = acc[r][j];
}

template <std::size_t R>
inline void gemm_rows(std::size_t n, std::size_t k, const double* a, std::size_t ars, std::size_t acs,
                      const double* b, double* c) {
  std::size_t j = 0;
  for (; j + 4 <= n; j += 4) gemm_block<R, 4>(n, k, a, ars, acs, b + j, c + j);
  for (; j < n; ++j) gemm_block<R, 1>(n, k, a, ars, acs, b + j, c + j);
}

inline void gemm_strided(std::size_t m, std::size_t n, std::size_t k, const double* a, std::size_t ars,
                         std::size_t acs, const double* b, double* c) {
  std::size_t i = 0;
  for (; i + 4 <= m; i += 4) gemm_rows<4>(n, k, a + i * ars, ars, acs, b, c + i * n);
  for (; i < m; ++i) gemm_rows<1>(n, k, a + i * ars, ars, acs, b, c + i * n);
}

}  // namespace detail

/// c[m x n] += a[m x k] * b[k x n]
inline void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b,
                    double* c) {
  detail::gemm_strided(m, n, k, a, k, 1, b, c);
}

/// c[m x n] += a[m x k] * b[n x k]^T
inline void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b,
                    double* c) {
  if (m >= 4) {
    // Transposing b once turns the inner loop into a contiguous axpy.
    thread_local std::vector<double> bt;
    bt.resize(k * n);
    for (std::size_t j = 0; j < n; ++j)
      for (std::size_t p = 0; p < k; ++p) bt[p * n + j] = b[j * k + p];
    gemm_nn(m, n, k, a, bt.data(), c);
    return;
  }
  for (std::size_t i = 0; i < m; ++i) {
    const double* ai = a + i * k;
    double* ci = c + i * n;
    for (std::size_t j = 0; j < n; ++j) {
      const double* bj = b + j * k;
      double acc = 0.0;
      for (std::size_t p = 0; p < k; ++p) acc += ai[p] * bj[p];
      ci[j] += acc;
    }
  }
}

/// c[m x n] += a[k x m]^T * b[k x n]
inline void gemm_tn(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b,
                    double* c) {
  detail::gemm_strided(m, n, k, a, 1, m, b, c);
}

/// In-place lower Cholesky factor of a symmetric p x p matrix (upper triangle
/// is zeroed). Returns false when a pivot is not safely positive.
inline bool cholesky_factor(std::size_t p, double* g) {
  double max_diag = 0.0;
  for (std::size_t i = 0; i < p; ++i) max_diag = std::max(max_diag, std::abs(g[i * p + i]));
  const double floor = max_diag * 1e-14;
  for (std::size_t j = 0; j < p; ++j) {
    double d = g[j * p + j];
    for (std::size_t k = 0; k < j; ++k) d -= g[j * p + k] * g[j * p + k];
    if (!(d > floor) || !std::isfinite(d)) return false;
    const double ljj = std::sqrt(d);
    g[j * p + j] = ljj;
    for (std::size_t i = j + 1; i < p; ++i) {
      double s = g[i * p + j];
      for (std::size_t k = 0; k < j; ++k) s -= g[i * p + k] * g[j * p + k];
      g[i * p + j] = s / ljj;
    }
    for (std::size_t i = 0; i < j; ++i) g[i * p + j] = 0.0;
  }
  return true;
}

/// Solves (L L^T) x = rhs in place given the factor from cholesky_factor.
inline void cholesky_solve(std::size_t p, const double* l, double* x) {
  for (std::size_t i = 0; i < p; ++i) {
    double s = x[i];
    for (std::size_t k = 0; k < i; ++k) s -= l[i * p + k] * x[k];
    x[i] = s / l[i * p + i];
  }
  for (std::size_t ii = p; ii-- > 0;) {
    double s = x[ii];
    for (std::size_t k = ii + 1; k < p; ++k) s -= l[k * p + ii] * x[k];
    x[ii] = s / l[ii * p + ii];
  }
}

}  // namespace delelstm::linalg
