#pragma once

// Hot inner loops behind the tensor ops. Each kernel comes in a serial
// reference form and an OpenMP form that partitions output rows; the
// per-element floating-point order is identical in both, so results are
// bitwise equal and the serial form doubles as the test oracle.
// tools/bench_kernels times the two against each other.

#include <cstdint>
#include <cmath>

namespace salsum::kernels {

enum class Execution { Serial, Parallel, Auto };

void set_execution(Execution mode);
Execution execution();

// Auto switches to the parallel path once a kernel's multiply-accumulate
// count crosses this threshold; below it the fork/join overhead dominates.
inline constexpr int64_t kAutoMinWork = 1 << 15;

bool use_parallel(int64_t work);

// ---------------------------------------------------------------------------
// GEMM family. Row-major, c is m x n. accumulate=false overwrites c.
// nn: c = a[m x k] * b[k x n]
// nt: c = a[m x k] * b[n x k]^T
// tn: c = a[k x m]^T * b[k x n]
// ---------------------------------------------------------------------------

template <class Real>
void gemm_nn_serial(const Real* a, const Real* b, Real* c, int64_t m,
                    int64_t k, int64_t n, bool accumulate) {
  for (int64_t i = 0; i < m; ++i) {
    Real* ci = c + i * n;
    if (!accumulate)
      for (int64_t j = 0; j < n; ++j) ci[j] = Real(0);
    const Real* ai = a + i * k;
    for (int64_t p = 0; p < k; ++p) {
      const Real aip = ai[p];
      const Real* bp = b + p * n;
      for (int64_t j = 0; j < n; ++j) ci[j] += aip * bp[j];
    }
  }
}

template <class Real>
void gemm_nn_parallel(const Real* a, const Real* b, Real* c, int64_t m,
                      int64_t k, int64_t n, bool accumulate) {
#pragma omp parallel for schedule(static)
  for (int64_t i = 0; i < m; ++i) {
    Real* ci = c + i * n;
    if (!accumulate)
      for (int64_t j = 0; j < n; ++j) ci[j] = Real(0);
    const Real* ai = a + i * k;
    for (int64_t p = 0; p < k; ++p) {
      const Real aip = ai[p];
      const Real* bp = b + p * n;
      for (int64_t j = 0; j < n; ++j) ci[j] += aip * bp[j];
    }
  }
}

template <class Real>
void gemm_nn(const Real* a, const Real* b, Real* c, int64_t m, int64_t k,
             int64_t n, bool accumulate = false) {
  if (use_parallel(m * k * n))
    gemm_nn_parallel(a, b, c, m, k, n, accumulate);
  else
    gemm_nn_serial(a, b, c, m, k, n, accumulate);
}

template <class Real>
void gemm_nt_serial(const Real* a, const Real* b, Real* c, int64_t m,
                    int64_t k, int64_t n, bool accumulate) {
  for (int64_t i = 0; i < m; ++i) {
    const Real* ai = a + i * k;
    Real* ci = c + i * n;
    for (int64_t j = 0; j < n; ++j) {
      const Real* bj = b + j * k;
      Real acc = Real(0);
      for (int64_t p = 0; p < k; ++p) acc += ai[p] * bj[p];
      ci[j] = accumulate ? ci[j] + acc : acc;
    }
  }
}

template <class Real>
void gemm_nt_parallel(const Real* a, const Real* b, Real* c, int64_t m,
                      int64_t k, int64_t n, bool accumulate) {
#pragma omp parallel for schedule(static)
  for (int64_t i = 0; i < m; ++i) {
    const Real* ai = a + i * k;
    Real* ci = c + i * n;
    for (int64_t j = 0; j < n; ++j) {
      const Real* bj = b + j * k;
      Real acc = Real(0);
      for (int64_t p = 0; p < k; ++p) acc += ai[p] * bj[p];
      ci[j] = accumulate ? ci[j] + acc : acc;
    }
  }
}

template <class Real>
void gemm_nt(const Real* a, const Real* b, Real* c, int64_t m, int64_t k,
             int64_t n, bool accumulate = false) {
  if (use_parallel(m * k * n))
    gemm_nt_parallel(a, b, c, m, k, n, accumulate);
  else
    gemm_nt_serial(a, b, c, m, k, n, accumulate);
}

template <class Real>
void gemm_tn_serial(const Real* a, const Real* b, Real* c, int64_t m,
                    int64_t k, int64_t n, bool accumulate) {
  for (int64_t i = 0; i < m; ++i) {
    Real* ci = c + i * n;
    if (!accumulate)
      for (int64_t j = 0; j < n; ++j) ci[j] = Real(0);
    for (int64_t p = 0; p < k; ++p) {
      const Real api = a[p * m + i];
      const Real* bp = b + p * n;
      for (int64_t j = 0; j < n; ++j) ci[j] += api * bp[j];
    }
  }
}

template <class Real>
void gemm_tn_parallel(const Real* a, const Real* b, Real* c, int64_t m,
                      int64_t k, int64_t n, bool accumulate) {
#pragma omp parallel for schedule(static)
  for (int64_t i = 0; i < m; ++i) {
    Real* ci = c + i * n;
    if (!accumulate)
      for (int64_t j = 0; j < n; ++j) ci[j] = Real(0);
    for (int64_t p = 0; p < k; ++p) {
      const Real api = a[p * m + i];
      const Real* bp = b + p * n;
      for (int64_t j = 0; j < n; ++j) ci[j] += api * bp[j];
    }
  }
}

template <class Real>
void gemm_tn(const Real* a, const Real* b, Real* c, int64_t m, int64_t k,
             int64_t n, bool accumulate = false) {
  if (use_parallel(m * k * n))
    gemm_tn_parallel(a, b, c, m, k, n, accumulate);
  else
    gemm_tn_serial(a, b, c, m, k, n, accumulate);
}

// ---------------------------------------------------------------------------
// Row softmax with max subtraction. mask (optional, row-major m x n,
// nonzero = keep) zeroes excluded positions; callers must guarantee every
// row keeps at least one position.
// ---------------------------------------------------------------------------

template <class Real>
void softmax_rows_one(const Real* x, const uint8_t* mask, Real* y, int64_t n) {
  Real mx = -std::numeric_limits<Real>::infinity();
  for (int64_t j = 0; j < n; ++j)
    if ((!mask || mask[j]) && x[j] > mx) mx = x[j];
  Real denom = Real(0);
  for (int64_t j = 0; j < n; ++j) {
    if (mask && !mask[j]) {
      y[j] = Real(0);
    } else {
      y[j] = std::exp(x[j] - mx);
      denom += y[j];
    }
  }
  const Real inv = Real(1) / denom;
  for (int64_t j = 0; j < n; ++j) y[j] *= inv;
}

template <class Real>
void softmax_rows_serial(const Real* x, const uint8_t* mask, Real* y,
                         int64_t m, int64_t n) {
  for (int64_t i = 0; i < m; ++i)
    softmax_rows_one(x + i * n, mask ? mask + i * n : nullptr, y + i * n, n);
}

template <class Real>
void softmax_rows_parallel(const Real* x, const uint8_t* mask, Real* y,
                           int64_t m, int64_t n) {
#pragma omp parallel for schedule(static)
  for (int64_t i = 0; i < m; ++i)
    softmax_rows_one(x + i * n, mask ? mask + i * n : nullptr, y + i * n, n);
}

template <class Real>
void softmax_rows(const Real* x, const uint8_t* mask, Real* y, int64_t m,
                  int64_t n) {
  if (use_parallel(m * n * 8))
    softmax_rows_parallel(x, mask, y, m, n);
  else
    softmax_rows_serial(x, mask, y, m, n);
}

// Per-key positive weights folded in before normalization:
// y_j = exp(x_j - mx) * w_j / sum_k exp(x_k - mx) * w_k. With w identically
// 1 every operation matches the unweighted kernel bit for bit.
template <class Real>
void weighted_softmax_rows_one(const Real* x, const uint8_t* mask,
                               const Real* w, Real* y, int64_t n) {
  Real mx = -std::numeric_limits<Real>::infinity();
  for (int64_t j = 0; j < n; ++j)
    if ((!mask || mask[j]) && x[j] > mx) mx = x[j];
  Real denom = Real(0);
  for (int64_t j = 0; j < n; ++j) {
    if (mask && !mask[j]) {
      y[j] = Real(0);
    } else {
      y[j] = std::exp(x[j] - mx) * w[j];
      denom += y[j];
    }
  }
  const Real inv = Real(1) / denom;
  for (int64_t j = 0; j < n; ++j) y[j] *= inv;
}

template <class Real>
void weighted_softmax_rows_serial(const Real* x, const uint8_t* mask,
                                  const Real* w, Real* y, int64_t m,
                                  int64_t n) {
  for (int64_t i = 0; i < m; ++i)
    weighted_softmax_rows_one(x + i * n, mask ? mask + i * n : nullptr, w,
                              y + i * n, n);
}

template <class Real>
void weighted_softmax_rows_parallel(const Real* x, const uint8_t* mask,
                                    const Real* w, Real* y, int64_t m,
                                    int64_t n) {
#pragma omp parallel for schedule(static)
  for (int64_t i = 0; i < m; ++i)
    weighted_softmax_rows_one(x + i * n, mask ? mask + i * n : nullptr, w,
                              y + i * n, n);
}

template <class Real>
void weighted_softmax_rows(const Real* x, const uint8_t* mask, const Real* w,
                           Real* y, int64_t m, int64_t n) {
  if (use_parallel(m * n * 8))
    weighted_softmax_rows_parallel(x, mask, w, y, m, n);
  else
    weighted_softmax_rows_serial(x, mask, w, y, m, n);
}

// dx = y .* (dy - rowdot(y, dy)); masked positions have y = 0, so the same
// formula leaves their dx at 0.
template <class Real>
void softmax_rows_backward_serial(const Real* y, const Real* dy, Real* dx,
                                  int64_t m, int64_t n) {
  for (int64_t i = 0; i < m; ++i) {
    const Real* yi = y + i * n;
    const Real* gi = dy + i * n;
    Real dot = Real(0);
    for (int64_t j = 0; j < n; ++j) dot += yi[j] * gi[j];
    Real* di = dx + i * n;
    for (int64_t j = 0; j < n; ++j) di[j] += yi[j] * (gi[j] - dot);
  }
}

template <class Real>
void softmax_rows_backward_parallel(const Real* y, const Real* dy, Real* dx,
                                    int64_t m, int64_t n) {
#pragma omp parallel for schedule(static)
  for (int64_t i = 0; i < m; ++i) {
    const Real* yi = y + i * n;
    const Real* gi = dy + i * n;
    Real dot = Real(0);
    for (int64_t j = 0; j < n; ++j) dot += yi[j] * gi[j];
    Real* di = dx + i * n;
    for (int64_t j = 0; j < n; ++j) di[j] += yi[j] * (gi[j] - dot);
  }
}

template <class Real>
void softmax_rows_backward(const Real* y, const Real* dy, Real* dx, int64_t m,
                           int64_t n) {
  if (use_parallel(m * n * 8))
    softmax_rows_backward_parallel(y, dy, dx, m, n);
  else
    softmax_rows_backward_serial(y, dy, dx, m, n);
}

// ---------------------------------------------------------------------------
// Per-row layer normalization: y = (x - mean) / sqrt(var + eps) * gain + bias.
// ---------------------------------------------------------------------------

template <class Real>
void layer_norm_one(const Real* x, const Real* gain, const Real* bias, Real* y,
                    int64_t d, Real eps) {
  Real mean = Real(0);
  for (int64_t j = 0; j < d; ++j) mean += x[j];
  mean /= Real(d);
  Real var = Real(0);
  for (int64_t j = 0; j < d; ++j) {
    const Real c = x[j] - mean;
    var += c * c;
  }
  var /= Real(d);
  const Real inv = Real(1) / std::sqrt(var + eps);
  for (int64_t j = 0; j < d; ++j) y[j] = (x[j] - mean) * inv * gain[j] + bias[j];
}

template <class Real>
void layer_norm_serial(const Real* x, const Real* gain, const Real* bias,
                       Real* y, int64_t rows, int64_t d, Real eps) {
  for (int64_t i = 0; i < rows; ++i)
    layer_norm_one(x + i * d, gain, bias, y + i * d, d, eps);
}

template <class Real>
void layer_norm_parallel(const Real* x, const Real* gain, const Real* bias,
                         Real* y, int64_t rows, int64_t d, Real eps) {
#pragma omp parallel for schedule(static)
  for (int64_t i = 0; i < rows; ++i)
    layer_norm_one(x + i * d, gain, bias, y + i * d, d, eps);
}

template <class Real>
void layer_norm(const Real* x, const Real* gain, const Real* bias, Real* y,
                int64_t rows, int64_t d, Real eps) {
  if (use_parallel(rows * d * 8))
    layer_norm_parallel(x, gain, bias, y, rows, d, eps);
  else
    layer_norm_serial(x, gain, bias, y, rows, d, eps);
}

// Backward recomputes the row statistics instead of stashing them; at the
// widths this library runs, the recompute is cheaper than the bookkeeping.
// dgain/dbias are accumulated serially to keep the reduction order fixed.
template <class Real>
void layer_norm_backward(const Real* x, const Real* gain, const Real* dy,
                         Real* dx, Real* dgain, Real* dbias, int64_t rows,
                         int64_t d, Real eps) {
  for (int64_t i = 0; i < rows; ++i) {
    const Real* xi = x + i * d;
    const Real* gi = dy + i * d;
    Real mean = Real(0);
    for (int64_t j = 0; j < d; ++j) mean += xi[j];
    mean /= Real(d);
    Real var = Real(0);
    for (int64_t j = 0; j < d; ++j) {
      const Real c = xi[j] - mean;
      var += c * c;
    }
    var /= Real(d);
    const Real inv = Real(1) / std::sqrt(var + eps);

    Real sum_gh = Real(0);
    Real sum_gh_xhat = Real(0);
    for (int64_t j = 0; j < d; ++j) {
      const Real xhat = (xi[j] - mean) * inv;
      const Real gh = gi[j] * gain[j];
      sum_gh += gh;
      sum_gh_xhat += gh * xhat;
      dgain[j] += gi[j] * xhat;
      dbias[j] += gi[j];
    }
    const Real inv_d = Real(1) / Real(d);
    Real* di = dx + i * d;
    for (int64_t j = 0; j < d; ++j) {
      const Real xhat = (xi[j] - mean) * inv;
      const Real gh = gi[j] * gain[j];
      di[j] += inv * (gh - sum_gh * inv_d - xhat * sum_gh_xhat * inv_d);
    }
  }
}

}  // namespace salsum::kernels
