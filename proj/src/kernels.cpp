#include "mtc/kernels.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <vector>

#ifdef MTC_HAVE_BLAS
#include <cblas.h>
extern "C" void openblas_set_num_threads(int);
#endif

namespace mtc::kern {

namespace {
std::atomic<Backend> g_backend{
#ifdef MTC_HAVE_BLAS
    Backend::blas
#else
    Backend::openmp
#endif
};

// Reductions use fixed-size blocks combined in block order so the result is
// identical for any thread count (and to the serial reference, which uses the
// same blocking).
constexpr size_t kSumBlock = 4096;

inline double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}
inline double softplus(double x) {
  return std::max(x, 0.0) + std::log1p(std::exp(-std::fabs(x)));
}

inline double unary_apply(Unary u, double x) {
  switch (u) {
    case Unary::tanh_: return std::tanh(x);
    case Unary::relu_: return x > 0.0 ? x : 0.0;
    case Unary::softplus_: return softplus(x);
    case Unary::exp_: return std::exp(x);
    case Unary::log_: return std::log(x);
    case Unary::neg_: return -x;
    case Unary::square_: return x * x;
    case Unary::sigmoid_: return sigmoid(x);
  }
  return 0.0;
}

inline double unary_deriv(Unary u, double x, double y) {
  switch (u) {
    case Unary::tanh_: return 1.0 - y * y;
    case Unary::relu_: return x > 0.0 ? 1.0 : 0.0;
    case Unary::softplus_: return sigmoid(x);
    case Unary::exp_: return y;
    case Unary::log_: return 1.0 / x;
    case Unary::neg_: return -1.0;
    case Unary::square_: return 2.0 * x;
    case Unary::sigmoid_: return y * (1.0 - y);
  }
  return 0.0;
}

inline double binary_apply(Binary b, double x, double y) {
  switch (b) {
    case Binary::add_: return x + y;
    case Binary::sub_: return x - y;
    case Binary::mul_: return x * y;
    case Binary::min_: return x < y ? x : y;
  }
  return 0.0;
}

inline double blocked_sum(const double* x, size_t n) {
  double total = 0.0;
  for (size_t b = 0; b < n; b += kSumBlock) {
    double part = 0.0;
    const size_t end = std::min(n, b + kSumBlock);
    for (size_t i = b; i < end; ++i) part += x[i];
    total += part;
  }
  return total;
}

// one output element: fixed ascending-k dot product regardless of layout
inline double dot_elem(const double* A, const double* B, int m, int n, int k,
                       bool ta, bool tb, int i, int j) {
  double acc = 0.0;
  for (int p = 0; p < k; ++p) {
    const double a = ta ? A[size_t(p) * m + i] : A[size_t(i) * k + p];
    const double b = tb ? B[size_t(j) * k + p] : B[size_t(p) * n + j];
    acc += a * b;
  }
  return acc;
}
}  // namespace

Backend backend() { return g_backend.load(); }
void set_backend(Backend b) {
  if (b == Backend::blas && !blas_available()) b = Backend::openmp;
  g_backend.store(b);
}
bool blas_available() {
#ifdef MTC_HAVE_BLAS
  return true;
#else
  return false;
#endif
}

// ---------------------------------------------------------------- reference
namespace ref {

void matmul(const double* A, const double* B, double* C, int m, int n, int k,
            bool ta, bool tb, bool acc) {
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) {
      const double v = dot_elem(A, B, m, n, k, ta, tb, i, j);
      double& c = C[size_t(i) * n + j];
      c = acc ? c + v : v;
    }
}

void unary_map(Unary u, const double* x, double* y, size_t n) {
  for (size_t i = 0; i < n; ++i) y[i] = unary_apply(u, x[i]);
}
void unary_grad(Unary u, const double* x, const double* y, const double* gy,
                double* gx, size_t n) {
  for (size_t i = 0; i < n; ++i) gx[i] += unary_deriv(u, x[i], y[i]) * gy[i];
}
void binary_map(Binary b, const double* a, const double* c, double* y, size_t n) {
  for (size_t i = 0; i < n; ++i) y[i] = binary_apply(b, a[i], c[i]);
}
double sum(const double* x, size_t n) { return blocked_sum(x, n); }

void row_sum(const double* X, double* out, int m, int n, bool acc) {
  for (int i = 0; i < m; ++i) {
    double s = 0.0;
    for (int j = 0; j < n; ++j) s += X[size_t(i) * n + j];
    out[i] = acc ? out[i] + s : s;
  }
}
void col_sum(const double* X, double* out, int m, int n, bool acc) {
  for (int j = 0; j < n; ++j) {
    double s = 0.0;
    for (int i = 0; i < m; ++i) s += X[size_t(i) * n + j];
    out[j] = acc ? out[j] + s : s;
  }
}
void add_row_vec(double* X, const double* v, int m, int n) {
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) X[size_t(i) * n + j] += v[j];
}
void axpy(double a, const double* x, double* y, size_t n) {
  for (size_t i = 0; i < n; ++i) y[i] += a * x[i];
}
void scale(double a, double* x, size_t n) {
  for (size_t i = 0; i < n; ++i) x[i] *= a;
}

void adam_step(double* p, const double* g, double* m1, double* m2, size_t n,
               double lr, double beta1, double beta2, double eps, long t) {
  const double c1 = 1.0 - std::pow(beta1, double(t));
  const double c2 = 1.0 - std::pow(beta2, double(t));
  for (size_t i = 0; i < n; ++i) {
    m1[i] = beta1 * m1[i] + (1.0 - beta1) * g[i];
    m2[i] = beta2 * m2[i] + (1.0 - beta2) * g[i] * g[i];
    p[i] -= lr * (m1[i] / c1) / (std::sqrt(m2[i] / c2) + eps);
  }
}

void gru_gates(const double* gx, const double* gh, const double* b,
               const double* h, double* r, double* u, double* rh, int batch, int hidden) {
  for (int i = 0; i < batch; ++i)
    for (int j = 0; j < hidden; ++j) {
      const size_t o = size_t(i) * hidden + j;
      const double rr = sigmoid(gx[size_t(i) * 3 * hidden + j] + gh[size_t(i) * 2 * hidden + j] + b[j]);
      const double uu = sigmoid(gx[size_t(i) * 3 * hidden + hidden + j] +
                                gh[size_t(i) * 2 * hidden + hidden + j] + b[hidden + j]);
      r[o] = rr;
      u[o] = uu;
      rh[o] = rr * h[o];
    }
}
void gru_blend(const double* gx, const double* gc, const double* bc,
               const double* h, const double* u, double* c, double* hnew,
               int batch, int hidden) {
  for (int i = 0; i < batch; ++i)
    for (int j = 0; j < hidden; ++j) {
      const size_t o = size_t(i) * hidden + j;
      const double cc = std::tanh(gx[size_t(i) * 3 * hidden + 2 * hidden + j] + gc[o] + bc[j]);
      c[o] = cc;
      hnew[o] = u[o] * cc + (1.0 - u[o]) * h[o];
    }
}
void gru_blend_bwd(const double* dh_new, const double* h, const double* u,
                   const double* c, double* du, double* dpre_c, double* dh,
                   int batch, int hidden) {
  const size_t n = size_t(batch) * hidden;
  for (size_t o = 0; o < n; ++o) {
    du[o] = dh_new[o] * (c[o] - h[o]);
    dpre_c[o] = dh_new[o] * u[o] * (1.0 - c[o] * c[o]);
    dh[o] += dh_new[o] * (1.0 - u[o]);
  }
}
void gru_gates_bwd(const double* drh, const double* du, const double* h,
                   const double* r, const double* u, double* dpre_r,
                   double* dpre_u, double* dh, int batch, int hidden) {
  const size_t n = size_t(batch) * hidden;
  for (size_t o = 0; o < n; ++o) {
    dpre_r[o] = drh[o] * h[o] * r[o] * (1.0 - r[o]);
    dpre_u[o] = du[o] * u[o] * (1.0 - u[o]);
    dh[o] += drh[o] * r[o];
  }
}

void layer_norm(const double* x, const double* gain, const double* bias,
                double eps, double* y, double* mu, double* rstd, int m, int n) {
  for (int i = 0; i < m; ++i) {
    const double* xi = x + size_t(i) * n;
    double s = 0.0;
    for (int j = 0; j < n; ++j) s += xi[j];
    const double mean = s / n;
    double v = 0.0;
    for (int j = 0; j < n; ++j) v += (xi[j] - mean) * (xi[j] - mean);
    const double r = 1.0 / std::sqrt(v / n + eps);
    mu[i] = mean;
    rstd[i] = r;
    double* yi = y + size_t(i) * n;
    for (int j = 0; j < n; ++j) yi[j] = (xi[j] - mean) * r * gain[j] + bias[j];
  }
}
void layer_norm_bwd(const double* x, const double* gain, const double* mu,
                    const double* rstd, const double* dy, double* dx,
                    double* dgain, double* dbias, int m, int n) {
  for (int i = 0; i < m; ++i) {
    const double* xi = x + size_t(i) * n;
    const double* dyi = dy + size_t(i) * n;
    double* dxi = dx + size_t(i) * n;
    // per-row: xhat = (x-mu)*rstd; dx = rstd*(dg - mean(dg) - xhat*mean(dg*xhat))
    // with dg = dy*gain
    double s1 = 0.0, s2 = 0.0;
    for (int j = 0; j < n; ++j) {
      const double xh = (xi[j] - mu[i]) * rstd[i];
      const double dg = dyi[j] * gain[j];
      s1 += dg;
      s2 += dg * xh;
    }
    s1 /= n;
    s2 /= n;
    for (int j = 0; j < n; ++j) {
      const double xh = (xi[j] - mu[i]) * rstd[i];
      const double dg = dyi[j] * gain[j];
      dxi[j] += rstd[i] * (dg - s1 - xh * s2);
      dgain[j] += dyi[j] * xh;
      dbias[j] += dyi[j];
    }
  }
}

}  // namespace ref

// --------------------------------------------------------------- dispatched

void matmul(const double* A, const double* B, double* C, int m, int n, int k,
            bool ta, bool tb, bool acc) {
  if (m == 0 || n == 0) return;
  if (k == 0) {
    if (!acc)
      for (size_t i = 0; i < size_t(m) * n; ++i) C[i] = 0.0;
    return;
  }
#ifdef MTC_HAVE_BLAS
  if (g_backend.load() == Backend::blas) {
    static const bool once = [] {
      openblas_set_num_threads(1);  // keep GEMM deterministic and core-bound
      return true;
    }();
    (void)once;
    cblas_dgemm(CblasRowMajor, ta ? CblasTrans : CblasNoTrans,
                tb ? CblasTrans : CblasNoTrans, m, n, k, 1.0, A, ta ? m : k, B,
                tb ? k : n, acc ? 1.0 : 0.0, C, n);
    return;
  }
#endif
  if (g_backend.load() == Backend::serial) {
    ref::matmul(A, B, C, m, n, k, ta, tb, acc);
    return;
  }
  // OpenMP path. Per-element accumulation order matches the reference
  // (ascending k, starting from zero, with any pre-existing value added once
  // at the end), so results are bitwise identical to ref:: for any thread
  // count. Not-transposed A uses an ikj loop for contiguous row traffic; the
  // dot products build up in a per-thread row buffer so the acc case does not
  // fold C's prior value into the middle of the accumulation chain.
  if (!ta && !tb) {
#pragma omp parallel
    {
      std::vector<double> row(static_cast<size_t>(n), 0.0);
#pragma omp for schedule(static)
      for (int i = 0; i < m; ++i) {
        double* ci = C + size_t(i) * n;
        const double* ai = A + size_t(i) * k;
        for (int j = 0; j < n; ++j) row[size_t(j)] = 0.0;
        for (int p = 0; p < k; ++p) {
          const double a = ai[p];
          const double* bp = B + size_t(p) * n;
          for (int j = 0; j < n; ++j) row[size_t(j)] += a * bp[j];
        }
        if (acc)
          for (int j = 0; j < n; ++j) ci[j] += row[size_t(j)];
        else
          for (int j = 0; j < n; ++j) ci[j] = row[size_t(j)];
      }
    }
  } else {
#pragma omp parallel for schedule(static)
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < n; ++j) {
        const double v = dot_elem(A, B, m, n, k, ta, tb, i, j);
        double& c = C[size_t(i) * n + j];
        c = acc ? c + v : v;
      }
  }
}

void unary_map(Unary u, const double* x, double* y, size_t n) {
  if (g_backend.load() == Backend::serial || n < 4096) {
    ref::unary_map(u, x, y, n);
    return;
  }
#pragma omp parallel for schedule(static)
  for (long i = 0; i < long(n); ++i) y[i] = unary_apply(u, x[i]);
}

void unary_grad(Unary u, const double* x, const double* y, const double* gy,
                double* gx, size_t n) {
  if (g_backend.load() == Backend::serial || n < 4096) {
    ref::unary_grad(u, x, y, gy, gx, n);
    return;
  }
#pragma omp parallel for schedule(static)
  for (long i = 0; i < long(n); ++i) gx[i] += unary_deriv(u, x[i], y[i]) * gy[i];
}

void binary_map(Binary b, const double* a, const double* c, double* y, size_t n) {
  if (g_backend.load() == Backend::serial || n < 4096) {
    ref::binary_map(b, a, c, y, n);
    return;
  }
#pragma omp parallel for schedule(static)
  for (long i = 0; i < long(n); ++i) y[i] = binary_apply(b, a[i], c[i]);
}

double sum(const double* x, size_t n) {
  if (g_backend.load() == Backend::serial || n < 2 * kSumBlock)
    return ref::sum(x, n);
  const size_t nblocks = (n + kSumBlock - 1) / kSumBlock;
  std::vector<double> parts(nblocks);
#pragma omp parallel for schedule(static)
  for (long b = 0; b < long(nblocks); ++b) {
    double part = 0.0;
    const size_t lo = size_t(b) * kSumBlock, hi = std::min(n, lo + kSumBlock);
    for (size_t i = lo; i < hi; ++i) part += x[i];
    parts[b] = part;
  }
  double total = 0.0;
  for (double p : parts) total += p;
  return total;
}

void row_sum(const double* X, double* out, int m, int n, bool acc) {
  if (g_backend.load() == Backend::serial || size_t(m) * n < 4096) {
    ref::row_sum(X, out, m, n, acc);
    return;
  }
#pragma omp parallel for schedule(static)
  for (int i = 0; i < m; ++i) {
    double s = 0.0;
    for (int j = 0; j < n; ++j) s += X[size_t(i) * n + j];
    out[i] = acc ? out[i] + s : s;
  }
}

void col_sum(const double* X, double* out, int m, int n, bool acc) {
  if (g_backend.load() == Backend::serial || size_t(m) * n < 4096) {
    ref::col_sum(X, out, m, n, acc);
    return;
  }
#pragma omp parallel for schedule(static)
  for (int j = 0; j < n; ++j) {
    double s = 0.0;
    for (int i = 0; i < m; ++i) s += X[size_t(i) * n + j];
    out[j] = acc ? out[j] + s : s;
  }
}

void add_row_vec(double* X, const double* v, int m, int n) {
  if (g_backend.load() == Backend::serial || size_t(m) * n < 4096) {
    ref::add_row_vec(X, v, m, n);
    return;
  }
#pragma omp parallel for schedule(static)
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) X[size_t(i) * n + j] += v[j];
}

void axpy(double a, const double* x, double* y, size_t n) {
  if (g_backend.load() == Backend::serial || n < 4096) {
    ref::axpy(a, x, y, n);
    return;
  }
#pragma omp parallel for schedule(static)
  for (long i = 0; i < long(n); ++i) y[i] += a * x[i];
}

void scale(double a, double* x, size_t n) {
  if (g_backend.load() == Backend::serial || n < 4096) {
    ref::scale(a, x, n);
    return;
  }
#pragma omp parallel for schedule(static)
  for (long i = 0; i < long(n); ++i) x[i] *= a;
}

void adam_step(double* p, const double* g, double* m1, double* m2, size_t n,
               double lr, double beta1, double beta2, double eps, long t) {
  if (g_backend.load() == Backend::serial || n < 4096) {
    ref::adam_step(p, g, m1, m2, n, lr, beta1, beta2, eps, t);
    return;
  }
  const double c1 = 1.0 - std::pow(beta1, double(t));
  const double c2 = 1.0 - std::pow(beta2, double(t));
#pragma omp parallel for schedule(static)
  for (long i = 0; i < long(n); ++i) {
    m1[i] = beta1 * m1[i] + (1.0 - beta1) * g[i];
    m2[i] = beta2 * m2[i] + (1.0 - beta2) * g[i] * g[i];
    p[i] -= lr * (m1[i] / c1) / (std::sqrt(m2[i] / c2) + eps);
  }
}

void gru_gates(const double* gx, const double* gh, const double* b,
               const double* h, double* r, double* u, double* rh, int batch, int hidden) {
  if (g_backend.load() == Backend::serial || batch < 8) {
    ref::gru_gates(gx, gh, b, h, r, u, rh, batch, hidden);
    return;
  }
#pragma omp parallel for schedule(static)
  for (int i = 0; i < batch; ++i)
    for (int j = 0; j < hidden; ++j) {
      const size_t o = size_t(i) * hidden + j;
      const double rr = sigmoid(gx[size_t(i) * 3 * hidden + j] + gh[size_t(i) * 2 * hidden + j] + b[j]);
      const double uu = sigmoid(gx[size_t(i) * 3 * hidden + hidden + j] +
                                gh[size_t(i) * 2 * hidden + hidden + j] + b[hidden + j]);
      r[o] = rr;
      u[o] = uu;
      rh[o] = rr * h[o];
    }
}

void gru_blend(const double* gx, const double* gc, const double* bc,
               const double* h, const double* u, double* c, double* hnew,
               int batch, int hidden) {
  if (g_backend.load() == Backend::serial || batch < 8) {
    ref::gru_blend(gx, gc, bc, h, u, c, hnew, batch, hidden);
    return;
  }
#pragma omp parallel for schedule(static)
  for (int i = 0; i < batch; ++i)
    for (int j = 0; j < hidden; ++j) {
      const size_t o = size_t(i) * hidden + j;
      const double cc = std::tanh(gx[size_t(i) * 3 * hidden + 2 * hidden + j] + gc[o] + bc[j]);
      c[o] = cc;
      hnew[o] = u[o] * cc + (1.0 - u[o]) * h[o];
    }
}

void gru_blend_bwd(const double* dh_new, const double* h, const double* u,
                   const double* c, double* du, double* dpre_c, double* dh,
                   int batch, int hidden) {
  ref::gru_blend_bwd(dh_new, h, u, c, du, dpre_c, dh, batch, hidden);
}
void gru_gates_bwd(const double* drh, const double* du, const double* h,
                   const double* r, const double* u, double* dpre_r,
                   double* dpre_u, double* dh, int batch, int hidden) {
  ref::gru_gates_bwd(drh, du, h, r, u, dpre_r, dpre_u, dh, batch, hidden);
}

void layer_norm(const double* x, const double* gain, const double* bias,
                double eps, double* y, double* mu, double* rstd, int m, int n) {
  if (g_backend.load() == Backend::serial || m < 8) {
    ref::layer_norm(x, gain, bias, eps, y, mu, rstd, m, n);
    return;
  }
#pragma omp parallel for schedule(static)
  for (int i = 0; i < m; ++i)
    ref::layer_norm(x + size_t(i) * n, gain, bias, eps, y + size_t(i) * n,
                    mu + i, rstd + i, 1, n);
}

void layer_norm_bwd(const double* x, const double* gain, const double* mu,
                    const double* rstd, const double* dy, double* dx,
                    double* dgain, double* dbias, int m, int n) {
  // dgain/dbias accumulate across rows; keep the row order serial for
  // determinism (cost is negligible next to the matmuls around it).
  ref::layer_norm_bwd(x, gain, mu, rstd, dy, dx, dgain, dbias, m, n);
}

}  // namespace mtc::kern
