#pragma once

#include <cstddef>

// Dense f64 compute kernels. Every kernel has a plain serial reference
// implementation (`ref::`) and an OpenMP-parallel implementation; matmul
// additionally has a BLAS-backed path. The parallel variants are bitwise
// identical to the references by construction: each output element is owned
// by exactly one thread and its floating-point accumulation order is fixed,
// independent of thread count (reductions use fixed-size blocks combined in
// block order). The BLAS path may differ in the last bits and is validated
// against the reference to 1e-12; it is still run-to-run deterministic.
namespace mtc::kern {

enum class Backend { serial, openmp, blas };

Backend backend();
void set_backend(Backend b);
bool blas_available();

enum class Unary { tanh_, relu_, softplus_, exp_, log_, neg_, square_, sigmoid_ };
enum class Binary { add_, sub_, mul_, min_ };

// ---- reference (serial) kernels -------------------------------------------
namespace ref {
// C[m x n] (+)= op(A) * op(B); row-major. ta: A stored [k x m], tb: B stored [n x k].
void matmul(const double* A, const double* B, double* C, int m, int n, int k,
            bool ta, bool tb, bool acc);
void unary_map(Unary u, const double* x, double* y, size_t n);
// gx += d(op)/dx * gy; x is the op input, y its output (whichever the rule needs)
void unary_grad(Unary u, const double* x, const double* y, const double* gy,
                double* gx, size_t n);
void binary_map(Binary b, const double* a, const double* c, double* y, size_t n);
double sum(const double* x, size_t n);
void row_sum(const double* X, double* out, int m, int n, bool acc);
void col_sum(const double* X, double* out, int m, int n, bool acc);
void add_row_vec(double* X, const double* v, int m, int n);
void axpy(double a, const double* x, double* y, size_t n);
void scale(double a, double* x, size_t n);
void adam_step(double* p, const double* g, double* m1, double* m2, size_t n,
               double lr, double beta1, double beta2, double eps, long t);
// gates stage: r = sigm(gx_r + gh_r + br), u = sigm(gx_u + gh_u + bu), rh = r.*h
void gru_gates(const double* gx, const double* gh, const double* b,
               const double* h, double* r, double* u, double* rh, int batch, int hidden);
// blend stage: c = tanh(gx_c + gc + bc), hnew = u.*c + (1-u).*h
void gru_blend(const double* gx, const double* gc, const double* bc,
               const double* h, const double* u, double* c, double* hnew,
               int batch, int hidden);
void gru_blend_bwd(const double* dh_new, const double* h, const double* u,
                   const double* c, double* du, double* dpre_c, double* dh,
                   int batch, int hidden);
void gru_gates_bwd(const double* drh, const double* du, const double* h,
                   const double* r, const double* u, double* dpre_r,
                   double* dpre_u, double* dh, int batch, int hidden);
void layer_norm(const double* x, const double* gain, const double* bias,
                double eps, double* y, double* mu, double* rstd, int m, int n);
void layer_norm_bwd(const double* x, const double* gain, const double* mu,
                    const double* rstd, const double* dy, double* dx,
                    double* dgain, double* dbias, int m, int n);
}  // namespace ref

// ---- dispatched kernels (OpenMP / BLAS per global backend) -----------------
void matmul(const double* A, const double* B, double* C, int m, int n, int k,
            bool ta, bool tb, bool acc);
void unary_map(Unary u, const double* x, double* y, size_t n);
void unary_grad(Unary u, const double* x, const double* y, const double* gy,
                double* gx, size_t n);
void binary_map(Binary b, const double* a, const double* c, double* y, size_t n);
double sum(const double* x, size_t n);
void row_sum(const double* X, double* out, int m, int n, bool acc);
void col_sum(const double* X, double* out, int m, int n, bool acc);
void add_row_vec(double* X, const double* v, int m, int n);
void axpy(double a, const double* x, double* y, size_t n);
void scale(double a, double* x, size_t n);
void adam_step(double* p, const double* g, double* m1, double* m2, size_t n,
               double lr, double beta1, double beta2, double eps, long t);
void gru_gates(const double* gx, const double* gh, const double* b,
               const double* h, double* r, double* u, double* rh, int batch, int hidden);
void gru_blend(const double* gx, const double* gc, const double* bc,
               const double* h, const double* u, double* c, double* hnew,
               int batch, int hidden);
void gru_blend_bwd(const double* dh_new, const double* h, const double* u,
                   const double* c, double* du, double* dpre_c, double* dh,
                   int batch, int hidden);
void gru_gates_bwd(const double* drh, const double* du, const double* h,
                   const double* r, const double* u, double* dpre_r,
                   double* dpre_u, double* dh, int batch, int hidden);
void layer_norm(const double* x, const double* gain, const double* bias,
                double eps, double* y, double* mu, double* rstd, int m, int n);
void layer_norm_bwd(const double* x, const double* gain, const double* mu,
                    const double* rstd, const double* dy, double* dx,
                    double* dgain, double* dbias, int m, int n);

}  // namespace mtc::kern
