#pragma once

#include <cstdint>
#include <vector>

#include "mtc/rng.hpp"

namespace mtc {

// Dense symmetric covariance, row-major n x n.
struct CovMatrix {
  int n = 0;
  std::vector<double> v;
  CovMatrix() = default;
  explicit CovMatrix(int n_) : n(n_), v(static_cast<size_t>(n_) * n_, 0.0) {}
  double& at(int i, int j) { return v[static_cast<size_t>(i) * n + j]; }
  double at(int i, int j) const { return v[static_cast<size_t>(i) * n + j]; }
};

// ln det via Cholesky; throws a data error when the matrix is not symmetric
// positive definite.
double log_det_spd(const CovMatrix& sigma);

// Total correlation of a joint Gaussian in nats:
//   TC = 0.5 * (sum_i ln sigma_ii - ln det Sigma).
double gaussian_tc_analytic(const CovMatrix& sigma);

// Stationary AR(1) covariance with unit marginals: Sigma_ij = rho^|i-j|.
CovMatrix ar1_covariance(int n, double rho);
// Closed form for the above: -(n-1)/2 * ln(1 - rho^2).
double ar1_tc_exact(int n, double rho);

// One-step linear-Gaussian conditional model q(z_{t+1} | z_t) =
// N(a * z_t + b, s2). The exact AR(1) conditional is {rho, 0, 1 - rho^2}.
struct LinearCond {
  double a = 0.0, b = 0.0, s2 = 1.0;
};

struct McEstimate {
  double mean = 0.0;
  double se = 0.0;
  long long samples = 0;
};

// Monte-Carlo estimate of the total-correlation lower bound on AR(1) chains
// z_1 ~ N(0,1), z_{t+1} = rho z_t + sqrt(1-rho^2) eps. Each chain contributes
//   sum_{t=1}^{n-1} [ log q(z_{t+1} | z_t) - log f(z_{t+1}) ]
// with f the chain's true unit marginal — the density the samples are drawn
// from, mirroring how the agent's latents come from the encoder whose density
// the bound subtracts. Any conditional list keeps this a lower bound in
// expectation; the exact conditionals make it tight.
McEstimate ar1_bound_mc(int n, double rho, const std::vector<LinearCond>& cond,
                        long long samples, RngStream& rng);

std::vector<LinearCond> ar1_exact_conditionals(int n, double rho);

// Exact conditionals independently jittered in slope, offset and log-variance
// by uniform draws of the given strength (imperfect-model probes).
std::vector<LinearCond> perturbed_conditionals(int n, double rho, double strength,
                                               RngStream& rng);

// Conditionals fit by maximum likelihood (least squares + residual variance)
// on `chains` freshly sampled AR(1) chains.
std::vector<LinearCond> fitted_conditionals(int n, double rho, long long chains,
                                            RngStream& rng);

}  // namespace mtc
