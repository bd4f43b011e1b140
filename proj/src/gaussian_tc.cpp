#include "mtc/gaussian_tc.hpp"

#include <cmath>

#include "mtc/common.hpp"

namespace mtc {

namespace {
constexpr double kHalfLog2PiTc = 0.91893853320467274178;

inline double gauss_logpdf(double x, double mean, double var) {
  const double d = x - mean;
  return -0.5 * d * d / var - 0.5 * std::log(var) - kHalfLog2PiTc;
}
}  // namespace

double log_det_spd(const CovMatrix& sigma) {
  const int n = sigma.n;
  require(n > 0, "covariance must be non-empty");
  require(sigma.v.size() == static_cast<size_t>(n) * n, "covariance storage size mismatch");
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j)
      require(std::abs(sigma.at(i, j) - sigma.at(j, i)) <= 1e-12,
              "covariance must be symmetric");
  // Cholesky: Sigma = L L^T; ln det = 2 sum ln L_ii. A non-positive pivot
  // means the matrix is not positive definite.
  std::vector<double> L(static_cast<size_t>(n) * n, 0.0);
  auto l = [&](int i, int j) -> double& { return L[static_cast<size_t>(i) * n + j]; };
  double log_det = 0.0;
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j <= i; ++j) {
      double s = sigma.at(i, j);
      for (int k = 0; k < j; ++k) s -= l(i, k) * l(j, k);
      if (i == j) {
        require(s > 0.0, "covariance is not positive definite");
        l(i, i) = std::sqrt(s);
        log_det += 2.0 * std::log(l(i, i));
      } else {
        l(i, j) = s / l(j, j);
      }
    }
  }
  return log_det;
}

double gaussian_tc_analytic(const CovMatrix& sigma) {
  double sum_log_var = 0.0;
  for (int i = 0; i < sigma.n; ++i) {
    require(sigma.at(i, i) > 0.0, "marginal variances must be positive");
    sum_log_var += std::log(sigma.at(i, i));
  }
  return 0.5 * (sum_log_var - log_det_spd(sigma));
}

CovMatrix ar1_covariance(int n, double rho) {
  require(n > 0, "chain length must be positive");
  require(std::abs(rho) < 1.0, "AR(1) requires |rho| < 1");
  CovMatrix s(n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) s.at(i, j) = std::pow(rho, std::abs(i - j));
  return s;
}

double ar1_tc_exact(int n, double rho) {
  require(n > 0, "chain length must be positive");
  require(std::abs(rho) < 1.0, "AR(1) requires |rho| < 1");
  return -0.5 * (n - 1) * std::log(1.0 - rho * rho);
}

McEstimate ar1_bound_mc(int n, double rho, const std::vector<LinearCond>& cond,
                        long long samples, RngStream& rng) {
  require(n >= 2, "chains need at least two steps");
  require(std::abs(rho) < 1.0, "AR(1) requires |rho| < 1");
  require(cond.size() == static_cast<size_t>(n - 1),
          "need one conditional model per transition");
  require(samples > 0, "sample count must be positive");
  for (const auto& c : cond) require(c.s2 > 0.0, "conditional variances must be positive");
  const double noise_sd = std::sqrt(1.0 - rho * rho);
  double sum = 0.0, sumsq = 0.0;
  for (long long k = 0; k < samples; ++k) {
    double z = rng.normal();
    double total = 0.0;
    for (int t = 0; t + 1 < n; ++t) {
      const double z_next = rho * z + noise_sd * rng.normal();
      const LinearCond& c = cond[static_cast<size_t>(t)];
      total += gauss_logpdf(z_next, c.a * z + c.b, c.s2) - gauss_logpdf(z_next, 0.0, 1.0);
      z = z_next;
    }
    sum += total;
    sumsq += total * total;
  }
  McEstimate out;
  out.samples = samples;
  out.mean = sum / static_cast<double>(samples);
  const double var = (sumsq / static_cast<double>(samples)) - out.mean * out.mean;
  out.se = std::sqrt(std::max(var, 0.0) / static_cast<double>(samples));
  return out;
}

std::vector<LinearCond> ar1_exact_conditionals(int n, double rho) {
  require(n >= 2, "chains need at least two steps");
  return std::vector<LinearCond>(static_cast<size_t>(n - 1),
                                 LinearCond{rho, 0.0, 1.0 - rho * rho});
}

std::vector<LinearCond> perturbed_conditionals(int n, double rho, double strength,
                                               RngStream& rng) {
  std::vector<LinearCond> out = ar1_exact_conditionals(n, rho);
  for (auto& c : out) {
    c.a += rng.uniform(-strength, strength);
    c.b += rng.uniform(-strength, strength);
    c.s2 *= std::exp(rng.uniform(-strength, strength));
  }
  return out;
}

std::vector<LinearCond> fitted_conditionals(int n, double rho, long long chains,
                                            RngStream& rng) {
  require(n >= 2, "chains need at least two steps");
  require(chains >= 8, "too few chains to fit conditionals");
  const double noise_sd = std::sqrt(1.0 - rho * rho);
  // Per-transition least squares of z_{t+1} on z_t, then residual variance.
  std::vector<double> sx(n - 1, 0.0), sy(n - 1, 0.0), sxx(n - 1, 0.0), sxy(n - 1, 0.0),
      syy(n - 1, 0.0);
  for (long long k = 0; k < chains; ++k) {
    double z = rng.normal();
    for (int t = 0; t + 1 < n; ++t) {
      const double z_next = rho * z + noise_sd * rng.normal();
      sx[t] += z;
      sy[t] += z_next;
      sxx[t] += z * z;
      sxy[t] += z * z_next;
      syy[t] += z_next * z_next;
      z = z_next;
    }
  }
  std::vector<LinearCond> out(static_cast<size_t>(n - 1));
  const double m = static_cast<double>(chains);
  for (int t = 0; t + 1 < n; ++t) {
    const double mx = sx[t] / m, my = sy[t] / m;
    const double vx = sxx[t] / m - mx * mx;
    const double cxy = sxy[t] / m - mx * my;
    const double vy = syy[t] / m - my * my;
    require(vx > 0.0, "degenerate regressor variance while fitting");
    LinearCond c;
    c.a = cxy / vx;
    c.b = my - c.a * mx;
    c.s2 = std::max(vy - c.a * cxy, 1e-12);
    out[static_cast<size_t>(t)] = c;
  }
  return out;
}

}  // namespace mtc
