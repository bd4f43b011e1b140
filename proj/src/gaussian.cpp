#include "mtc/gaussian.hpp"

#include <cmath>

#include "mtc/common.hpp"

namespace mtc {

Tensor gauss_log_prob(const Tensor& x, const Tensor& mean, const Tensor& logstd) {
  if (x.shape() != mean.shape() || x.shape() != logstd.shape())
    throw ShapeError("gauss_log_prob: x/mean/logstd shapes must match");
  const int d = x.cols();
  // -0.5*z^2 - logstd - 0.5*ln(2*pi), z = (x - mean) * exp(-logstd)
  Tensor z = mul(sub(x, mean), exp(neg(logstd)));
  Tensor per_dim = sub(mul_scalar(square(z), -0.5), logstd);
  return add_scalar(row_sum(per_dim), -kHalfLog2Pi * d);
}

Tensor tanh_log_det(const Tensor& u) {
  // per-dim log(1 - tanh(u)^2) = 2*(ln2 - u - softplus(-2u))
  Tensor sp = softplus(mul_scalar(u, -2.0));
  Tensor per_dim = mul_scalar(add_scalar(add(u, sp), -std::log(2.0)), -2.0);
  return row_sum(per_dim);
}

Tensor gauss_entropy(const Tensor& logstd) {
  const int d = logstd.cols();
  return add_scalar(row_sum(logstd), d * (0.5 + kHalfLog2Pi));
}

std::vector<double> atanh_clamped(const double* a, size_t n) {
  std::vector<double> u(n);
  constexpr double lim = 1.0 - 1e-12;
  for (size_t i = 0; i < n; ++i) {
    const double c = a[i] > lim ? lim : (a[i] < -lim ? -lim : a[i]);
    u[i] = 0.5 * (std::log1p(c) - std::log1p(-c));
  }
  return u;
}

double gauss_kl(const std::vector<double>& m0, const std::vector<double>& s0,
                const std::vector<double>& m1, const std::vector<double>& s1) {
  require(m0.size() == s0.size() && m0.size() == m1.size() && m0.size() == s1.size(),
          "gauss_kl: size mismatch");
  double kl = 0.0;
  for (size_t i = 0; i < m0.size(); ++i) {
    const double r = s0[i] / s1[i];
    const double dm = (m0[i] - m1[i]) / s1[i];
    kl += 0.5 * (r * r + dm * dm - 1.0) - std::log(r);
  }
  return kl;
}

}  // namespace mtc
