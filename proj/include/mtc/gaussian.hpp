#pragma once

#include <vector>

#include "mtc/tensor.hpp"

namespace mtc {

// Diagonal-Gaussian utilities over row-batched tensors {B, d}. All tensor
// functions are differentiable through mean/logstd (and x where noted).

inline constexpr double kHalfLog2Pi = 0.91893853320467274178;  // 0.5*ln(2*pi)

// log N(x | mean, diag(exp(logstd))^2), summed over dimensions -> {B, 1}
Tensor gauss_log_prob(const Tensor& x, const Tensor& mean, const Tensor& logstd);

// log|d tanh(u)/du| summed over dimensions -> {B, 1};
// uses the stable identity log(1 - tanh(u)^2) = 2*(ln 2 - u - softplus(-2u))
Tensor tanh_log_det(const Tensor& u);

// entropy of a diagonal Gaussian, summed over dimensions -> {B, 1}
Tensor gauss_entropy(const Tensor& logstd);

// elementwise atanh via 0.5*(log1p(a) - log1p(-a)), inputs clamped into the
// open interval (-1, 1); plain values, no gradient flow
std::vector<double> atanh_clamped(const double* a, size_t n);

// scalar analytic KL( N(m0, s0^2) || N(m1, s1^2) ) for diagonal covariances
double gauss_kl(const std::vector<double>& m0, const std::vector<double>& s0,
                const std::vector<double>& m1, const std::vector<double>& s1);

}  // namespace mtc
