#pragma once

#include <cmath>
#include <vector>

#include "mtc/kernels.hpp"
#include "mtc/tensor.hpp"

namespace mtc {

// Adam over a fixed parameter list. step() consumes .grad (missing gradients
// count as zero) and leaves the gradients cleared for the next pass.
class Adam {
 public:
  explicit Adam(std::vector<Tensor> params, double lr, double beta1 = 0.9,
                double beta2 = 0.999, double eps = 1e-8)
      : params_(std::move(params)), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
    m1_.resize(params_.size());
    m2_.resize(params_.size());
    for (size_t i = 0; i < params_.size(); ++i) {
      m1_[i].assign(params_[i].size(), 0.0);
      m2_[i].assign(params_[i].size(), 0.0);
    }
  }

  void step() {
    ++t_;
    if (clip_ > 0.0) clip_global_norm();
    for (size_t i = 0; i < params_.size(); ++i) {
      Tensor& p = params_[i];
      const size_t n = p.size();
      if (zero_.size() < n) zero_.assign(n, 0.0);
      const double* g = p.has_grad() ? p.grad().data() : zero_.data();
      kern::adam_step(p.values_mut().data(), g, m1_[i].data(), m2_[i].data(),
                      n, lr_, beta1_, beta2_, eps_, t_);
    }
    zero_grad();
  }

  void zero_grad() {
    for (auto& p : params_) p.zero_grad();
  }

  double grad_global_norm() const {
    double s = 0.0;
    for (const auto& p : params_)
      if (p.has_grad())
        for (double g : p.grad()) s += g * g;
    return std::sqrt(s);
  }

  void set_lr(double lr) { lr_ = lr; }
  double lr() const { return lr_; }
  void set_grad_clip(double c) { clip_ = c; }  // 0 disables
  long step_count() const { return t_; }
  void set_step_count(long t) { t_ = t; }
  size_t size() const { return params_.size(); }
  const Tensor& param(size_t i) const { return params_[i]; }
  std::vector<double>& m1(size_t i) { return m1_[i]; }
  std::vector<double>& m2(size_t i) { return m2_[i]; }
  const std::vector<double>& m1(size_t i) const { return m1_[i]; }
  const std::vector<double>& m2(size_t i) const { return m2_[i]; }

 private:
  void clip_global_norm() {
    const double norm = grad_global_norm();
    if (norm <= clip_) return;
    const double s = clip_ / norm;
    for (auto& p : params_)
      if (p.has_grad()) kern::scale(s, p.grad_mut().data(), p.size());
  }

  std::vector<Tensor> params_;
  std::vector<std::vector<double>> m1_, m2_;
  std::vector<double> zero_;
  double lr_, beta1_, beta2_, eps_;
  double clip_ = 0.0;
  long t_ = 0;
};

// Adam on a single scalar (used for the dual variables, whose gradients are
// computed analytically rather than through the tape).
struct ScalarAdam {
  double m = 0.0, v = 0.0;
  long t = 0;
  double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;

  // returns the update delta for the given gradient (caller applies it)
  double delta(double g, double lr) {
    ++t;
    m = beta1 * m + (1.0 - beta1) * g;
    v = beta2 * v + (1.0 - beta2) * g * g;
    const double mhat = m / (1.0 - std::pow(beta1, double(t)));
    const double vhat = v / (1.0 - std::pow(beta2, double(t)));
    return -lr * mhat / (std::sqrt(vhat) + eps);
  }
};

}  // namespace mtc
