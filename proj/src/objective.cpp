#include "mtc/objective.hpp"

#include <cstring>

#include "mtc/common.hpp"
#include "mtc/gaussian.hpp"

namespace mtc {

namespace {

// stack constant per-step tensors {B,d} into one {n*B, d} block (step-major);
// inputs are replay constants, so no gradient plumbing is needed
Tensor stack_steps(const std::vector<Tensor>& ts, int n) {
  const int B = ts[0].shape()[0], d = ts[0].shape()[1];
  std::vector<double> buf(size_t(n) * B * d);
  for (int t = 0; t < n; ++t)
    std::memcpy(&buf[size_t(t) * B * d], ts[size_t(t)].values().data(),
                sizeof(double) * size_t(B) * d);
  return Tensor::from({n * B, d}, std::move(buf));
}

double tensor_mean(const Tensor& t) {
  double s = 0.0;
  for (double v : t.values()) s += v;
  return s / double(t.size());
}

}  // namespace

BoundTerms bound_terms(const WindowBatch& w, const ModelSet& M, RngStream& enc_rng) {
  require(M.has_encoder(), "bound_terms: this model set carries no encoder");
  require(w.H >= 1 && int(w.s.size()) == w.H + 1 && int(w.a.size()) == w.H,
          "bound_terms: window must hold H+1 states and H actions");
  const int B = w.B, H = w.H;

  // one encoder pass over all H+1 states; z sampled by reparameterization
  Tensor s_all = stack_steps(w.s, H + 1);
  DiagGaussian enc = M.encoder(s_all);
  Tensor z_all = reparam_sample(enc, enc_rng);
  Tensor lf_all = gauss_log_prob(z_all, enc.mean, enc.log_std);
  std::vector<Tensor> z(H + 1), lf(H + 1);
  for (int t = 0; t <= H; ++t) {
    z[t] = slice_rows(z_all, t * B, (t + 1) * B);
    lf[t] = slice_rows(lf_all, t * B, (t + 1) * B);
  }

  // one policy pass over steps 1..H at the stored pre-squash actions
  Tensor s_first = stack_steps(w.s, H);
  Tensor u_all = stack_steps(w.u, H);
  Tensor lpi_all = policy_log_prob(M.policy, s_first, u_all);

  BoundTerms bt;
  bt.c_z.resize(H);
  bt.c_a.resize(H);
  bt.lpi.resize(H);
  for (int t = 0; t < H; ++t) bt.lpi[t] = slice_rows(lpi_all, t * B, (t + 1) * B);

  // latent dynamics: history unroll or one-step, per variant
  if (M.has_dyn()) {
    Tensor h = M.dyn.init_state(B);
    for (int t = 0; t < H; ++t) {
      auto [pd, hn] = M.dyn.step(concat_cols(z[t], w.a[t]), h);
      h = hn;
      bt.c_z[t] = sub(gauss_log_prob(z[t + 1], pd.mean, pd.log_std), lf[t + 1]);
    }
  } else if (M.has_one_step()) {
    for (int t = 0; t < H; ++t) {
      DiagGaussian pd = M.one_step(concat_cols(z[t], w.a[t]));
      bt.c_z[t] = sub(gauss_log_prob(z[t + 1], pd.mean, pd.log_std), lf[t + 1]);
    }
  } else {
    throw DataError("bound_terms: model set has no latent dynamics model");
  }

  // action prediction: window step 1 conditions on z_1 with an empty action
  // history (zero placeholder input)
  if (M.has_act_pred()) {
    bt.has_action_terms = true;
    bt.lq_chi.resize(H);
    Tensor h = M.act_pred.init_state(B);
    Tensor a_prev = Tensor::zeros(w.a[0].shape());
    for (int t = 0; t < H; ++t) {
      auto [pd, hn] = M.act_pred.step(concat_cols(z[t], a_prev), h);
      h = hn;
      a_prev = w.a[t];
      bt.lq_chi[t] = sub(gauss_log_prob(w.u[t], pd.mean, pd.log_std),
                         tanh_log_det(w.u[t]));
      bt.c_a[t] = sub(bt.lq_chi[t], bt.lpi[t]);
    }
  } else {
    for (int t = 0; t < H; ++t) bt.c_a[t] = Tensor::zeros({B, 1});
  }
  return bt;
}

Tensor mixed_bound(const BoundTerms& bt, double m) {
  require(m >= 0.0 && m <= 1.0, "mixed_bound: m must lie in [0, 1]");
  Tensor sz = mean(bt.c_z[0]);
  Tensor sa = mean(bt.c_a[0]);
  for (size_t t = 1; t < bt.c_z.size(); ++t) {
    sz = add(sz, mean(bt.c_z[t]));
    sa = add(sa, mean(bt.c_a[t]));
  }
  return add(mul_scalar(sz, 1.0 - m), mul_scalar(sa, m));
}

double mean_of(const std::vector<Tensor>& terms) {
  if (terms.empty()) return 0.0;
  double s = 0.0;
  for (const Tensor& t : terms) s += tensor_mean(t);
  return s / double(terms.size());
}

double mixed_per_step_estimate(const BoundTerms& bt, double m) {
  require(m >= 0.0 && m <= 1.0, "mixed_per_step_estimate: m must lie in [0, 1]");
  return (1.0 - m) * mean_of(bt.c_z) + m * mean_of(bt.c_a);
}

Tensor regularized_reward(const Tensor& r, const Tensor& c_z, const Tensor& c_a,
                          double alpha) {
  Tensor bonus = mul_scalar(add(c_z, c_a), alpha);
  if (!all_finite(bonus.values().data(), bonus.size()))
    throw NumericalFault("regularized_reward: non-finite information bonus");
  return add(r, bonus);
}

CriticResult critic_pass(const WindowBatch& w, const ModelSet& M, double gamma,
                         bool use_bonus, RngStream& enc_rng, RngStream& pi_rng) {
  const int B = w.B, H = w.H;
  CriticResult out;
  Tensor y;
  {
    Tape::Pause pause;  // everything inside is a constant for the update
    Tensor c_z0 = Tensor::zeros({B, 1});
    Tensor c_a0 = Tensor::zeros({B, 1});
    if (use_bonus && M.regularized()) {
      BoundTerms bt = bound_terms(w, M, enc_rng);
      c_z0 = bt.c_z[H - 1];
      c_a0 = bt.c_a[H - 1];
      out.bonus_mean = M.alpha() * (tensor_mean(c_z0) + tensor_mean(c_a0));
    }
    Tensor r_star = regularized_reward(w.r, c_z0, c_a0, M.alpha());
    PolicySample next = policy_sample(M.policy, w.s[H], pi_rng);
    Tensor qt = minimum(M.q1_target(w.s[H], next.a), M.q2_target(w.s[H], next.a));
    Tensor v = sub(qt, mul_scalar(next.log_prob, M.critic_entropy_coef()));
    Tensor mask = mul_scalar(add_scalar(neg(w.d), 1.0), gamma);  // gamma*(1-d)
    y = add(r_star, mul(mask, v));
    out.r_star_mean = tensor_mean(r_star);
    out.target_mean = tensor_mean(y);
  }
  Tensor q1v = M.q1(w.s[H - 1], w.a[H - 1]);
  Tensor q2v = M.q2(w.s[H - 1], w.a[H - 1]);
  out.q1_mean = tensor_mean(q1v);
  out.q2_mean = tensor_mean(q2v);
  out.loss = add(mean(square(sub(q1v, y))), mean(square(sub(q2v, y))));
  return out;
}

ActorResult actor_pass(const WindowBatch& w, const ModelSet& M, double gamma,
                       double m, bool use_bonus, RngStream& enc_rng,
                       RngStream& pi_rng) {
  const int H = w.H;
  const double lambda = M.temperature();
  ActorResult out;

  Tensor lpi_t;  // log pi(a_t | s_t) at the window's final step
  Tensor bonus;  // alpha * (c_z_t + log q_act(a_t | hist)); unset when unused
  const bool bonused = use_bonus && M.regularized();
  if (bonused) {
    BoundTerms bt = bound_terms(w, M, enc_rng);
    lpi_t = bt.lpi[H - 1];
    Tensor grouped = bt.has_action_terms
                         ? add(bt.c_z[H - 1], bt.lq_chi[H - 1])
                         : bt.c_z[H - 1];
    bonus = mul_scalar(grouped, M.alpha());
    out.bound_estimate = mixed_per_step_estimate(bt, m);
    out.c_z_mean = mean_of(bt.c_z);
    out.c_a_mean = mean_of(bt.c_a);
  } else {
    lpi_t = policy_log_prob(M.policy, w.s[H - 1], w.u[H - 1]);
  }
  out.lpi_mean = tensor_mean(lpi_t);

  PolicySample fresh = policy_sample(M.policy, w.s[H], pi_rng);
  Tensor qmin = minimum(M.q1(w.s[H], fresh.a), M.q2(w.s[H], fresh.a));
  Tensor next_value = sub(qmin, mul_scalar(fresh.log_prob, lambda));
  out.fresh_logpi_mean = tensor_mean(fresh.log_prob);

  Tensor j_per = add(mul_scalar(lpi_t, -lambda), mul_scalar(next_value, gamma));
  if (bonused) j_per = add(j_per, bonus);
  Tensor j = mean(j_per);
  out.objective = j.item();
  out.loss = neg(j);
  return out;
}

double dual_grad_log_alpha(double alpha, double bound_estimate, double ip) {
  return alpha * (bound_estimate - ip);
}

double temperature_grad_log_temp(double temp, double fresh_logpi_mean,
                                 double target_entropy) {
  return temp * (-fresh_logpi_mean - target_entropy);
}

}  // namespace mtc
