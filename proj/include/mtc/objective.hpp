#pragma once

#include <vector>

#include "mtc/models.hpp"
#include "mtc/replay.hpp"

namespace mtc {

// Per-step variational bound terms over a window of length H:
//   c_z[t] = log q_dyn(z_{t+1} | history) - log f(z_{t+1} | s_{t+1})
//   c_a[t] = log q_act(a_t | history)     - log pi(a_t | s_t)
// Stored with the pieces the actor objective regroups (lq_chi, lpi).
struct BoundTerms {
  std::vector<Tensor> c_z;     // H x {B,1}
  std::vector<Tensor> c_a;     // H x {B,1}; zero tensors when no action model
  std::vector<Tensor> lq_chi;  // H x {B,1}; empty when no action model
  std::vector<Tensor> lpi;     // H x {B,1}: log pi(a_t | s_t)
  bool has_action_terms = false;
};

// Evaluates the bound terms with latents sampled from the current encoder;
// dispatches on the model set's dynamics variant (history vs one-step).
// Gradients flow into the encoder, the predictors, and the policy.
BoundTerms bound_terms(const WindowBatch& w, const ModelSet& M, RngStream& enc_rng);

// (1-m)*sum_t mean_B c_z[t] + m*sum_t mean_B c_a[t] as a scalar tensor
Tensor mixed_bound(const BoundTerms& bt, double m);
// mean over steps and batch of the mixed per-step terms (the dual's estimate)
double mixed_per_step_estimate(const BoundTerms& bt, double m);
// mean over steps and batch of a term list (diagnostics)
double mean_of(const std::vector<Tensor>& terms);

// r* = r + alpha * (c_z + c_a), elementwise over {B,1} tensors
Tensor regularized_reward(const Tensor& r, const Tensor& c_z, const Tensor& c_a,
                          double alpha);

struct CriticResult {
  Tensor loss;  // scalar: MSE(q1, y) + MSE(q2, y)
  double q1_mean = 0, q2_mean = 0, target_mean = 0, r_star_mean = 0, bonus_mean = 0;
};

// One critic pass on the window's final transition. The target
//   y = r* + gamma*(1-d)*(min twin target Q - beta * log pi(a~|s'))
// is built under paused recording (no gradient flows into it), with the
// information bonus recomputed from the current models when use_bonus is set.
CriticResult critic_pass(const WindowBatch& w, const ModelSet& M, double gamma,
                         bool use_bonus, RngStream& enc_rng, RngStream& pi_rng);

struct ActorResult {
  Tensor loss;  // scalar to minimize (negated objective)
  double objective = 0;
  double fresh_logpi_mean = 0;  // E[log pi(a~|s_{t+1})], temperature signal
  double bound_estimate = 0;    // mixed per-step estimate (dual signal)
  double c_z_mean = 0, c_a_mean = 0, lpi_mean = 0;
};

// One actor pass, the regrouped single-step expansion of the soft-Q
// objective: with lambda the directly-optimized temperature,
//   J = mean[ -lambda*log pi(a_t|s_t) + alpha*(c_z_t + log q_act(a_t|hist))
//             + gamma*(min twin Q(s_{t+1}, a~) - lambda*log pi(a~|s_{t+1})) ]
// (the -alpha*log pi part of c_a_t is absorbed into lambda for the mtc
// variant). Q parameters must be frozen by the caller. a_t comes from the
// window; a~ is a fresh reparameterized sample.
ActorResult actor_pass(const WindowBatch& w, const ModelSet& M, double gamma,
                       double m, bool use_bonus, RngStream& enc_rng,
                       RngStream& pi_rng);

// Analytic dual gradients in log space.
// d/d(log alpha) of L = alpha*(bound_estimate - I_p)
double dual_grad_log_alpha(double alpha, double bound_estimate, double ip);
// d/d(log temp) of L = temp*(-E[log pi] - target_entropy)
double temperature_grad_log_temp(double temp, double fresh_logpi_mean,
                                 double target_entropy);

}  // namespace mtc
