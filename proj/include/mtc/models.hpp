#pragma once

#include <string>
#include <utility>

#include "mtc/gaussian.hpp"
#include "mtc/modules.hpp"

namespace mtc {

// The four training modes sharing one code path. "mtc" carries both history
// predictors; "mtc_noa" drops the action predictor; "rpc" swaps the history
// dynamics for a one-step model; "sac" runs with the information bonus absent.
enum class Algo { mtc, mtc_noa, rpc, sac };

Algo algo_from_string(const std::string& s);  // throws UsageError
std::string to_string(Algo a);

struct DiagGaussian {
  Tensor mean, log_std;  // both {B, d}
};

// smooth rescaling of a raw head output into the log-std interval [-10, 2]
Tensor bound_log_std(const Tensor& raw);
inline constexpr double kLogStdLo = -10.0;
inline constexpr double kLogStdHi = 2.0;

// z = mean + exp(log_std) * eps, eps ~ N(0, I); differentiable in mean/log_std
Tensor reparam_sample(const DiagGaussian& d, RngStream& rng);

// analytic KL(p || q) per row -> {B, 1} (diagnostics and tests)
Tensor kl_diag(const DiagGaussian& p, const DiagGaussian& q);

// ---- learnable pieces --------------------------------------------------

struct Encoder {
  Mlp net;  // obs -> width -> width -> 2*z_dim
  int z_dim = 0;
  Encoder() = default;
  Encoder(int obs_dim, int z_dim, int width, RngStream& rng);
  DiagGaussian operator()(const Tensor& s) const;
  void collect(const std::string& prefix, ParamVec& out) const;
};

struct Policy {
  Mlp net;  // obs -> width -> width -> 2*a_dim
  int a_dim = 0;
  Policy() = default;
  Policy(int obs_dim, int a_dim, int width, RngStream& rng);
  DiagGaussian dist(const Tensor& s) const;  // over pre-squash u
  void collect(const std::string& prefix, ParamVec& out) const;
};

struct PolicySample {
  Tensor a;         // tanh(u), in (-1,1)
  Tensor u;         // pre-squash reparameterized draw
  Tensor log_prob;  // {B,1}, includes the tanh change-of-variables term
};

PolicySample policy_sample(const Policy& pi, const Tensor& s, RngStream& rng);
// log pi(a|s) for given pre-squash u = atanh(a); gradient flows through the
// policy parameters only (u enters as a constant)
Tensor policy_log_prob(const Policy& pi, const Tensor& s, const Tensor& u);
Tensor policy_mean_action(const Policy& pi, const Tensor& s);  // tanh(mean)

// Recurrent history model: gated cell (projected output), optional layer
// normalization of the projected output, then an MLP head producing a
// DiagGaussian over out_dim.
struct HistoryModel {
  GruCell cell;
  LayerNorm ln;
  Mlp head;  // gru_out -> width -> width -> 2*out_dim
  bool use_ln = true;
  int out_dim = 0;
  HistoryModel() = default;
  HistoryModel(int in_dim, int out_dim, int gru_hidden, int gru_out, int width,
               bool use_ln, RngStream& rng);
  Tensor init_state(int batch) const { return cell.initial_state(batch); }
  // consume one (input, state) step; returns the head distribution and the
  // next recurrent state
  std::pair<DiagGaussian, Tensor> step(const Tensor& x, const Tensor& h) const;
  void collect(const std::string& prefix, ParamVec& out) const;
};

// One-step latent dynamics (the non-history variant): MLP on concat(z, a)
struct OneStepModel {
  Mlp net;
  int out_dim = 0;
  OneStepModel() = default;
  OneStepModel(int in_dim, int out_dim, int width, RngStream& rng);
  DiagGaussian operator()(const Tensor& za) const;
  void collect(const std::string& prefix, ParamVec& out) const;
};

struct QNet {
  Mlp net;  // (obs, act) -> width -> width -> 1
  QNet() = default;
  QNet(int obs_dim, int act_dim, int width, RngStream& rng);
  Tensor operator()(const Tensor& s, const Tensor& a) const;
  void collect(const std::string& prefix, ParamVec& out) const;
};

// ---- the full set -------------------------------------------------------

struct ModelConfig {
  Algo algo = Algo::mtc;
  int obs_dim = 0, act_dim = 0;
  int z_dim = 30;
  int width = 256;
  int gru_hidden = 256;
  int gru_out = 30;
  bool dynamics_ln = true;
  double init_temperature = 0.1;
  double alpha_init = 1e-6;
};

struct ModelSet {
  ModelConfig cfg;
  Encoder encoder;        // absent for sac
  Policy policy;
  QNet q1, q2, q1_target, q2_target;
  HistoryModel dyn;       // mtc, mtc_noa
  OneStepModel one_step;  // rpc
  HistoryModel act_pred;  // mtc
  // dual multiplier and the directly-optimized temperature, in log space.
  // For mtc the temperature variable is beta' = beta + alpha; elsewhere it is
  // beta itself (no action-prediction term contributes to the entropy
  // coefficient).
  double log_alpha = 0.0;
  double log_temp = 0.0;

  ModelSet() = default;
  ModelSet(const ModelConfig& cfg, uint64_t master_seed);

  bool has_encoder() const { return cfg.algo != Algo::sac; }
  bool has_dyn() const { return cfg.algo == Algo::mtc || cfg.algo == Algo::mtc_noa; }
  bool has_one_step() const { return cfg.algo == Algo::rpc; }
  bool has_act_pred() const { return cfg.algo == Algo::mtc; }
  bool regularized() const { return cfg.algo != Algo::sac; }

  double alpha() const { return regularized() ? std::exp(log_alpha) : 0.0; }
  double temperature() const { return std::exp(log_temp); }
  // entropy coefficient inside the critic target: beta = beta' - alpha when
  // the temperature variable absorbs alpha (mtc), beta otherwise
  double critic_entropy_coef() const {
    return cfg.algo == Algo::mtc ? temperature() - alpha() : temperature();
  }

  // parameter groups (views over the same tensors)
  ParamVec policy_params() const;
  ParamVec encoder_params() const;
  ParamVec dyn_params() const;       // history or one-step, per algo
  ParamVec act_pred_params() const;
  ParamVec critic_params() const;    // q1 + q2
  ParamVec target_params() const;    // q1_target + q2_target

  void save(ckpt::Map& out) const;       // params + duals + architecture meta
  void load(const ckpt::Map& in);        // validates meta, then loads
  static ModelConfig config_from_checkpoint(const ckpt::Map& in);
};

}  // namespace mtc
