#pragma once

#include <memory>
#include <string>
#include <vector>

#include "mtc/adam.hpp"
#include "mtc/config.hpp"
#include "mtc/env.hpp"
#include "mtc/eval.hpp"
#include "mtc/models.hpp"
#include "mtc/objective.hpp"
#include "mtc/replay.hpp"

namespace mtc {

// One metrics row (the CSV schema, in column order).
struct Diag {
  long long step = 0;
  double episode_return = 0.0;
  double critic_loss = 0.0;
  double actor_obj = 0.0;
  double bound_mean = 0.0;
  double c_z_mean = 0.0;
  double c_a_mean = 0.0;
  double alpha = 0.0;
  double beta_prime = 0.0;
  double entropy = 0.0;
};

std::string metrics_header();
std::string metrics_row(const Diag& d);  // floats at 9 significant digits

// Owns the environment, models, replay buffer, per-module optimizers and all
// named random streams of one training run. run() drives the full loop and
// writes artifacts under cfg.out_dir; collect_step()/try_update() expose the
// two halves for headless tests.
class Trainer {
 public:
  explicit Trainer(const TrainConfig& cfg);

  void run();

  // One environment interaction appended to the buffer.
  void collect_step();
  // One update cycle: critic every call, actor (and encoder/predictor) at its
  // frequency, target soft-update at its frequency, then the dual and
  // temperature steps. Returns false while gated (within the initial
  // collection phase, or no valid window yet).
  bool try_update();

  // Deterministic mean-action evaluation on the held-out eval environment;
  // returns per-episode returns and optionally the trajectories.
  std::vector<double> evaluate(int episodes, std::vector<Trajectory>* out = nullptr);

  void save_checkpoint(const std::string& path) const;
  void load_checkpoint(const std::string& path);

  const Diag& last_diag() const { return diag_; }
  ModelSet& models() { return models_; }
  const ModelSet& models() const { return models_; }
  ReplayBuffer& buffer() { return buffer_; }
  Env& env() { return *env_; }
  long long env_step() const { return env_step_; }
  long long update_count() const { return update_count_; }
  double target_entropy() const { return target_entropy_; }
  const TrainConfig& config() const { return cfg_; }

 private:
  void dump_fault(const std::string& dir, const std::string& what) const;
  void write_manifest(const std::string& path) const;

  TrainConfig cfg_;
  std::unique_ptr<Env> env_;
  std::unique_ptr<Env> eval_env_;
  ModelSet models_;
  ReplayBuffer buffer_;
  Adam policy_opt_, critic_opt_, enc_opt_, dyn_opt_, act_pred_opt_;
  ScalarAdam alpha_adam_, temp_adam_;
  RngStream explore_, collect_, pi_, enc_, replay_;
  std::vector<double> cur_obs_;
  long long env_step_ = 0;
  long long update_count_ = 0;
  long long episode_count_ = 0;
  double episode_accum_ = 0.0;
  double last_episode_return_ = 0.0;
  double target_entropy_ = 0.0;
  double last_fresh_logpi_mean_ = 0.0;
  bool use_bonus_ = false;
  Diag diag_;
  WindowBatch last_window_;  // kept for fault dumps
};

// Model checksum: 64-bit FNV-1a over every parameter payload, in checkpoint
// name order (diagnostic identity for fault reports and logs).
uint64_t model_checksum(const ModelSet& M);

}  // namespace mtc
