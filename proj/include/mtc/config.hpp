#pragma once

#include <cstdint>
#include <limits>
#include <string>
#include <utility>
#include <vector>

namespace mtc {

inline constexpr const char* kCodeVersion = "0.1.0";

// Full training configuration. Defaults follow the reference hyperparameter
// table; every field can be set from a flat key=value config file, and CLI
// flags override file values.
struct TrainConfig {
  std::string env_id = "pendulum";
  std::string algo = "mtc";  // mtc | mtc-noa | rpc | sac
  long long steps = 1000000;
  uint64_t seed = 1;
  std::string out_dir;  // required by run(); may stay empty for headless use

  double gamma = 0.99;
  long long init_steps = 5000;
  int batch = 256;
  int actor_update_freq = 1;
  int target_update_freq = 2;
  double tau = 0.01;
  double init_temperature = 0.1;
  double actor_lr = 1e-4;
  double critic_lr = 1e-4;
  double temp_lr = 1e-4;
  double alpha_lr = 1e-4;
  double ip = -7.0;   // information constraint level I_p
  double m = 1e-6;    // mixing weight between the state and action bounds
  int history = 8;    // window length H
  double alpha_init = 1e-6;
  long long buffer_capacity = 1000000;
  long long eval_every = 20000;
  int eval_episodes = 10;
  // NaN means "auto": -action_dim, resolved once the env is known.
  double target_entropy = std::numeric_limits<double>::quiet_NaN();
  std::string dynamics_output_norm = "layer_norm";  // layer_norm | none
  double grad_clip = 0.0;                           // 0 disables clipping

  int z_dim = 30;
  int width = 256;
  int gru_hidden = 256;
  int gru_out = 30;

  // Turning the regularizer off pins alpha to exactly zero and skips every
  // bound computation; with a regularized algo this reproduces the plain
  // soft actor-critic update step for step.
  bool regularizer_enabled = true;
  // Continue from <out>/ckpt.bin when present (weights, optimizer state and
  // counters; the replay buffer refills from fresh collection).
  bool resume = false;
};

// Flat key=value text. '#' starts a comment, blank lines are skipped,
// whitespace around keys and values is trimmed. Returns pairs in file order;
// malformed lines raise a data error.
std::vector<std::pair<std::string, std::string>> parse_kv_text(const std::string& text);
std::vector<std::pair<std::string, std::string>> parse_kv_file(const std::string& path);

// Applies one key=value to the config. Unknown keys and unparsable values
// raise a data error. Booleans accept true/false/1/0; target_entropy accepts
// "auto".
void apply_kv(TrainConfig& cfg, const std::string& key, const std::string& value);

// Range and enum checks; throws a usage error naming the offending key.
void validate_config(const TrainConfig& cfg);

double resolved_target_entropy(const TrainConfig& cfg, int act_dim);

// The resolved configuration as ordered key=value lines, plus derived
// bookkeeping (code version, m_effective, which predictor modules exist).
// The run timestamp is appended separately so it stays isolated on one line.
std::vector<std::pair<std::string, std::string>> manifest_entries(const TrainConfig& cfg);

std::string format_g17(double v);  // shortest round-trip-safe decimal
std::string format_g9(double v);   // 9 significant digits (metrics CSV)

}  // namespace mtc
