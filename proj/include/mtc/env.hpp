#pragma once

#include <memory>
#include <string>
#include <vector>

#include "mtc/rng.hpp"

namespace mtc {

struct EnvSpec {
  std::string id;
  int obs_dim = 0;
  int act_dim = 0;
  int horizon = 1000;
};

struct StepOut {
  std::vector<double> obs;
  double reward = 0.0;
  bool done = false;       // physical termination (these systems never set it)
  bool truncated = false;  // time-limit reached; the critic still bootstraps
};

// Single-owner mutable environment. Actions are bounded to [-1, 1]^act_dim.
class Env {
 public:
  virtual ~Env() = default;
  virtual EnvSpec spec() const = 0;
  virtual std::vector<double> reset() = 0;
  virtual StepOut step(const std::vector<double>& a) = 0;
  // body-mass multiplier; wrappers forward to the wrapped dynamics
  virtual void set_mass_scale(double k) = 0;
};

// Perturbation protocol knobs, all identity at their defaults.
struct PerturbationConfig {
  double obs_noise = 0.0;        // sigma of Gaussian noise added to observations
  double act_noise = 0.0;        // sigma of Gaussian noise added to actions (clipped)
  double mass_scale = 1.0;       // body-mass multiplier
  int distractors = 0;           // appended uncontrollable state dimensions
  double distractor_rho = 0.9;   // AR coefficient of the distractor dynamics
  double distractor_sigma = 0.3; // innovation sigma of the distractor dynamics
};

// registry ------------------------------------------------------------------
std::vector<std::string> env_ids();  // {"pendulum", "pointmass", "massspring"}
// instance_tag separates RNG streams of multiple instances in one process
std::unique_ptr<Env> make_env(const std::string& id, uint64_t master_seed,
                              const std::string& instance_tag = "");
// wraps in fixed order: mass scale, action noise, observation noise, distractors
std::unique_ptr<Env> make_env(const std::string& id, uint64_t master_seed,
                              const PerturbationConfig& pert,
                              const std::string& instance_tag = "");

// wrappers (exposed for composition tests) -----------------------------------
std::unique_ptr<Env> wrap_obs_noise(std::unique_ptr<Env> inner, double sigma,
                                    RngStream rng);
std::unique_ptr<Env> wrap_action_noise(std::unique_ptr<Env> inner, double sigma,
                                       RngStream rng);
std::unique_ptr<Env> wrap_mass_scale(std::unique_ptr<Env> inner, double k);
std::unique_ptr<Env> wrap_distractors(std::unique_ptr<Env> inner, int n,
                                      double rho, double sigma, RngStream rng);

}  // namespace mtc
