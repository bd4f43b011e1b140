#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mtc/env.hpp"
#include "mtc/models.hpp"
#include "mtc/replay.hpp"

namespace mtc {

// One evaluation episode: per-step observations and actions plus the
// undiscounted return. Observations are recorded before each action.
struct Trajectory {
  std::string env_id;
  int dim_s = 0;
  int dim_a = 0;
  long long steps = 0;
  std::vector<double> s;  // steps * dim_s, row-major
  std::vector<double> a;  // steps * dim_a, row-major
  double ret = 0.0;
};

// Deterministic episode under the mean action (tanh of the pre-squash mean).
Trajectory rollout_episode(Env& env, const ModelSet& M);

// Canonical fixed-format text encoding: header line
//   # env=<id> dim_s=<n> dim_a=<m> steps=<T> prec=1
// then one line per step of comma-separated "%.1f" fields (s then a).
std::string trajectory_text(const Trajectory& t);
Trajectory parse_trajectory_text(const std::string& text);

// Full-precision dump: the header values as a small text preamble is NOT
// included; this is a raw f64 little-endian stream of (s row, a row) per step.
std::vector<unsigned char> trajectory_binary(const Trajectory& t);

void write_file(const std::string& path, const std::string& text);
void write_file(const std::string& path, const std::vector<unsigned char>& bytes);
std::string read_file(const std::string& path);

// Compressed byte count of the canonical text encoding under the built-in
// block compressor.
size_t compressed_trajectory_size(const Trajectory& t);

// Mean with standard error and a 90% confidence half-width (normal
// approximation).
struct MeanCi {
  double mean = 0.0;
  double se = 0.0;
  double ci90 = 0.0;
  int n = 0;
};
MeanCi mean_ci90(const std::vector<double>& xs);

// Held-out mean negative log-likelihood of a_{k+t} given a_k under a small
// Gaussian regressor trained by maximum likelihood (fresh model per call).
// Split: first 80% of trajectories (input order) train, the rest held out.
double t_step_prediction_nll(const std::vector<Trajectory>& data, int t_ahead,
                             uint64_t seed);

struct SweepCell {
  std::string kind;  // "obs" | "act" | "mass" | "distract"
  double level = 0.0;
  uint64_t seed = 0;
  double mean_return = 0.0;
  double ci90 = 0.0;
  int episodes = 0;
};

// Full factorial over levels x seeds. Each cell constructs its own
// environment chain from (env id, seed, perturbation), so cells are
// order-independent; a zero-strength cell builds the plain environment.
std::vector<SweepCell> robustness_sweep(const ModelSet& M, const std::string& env_id,
                                        const std::string& kind,
                                        const std::vector<double>& levels,
                                        const std::vector<uint64_t>& seeds,
                                        int episodes);

PerturbationConfig perturbation_for(const std::string& kind, double level);

// Sum_t gamma^t * per_step[t].
double discounted_tc_estimate(const std::vector<double>& per_step, double gamma);

// Mean per-step mixed bound over `steps` on-policy environment steps, with
// actions sampled stochastically from the current policy. Consecutive
// disjoint windows of length H are batched through the bound; the standard
// error is taken over per-window means.
MeanCi on_policy_mixed_bound(const ModelSet& M, Env& env, long long steps, int H,
                             double m, RngStream& enc_rng, RngStream& pi_rng);

// Score normalization: 1.0 for the best entry, below 1.0 otherwise. Positive
// scores divide by the maximum; all-negative scores use best/score so the
// ordering survives the sign (documented in the README).
std::vector<double> normalize_scores(const std::vector<double>& xs);
// Compressed-size normalization: divide by the largest size (ratios in (0,1]).
std::vector<double> normalize_by_max(const std::vector<double>& xs);

}  // namespace mtc
