#pragma once

#include <cstddef>
#include <vector>

#include "mtc/rng.hpp"
#include "mtc/tensor.hpp"

namespace mtc {

// A batch of contiguous same-episode windows, already tensor-ized, step-major:
// states s[0..H] ({B, ds} each), actions a[0..H-1] ({B, da} each), and the
// final-step transition scalars. u[t] = atanh(a[t]) is precomputed because the
// policy and the action predictor both evaluate densities at the pre-squash
// point. The window's final transition is (s[H-1], a[H-1], r, s[H], d).
struct WindowBatch {
  int B = 0, H = 0;
  std::vector<Tensor> s;  // H+1 entries {B, ds}
  std::vector<Tensor> a;  // H entries {B, da}
  std::vector<Tensor> u;  // H entries {B, da}
  Tensor r;               // {B, 1} reward of the final step
  Tensor d;               // {B, 1} physical-termination flag of the final step
};

// Ring buffer of transitions with episode markers. Sampled windows never span
// two episodes and never contain an internal termination.
class ReplayBuffer {
 public:
  ReplayBuffer(int obs_dim, int act_dim, size_t capacity);

  // episode_end covers both physical termination and time-limit truncation;
  // done is physical termination only (what the critic masks with)
  void push(const double* s, const double* a, double r, const double* s_next,
            bool done, bool episode_end);

  size_t size() const { return count_; }
  size_t capacity() const { return capacity_; }
  int obs_dim() const { return obs_dim_; }
  int act_dim() const { return act_dim_; }

  // Uniformly samples valid window starts. Returns false ("not ready") when
  // the buffer holds no valid window of length H.
  bool sample_windows(int batch, int H, RngStream& rng, WindowBatch& out) const;

  // number of valid window starts (exhaustive scan; used by tests)
  size_t count_valid_starts(int H) const;

 private:
  bool start_valid(size_t j, int H) const;  // j = logical index, oldest = 0
  size_t ring(size_t j) const { return (first_ + j) % capacity_; }

  int obs_dim_, act_dim_;
  size_t capacity_, count_ = 0, first_ = 0;  // first_ = ring slot of oldest
  std::vector<double> s_, a_, s_next_, r_;
  std::vector<unsigned char> done_;
  std::vector<uint64_t> episode_;  // episode id per entry
  uint64_t next_episode_ = 0;
};

}  // namespace mtc
