#include "mtc/replay.hpp"

#include <cstring>

#include "mtc/common.hpp"
#include "mtc/gaussian.hpp"

namespace mtc {

ReplayBuffer::ReplayBuffer(int obs_dim, int act_dim, size_t capacity)
    : obs_dim_(obs_dim), act_dim_(act_dim), capacity_(capacity) {
  require(obs_dim > 0 && act_dim > 0 && capacity > 0, "ReplayBuffer: bad dimensions");
  s_.resize(capacity * size_t(obs_dim));
  s_next_.resize(capacity * size_t(obs_dim));
  a_.resize(capacity * size_t(act_dim));
  r_.resize(capacity);
  done_.resize(capacity);
  episode_.resize(capacity);
}

void ReplayBuffer::push(const double* s, const double* a, double r,
                        const double* s_next, bool done, bool episode_end) {
  const size_t slot = count_ < capacity_ ? (first_ + count_) % capacity_ : first_;
  std::memcpy(&s_[slot * obs_dim_], s, sizeof(double) * obs_dim_);
  std::memcpy(&s_next_[slot * obs_dim_], s_next, sizeof(double) * obs_dim_);
  std::memcpy(&a_[slot * act_dim_], a, sizeof(double) * act_dim_);
  r_[slot] = r;
  done_[slot] = done ? 1 : 0;
  episode_[slot] = next_episode_;
  if (episode_end) ++next_episode_;
  if (count_ < capacity_) ++count_;
  else first_ = (first_ + 1) % capacity_;  // overwrote the oldest entry
}

bool ReplayBuffer::start_valid(size_t j, int H) const {
  if (j + size_t(H) > count_) return false;
  // same episode across the whole window; episode ids are monotone, so the
  // endpoints matching implies every interior entry matches
  return episode_[ring(j)] == episode_[ring(j + size_t(H) - 1)];
}

size_t ReplayBuffer::count_valid_starts(int H) const {
  if (count_ < size_t(H)) return 0;
  size_t n = 0;
  for (size_t j = 0; j + size_t(H) <= count_; ++j)
    if (start_valid(j, H)) ++n;
  return n;
}

bool ReplayBuffer::sample_windows(int batch, int H, RngStream& rng,
                                  WindowBatch& out) const {
  require(batch > 0 && H >= 1, "sample_windows: batch and H must be positive");
  if (count_ < size_t(H)) return false;

  // capped rejection sampling; on repeated misses fall back to an exhaustive
  // scan once so degenerate contents (e.g. all episodes shorter than H)
  // terminate instead of spinning
  const size_t span = count_ - size_t(H) + 1;
  std::vector<size_t> starts(batch);
  std::vector<size_t> all_valid;
  bool scanned = false;
  for (int b = 0; b < batch; ++b) {
    size_t j = 0;
    bool ok = false;
    for (int attempt = 0; attempt < 1000 && !ok; ++attempt) {
      j = rng.below(span);
      ok = start_valid(j, H);
    }
    if (!ok) {
      if (!scanned) {
        for (size_t cand = 0; cand < span; ++cand)
          if (start_valid(cand, H)) all_valid.push_back(cand);
        scanned = true;
      }
      if (all_valid.empty()) return false;
      j = all_valid[rng.below(all_valid.size())];
    }
    starts[b] = j;
  }

  out.B = batch;
  out.H = H;
  out.s.clear();
  out.a.clear();
  out.u.clear();
  // states: window entry t contributes s[t]; the final state is s_next of the
  // last entry
  for (int t = 0; t <= H; ++t) {
    std::vector<double> buf(size_t(batch) * obs_dim_);
    for (int b = 0; b < batch; ++b) {
      const double* src = t < H ? &s_[ring(starts[b] + t) * obs_dim_]
                                : &s_next_[ring(starts[b] + H - 1) * obs_dim_];
      std::memcpy(&buf[size_t(b) * obs_dim_], src, sizeof(double) * obs_dim_);
    }
    out.s.push_back(Tensor::from({batch, obs_dim_}, std::move(buf)));
  }
  for (int t = 0; t < H; ++t) {
    std::vector<double> buf(size_t(batch) * act_dim_);
    for (int b = 0; b < batch; ++b)
      std::memcpy(&buf[size_t(b) * act_dim_], &a_[ring(starts[b] + t) * act_dim_],
                  sizeof(double) * act_dim_);
    std::vector<double> ubuf = atanh_clamped(buf.data(), buf.size());
    out.a.push_back(Tensor::from({batch, act_dim_}, std::move(buf)));
    out.u.push_back(Tensor::from({batch, act_dim_}, std::move(ubuf)));
  }
  std::vector<double> rbuf(batch), dbuf(batch);
  for (int b = 0; b < batch; ++b) {
    const size_t last = ring(starts[b] + H - 1);
    rbuf[b] = r_[last];
    dbuf[b] = double(done_[last]);
  }
  out.r = Tensor::from({batch, 1}, std::move(rbuf));
  out.d = Tensor::from({batch, 1}, std::move(dbuf));
  return true;
}

}  // namespace mtc
