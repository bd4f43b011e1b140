#include "mtc/eval.hpp"

#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

#include "mtc/adam.hpp"
#include "mtc/compress.hpp"
#include "mtc/objective.hpp"

namespace mtc {

namespace {
constexpr double kZ90 = 1.6448536269514722;  // two-sided 90% normal quantile
}

Trajectory rollout_episode(Env& env, const ModelSet& M) {
  const EnvSpec sp = env.spec();
  require(sp.obs_dim == M.cfg.obs_dim && sp.act_dim == M.cfg.act_dim,
          "checkpoint architecture does not match the environment (obs " +
              std::to_string(M.cfg.obs_dim) + "x" + std::to_string(M.cfg.act_dim) +
              " vs env " + std::to_string(sp.obs_dim) + "x" + std::to_string(sp.act_dim) + ")");
  Trajectory t;
  t.env_id = sp.id;
  t.dim_s = sp.obs_dim;
  t.dim_a = sp.act_dim;
  std::vector<double> obs = env.reset();
  for (;;) {
    Tensor s = Tensor::from({1, sp.obs_dim}, obs);
    Tensor a = policy_mean_action(M.policy, s);
    const auto& av = a.values();
    t.s.insert(t.s.end(), obs.begin(), obs.end());
    t.a.insert(t.a.end(), av.begin(), av.end());
    ++t.steps;
    StepOut o = env.step(std::vector<double>(av.begin(), av.end()));
    t.ret += o.reward;
    if (o.done || o.truncated) break;
    obs = o.obs;
  }
  return t;
}

std::string trajectory_text(const Trajectory& t) {
  require(t.steps > 0, "trajectory has no steps");
  require(t.s.size() == static_cast<size_t>(t.steps) * t.dim_s &&
              t.a.size() == static_cast<size_t>(t.steps) * t.dim_a,
          "trajectory storage does not match its header");
  std::string out = "# env=" + t.env_id + " dim_s=" + std::to_string(t.dim_s) +
                    " dim_a=" + std::to_string(t.dim_a) +
                    " steps=" + std::to_string(t.steps) + " prec=1\n";
  char buf[32];
  for (long long k = 0; k < t.steps; ++k) {
    bool first = true;
    auto put = [&](double v) {
      std::snprintf(buf, sizeof(buf), "%.1f", v);
      if (!first) out += ',';
      out += buf;
      first = false;
    };
    for (int i = 0; i < t.dim_s; ++i) put(t.s[static_cast<size_t>(k) * t.dim_s + i]);
    for (int i = 0; i < t.dim_a; ++i) put(t.a[static_cast<size_t>(k) * t.dim_a + i]);
    out += '\n';
  }
  return out;
}

Trajectory parse_trajectory_text(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  require(static_cast<bool>(std::getline(in, line)), "empty trajectory file");
  Trajectory t;
  {
    long long steps = 0;
    char env_buf[64] = {0};
    int prec = 0;
    const int got = std::sscanf(line.c_str(), "# env=%63s dim_s=%d dim_a=%d steps=%lld prec=%d",
                                env_buf, &t.dim_s, &t.dim_a, &steps, &prec);
    require(got == 5, "bad trajectory header: " + line);
    require(prec == 1, "unsupported trajectory precision tag");
    t.env_id = env_buf;
    t.steps = steps;
  }
  require(t.dim_s > 0 && t.dim_a > 0 && t.steps > 0, "bad trajectory dimensions");
  t.s.reserve(static_cast<size_t>(t.steps) * t.dim_s);
  t.a.reserve(static_cast<size_t>(t.steps) * t.dim_a);
  long long rows = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string cell;
    std::vector<double> vals;
    while (std::getline(ls, cell, ',')) vals.push_back(std::stod(cell));
    require(static_cast<int>(vals.size()) == t.dim_s + t.dim_a,
            "trajectory row has wrong field count");
    for (int i = 0; i < t.dim_s; ++i) t.s.push_back(vals[static_cast<size_t>(i)]);
    for (int i = 0; i < t.dim_a; ++i) t.a.push_back(vals[static_cast<size_t>(t.dim_s + i)]);
    ++rows;
  }
  require(rows == t.steps, "trajectory row count does not match its header");
  return t;
}

std::vector<unsigned char> trajectory_binary(const Trajectory& t) {
  require(t.steps > 0, "trajectory has no steps");
  std::vector<unsigned char> out;
  out.reserve(static_cast<size_t>(t.steps) * (t.dim_s + t.dim_a) * sizeof(double));
  auto put = [&out](double v) {
    unsigned char b[sizeof(double)];
    std::memcpy(b, &v, sizeof(double));  // little-endian host
    out.insert(out.end(), b, b + sizeof(double));
  };
  for (long long k = 0; k < t.steps; ++k) {
    for (int i = 0; i < t.dim_s; ++i) put(t.s[static_cast<size_t>(k) * t.dim_s + i]);
    for (int i = 0; i < t.dim_a; ++i) put(t.a[static_cast<size_t>(k) * t.dim_a + i]);
  }
  return out;
}

void write_file(const std::string& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  require(static_cast<bool>(f), "cannot write file: " + path);
  f.write(text.data(), static_cast<std::streamsize>(text.size()));
  require(static_cast<bool>(f), "short write: " + path);
}

void write_file(const std::string& path, const std::vector<unsigned char>& bytes) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  require(static_cast<bool>(f), "cannot write file: " + path);
  f.write(reinterpret_cast<const char*>(bytes.data()),
          static_cast<std::streamsize>(bytes.size()));
  require(static_cast<bool>(f), "short write: " + path);
}

std::string read_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  require(static_cast<bool>(f), "cannot read file: " + path);
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

size_t compressed_trajectory_size(const Trajectory& t) {
  return block_compressed_size(trajectory_text(t));
}

MeanCi mean_ci90(const std::vector<double>& xs) {
  MeanCi out;
  out.n = static_cast<int>(xs.size());
  if (xs.empty()) return out;
  double sum = 0.0;
  for (double x : xs) sum += x;
  out.mean = sum / static_cast<double>(xs.size());
  if (xs.size() < 2) return out;
  double ss = 0.0;
  for (double x : xs) ss += (x - out.mean) * (x - out.mean);
  const double sd = std::sqrt(ss / static_cast<double>(xs.size() - 1));
  out.se = sd / std::sqrt(static_cast<double>(xs.size()));
  out.ci90 = kZ90 * out.se;
  return out;
}

double t_step_prediction_nll(const std::vector<Trajectory>& data, int t_ahead,
                             uint64_t seed) {
  require(t_ahead >= 1, "prediction horizon must be positive");
  require(data.size() >= 2, "need at least two trajectories (train + held-out)");
  int dim_a = data.front().dim_a;
  for (const auto& t : data) {
    require(t.dim_a == dim_a, "trajectories disagree on action dimension");
    require(t.steps > t_ahead, "prediction horizon exceeds a trajectory length");
  }
  const size_t n_train = std::max<size_t>(1, (data.size() * 4) / 5);
  auto gather = [&](size_t lo, size_t hi, std::vector<double>& X, std::vector<double>& Y,
                    long long& rows) {
    for (size_t i = lo; i < hi; ++i) {
      const Trajectory& t = data[i];
      for (long long k = 0; k + t_ahead < t.steps; ++k) {
        for (int d = 0; d < dim_a; ++d)
          X.push_back(t.a[static_cast<size_t>(k) * dim_a + d]);
        for (int d = 0; d < dim_a; ++d)
          Y.push_back(t.a[static_cast<size_t>(k + t_ahead) * dim_a + d]);
        ++rows;
      }
    }
  };
  std::vector<double> xtr, ytr, xte, yte;
  long long ntr = 0, nte = 0;
  gather(0, n_train, xtr, ytr, ntr);
  gather(n_train, data.size(), xte, yte, nte);
  require(ntr > 0 && nte > 0, "insufficient data for the train/held-out split");

  // Small Gaussian regressor fit by maximum likelihood: two hidden layers of
  // width 64, diagonal Gaussian head, 2000 full-batch steps.
  RngStream init(seed, "predict/init");
  Mlp net({dim_a, 64, 64, 2 * dim_a}, init);
  ParamVec pv;
  net.collect("predict", pv);
  Adam opt(tensors_of(pv), 1e-3);
  Tensor X = Tensor::from({static_cast<int>(ntr), dim_a}, xtr);
  Tensor Y = Tensor::from({static_cast<int>(ntr), dim_a}, ytr);
  for (int it = 0; it < 2000; ++it) {
    Tape tape;
    Tensor head = net(X);
    Tensor mu = slice_cols(head, 0, dim_a);
    Tensor log_std = bound_log_std(slice_cols(head, dim_a, 2 * dim_a));
    Tensor loss = neg(mean(gauss_log_prob(Y, mu, log_std)));
    tape.backward(loss);
    opt.step();
  }
  Tensor Xt = Tensor::from({static_cast<int>(nte), dim_a}, xte);
  Tensor Yt = Tensor::from({static_cast<int>(nte), dim_a}, yte);
  Tensor head = net(Xt);
  Tensor mu = slice_cols(head, 0, dim_a);
  Tensor log_std = bound_log_std(slice_cols(head, dim_a, 2 * dim_a));
  return -mean(gauss_log_prob(Yt, mu, log_std)).item();
}

PerturbationConfig perturbation_for(const std::string& kind, double level) {
  PerturbationConfig p;
  if (kind == "obs") {
    require(level >= 0.0, "observation noise level must be >= 0");
    p.obs_noise = level;
  } else if (kind == "act") {
    require(level >= 0.0, "action noise level must be >= 0");
    p.act_noise = level;
  } else if (kind == "mass") {
    require(level > 0.0, "mass scale must be positive");
    p.mass_scale = level;
  } else if (kind == "distract") {
    const int n = static_cast<int>(level);
    require(level == static_cast<double>(n) && n >= 0,
            "distractor level must be a non-negative integer");
    p.distractors = n;
  } else {
    throw UsageError("unknown perturbation kind: '" + kind +
                     "' (expected obs, act, mass or distract)");
  }
  return p;
}

std::vector<SweepCell> robustness_sweep(const ModelSet& M, const std::string& env_id,
                                        const std::string& kind,
                                        const std::vector<double>& levels,
                                        const std::vector<uint64_t>& seeds,
                                        int episodes) {
  std::vector<SweepCell> cells;
  for (double level : levels) {
    for (uint64_t seed : seeds) {
      // Each cell builds its own environment chain from scratch, so cells are
      // independent of grid order; zero-strength settings add no wrapper and
      // therefore reproduce the plain environment exactly.
      std::unique_ptr<Env> env = make_env(env_id, seed, perturbation_for(kind, level), "eval");
      std::vector<double> rets;
      rets.reserve(static_cast<size_t>(episodes));
      for (int e = 0; e < episodes; ++e) rets.push_back(rollout_episode(*env, M).ret);
      MeanCi mc = mean_ci90(rets);
      SweepCell c;
      c.kind = kind;
      c.level = level;
      c.seed = seed;
      c.mean_return = mc.mean;
      c.ci90 = mc.ci90;
      c.episodes = episodes;
      cells.push_back(c);
    }
  }
  return cells;
}

double discounted_tc_estimate(const std::vector<double>& per_step, double gamma) {
  double acc = 0.0;
  double w = 1.0;
  for (double v : per_step) {
    acc += w * v;
    w *= gamma;
  }
  return acc;
}

MeanCi on_policy_mixed_bound(const ModelSet& M, Env& env, long long steps, int H,
                             double m, RngStream& enc_rng, RngStream& pi_rng) {
  require(M.regularized(), "the bound needs the predictor models (not a plain baseline)");
  require(H >= 1, "window length must be >= 1");
  require(steps >= H, "need at least one full window of steps");
  const EnvSpec sp = env.spec();
  const int ds = sp.obs_dim, da = sp.act_dim;

  // Collect consecutive disjoint windows: H+1 states and H stochastic policy
  // actions each, never crossing an episode boundary. Adjacent windows share
  // their endpoint state, so every environment step lands in exactly one
  // window.
  std::vector<std::vector<double>> win_s, win_u;  // per window, flattened
  std::vector<double> cur_s, cur_u;
  int cur_len = 0;
  std::vector<double> obs = env.reset();
  long long taken = 0;
  while (taken < steps) {
    if (cur_len == 0) {
      cur_s.assign(obs.begin(), obs.end());
      cur_u.clear();
    }
    Tensor s = Tensor::from({1, ds}, obs);
    PolicySample ps = policy_sample(M.policy, s, pi_rng);
    const auto& uv = ps.u.values();
    const auto& av = ps.a.values();
    StepOut o = env.step(std::vector<double>(av.begin(), av.end()));
    ++taken;
    cur_u.insert(cur_u.end(), uv.begin(), uv.end());
    cur_s.insert(cur_s.end(), o.obs.begin(), o.obs.end());
    ++cur_len;
    const bool ep_end = o.done || o.truncated;
    if (cur_len == H) {
      win_s.push_back(cur_s);
      win_u.push_back(cur_u);
      cur_len = 0;
    }
    if (ep_end) {
      obs = env.reset();
      cur_len = 0;
    } else {
      obs = o.obs;
      if (cur_len == 0) {
        // next window starts at the shared endpoint state
        cur_s.assign(obs.begin(), obs.end());
        cur_u.clear();
      }
    }
  }
  const int B = static_cast<int>(win_s.size());
  require(B > 0, "no complete windows collected");

  WindowBatch w;
  w.B = B;
  w.H = H;
  w.s.resize(static_cast<size_t>(H) + 1);
  w.a.resize(static_cast<size_t>(H));
  w.u.resize(static_cast<size_t>(H));
  for (int t = 0; t <= H; ++t) {
    std::vector<double> col(static_cast<size_t>(B) * ds);
    for (int b = 0; b < B; ++b)
      for (int i = 0; i < ds; ++i)
        col[static_cast<size_t>(b) * ds + i] = win_s[static_cast<size_t>(b)][static_cast<size_t>(t) * ds + i];
    w.s[static_cast<size_t>(t)] = Tensor::from({B, ds}, col);
  }
  for (int t = 0; t < H; ++t) {
    std::vector<double> ucol(static_cast<size_t>(B) * da), acol(static_cast<size_t>(B) * da);
    for (int b = 0; b < B; ++b)
      for (int i = 0; i < da; ++i) {
        const double u = win_u[static_cast<size_t>(b)][static_cast<size_t>(t) * da + i];
        ucol[static_cast<size_t>(b) * da + i] = u;
        acol[static_cast<size_t>(b) * da + i] = std::tanh(u);
      }
    w.u[static_cast<size_t>(t)] = Tensor::from({B, da}, ucol);
    w.a[static_cast<size_t>(t)] = Tensor::from({B, da}, acol);
  }
  w.r = Tensor::zeros({B, 1});
  w.d = Tensor::zeros({B, 1});

  BoundTerms bt = bound_terms(w, M, enc_rng);
  std::vector<double> per_window(static_cast<size_t>(B), 0.0);
  for (int t = 0; t < H; ++t) {
    const auto& cz = bt.c_z[static_cast<size_t>(t)].values();
    const auto& ca = bt.c_a[static_cast<size_t>(t)].values();
    for (int b = 0; b < B; ++b)
      per_window[static_cast<size_t>(b)] +=
          ((1.0 - m) * cz[static_cast<size_t>(b)] + m * ca[static_cast<size_t>(b)]) / H;
  }
  return mean_ci90(per_window);
}

std::vector<double> normalize_by_max(const std::vector<double>& xs) {
  std::vector<double> out(xs.size(), 0.0);
  if (xs.empty()) return out;
  double mx = xs[0];
  for (double x : xs) mx = std::max(mx, x);
  require(mx > 0.0, "size normalization needs a positive maximum");
  for (size_t i = 0; i < xs.size(); ++i) out[i] = xs[i] / mx;
  return out;
}

std::vector<double> normalize_scores(const std::vector<double>& xs) {
  std::vector<double> out(xs.size(), 0.0);
  if (xs.empty()) return out;
  double best = xs[0];
  for (double x : xs) best = std::max(best, x);
  for (size_t i = 0; i < xs.size(); ++i) {
    if (best > 0.0) {
      out[i] = xs[i] / best;
    } else if (best < 0.0) {
      // all-negative scores: best/score keeps 1.0 for the best entry and
      // ratios below 1 for worse ones (documented in the README)
      out[i] = (xs[i] == 0.0) ? 0.0 : best / xs[i];
    } else {
      out[i] = (xs[i] == 0.0) ? 1.0 : 0.0;
    }
  }
  return out;
}

}  // namespace mtc
