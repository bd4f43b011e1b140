#include <cmath>
#include <cstring>
#include <vector>

#include "doctest.h"
#include "mtc/gaussian.hpp"
#include "mtc/models.hpp"
#include "mtc/rng.hpp"

using namespace mtc;

namespace {

size_t param_count(const ParamVec& pv) {
  size_t n = 0;
  for (const auto& [name, t] : pv) n += t.size();
  return n;
}

size_t mlp_count(const std::vector<int>& dims) {
  size_t n = 0;
  for (size_t i = 0; i + 1 < dims.size(); ++i)
    n += size_t(dims[i]) * dims[i + 1] + dims[i + 1];
  return n;
}

Tensor tile_row(const std::vector<double>& row, int n) {
  std::vector<double> v;
  v.reserve(row.size() * size_t(n));
  for (int i = 0; i < n; ++i) v.insert(v.end(), row.begin(), row.end());
  return Tensor::from({n, int(row.size())}, v);
}

}  // namespace

TEST_CASE("log-std head output stays strictly inside its interval") {
  Tensor raw = Tensor::from({1, 5}, {-100.0, -1.0, 0.0, 1.0, 100.0});
  Tensor b = bound_log_std(raw);
  for (double v : b.values()) {
    CHECK(v >= kLogStdLo);
    CHECK(v <= kLogStdHi);
  }
  // monotone in the raw input, midpoint at zero
  const auto& v = b.values();
  for (size_t i = 0; i + 1 < v.size(); ++i) CHECK(v[i] < v[i + 1]);
  CHECK(v[2] == doctest::Approx(0.5 * (kLogStdLo + kLogStdHi)));
  CHECK(v[0] == doctest::Approx(kLogStdLo).epsilon(1e-6));
  CHECK(v[4] == doctest::Approx(kLogStdHi).epsilon(1e-6));
}

TEST_CASE("squashed policy density integrates to one over the action interval") {
  RngStream init(301, "test/policy-int");
  Policy pi(3, 1, 32, init);
  const std::vector<double> s_row{0.4, -0.7, 1.1};

  DiagGaussian d = pi.dist(tile_row(s_row, 1));
  const double mu = d.mean.values()[0];
  const double sigma = std::exp(d.log_std.values()[0]);

  const int N = 60001;
  const double lo = mu - 12 * sigma, hi = mu + 12 * sigma;
  std::vector<double> u(N), a(N);
  for (int i = 0; i < N; ++i) {
    u[i] = lo + (hi - lo) * i / (N - 1);
    a[i] = std::tanh(u[i]);
  }
  Tensor S = tile_row(s_row, N);
  Tensor U = Tensor::from({N, 1}, u);
  Tensor lp = policy_log_prob(pi, S, U);
  const auto& l = lp.values();
  REQUIRE(int(l.size()) == N);

  // trapezoid quadrature of exp(log prob) over the (non-uniform) action grid
  double integral = 0.0;
  for (int i = 0; i + 1 < N; ++i)
    integral += 0.5 * (std::exp(l[i]) + std::exp(l[i + 1])) * (a[i + 1] - a[i]);
  CHECK(integral == doctest::Approx(1.0).epsilon(0.02));
}

TEST_CASE("policy samples stay strictly inside the open action interval") {
  RngStream init(302, "test/policy-range");
  Policy pi(4, 2, 32, init);
  RngStream rng(303, "test/policy-range-draws");
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> s(4);
    for (auto& x : s) x = rng.uniform(-5, 5);
    PolicySample ps = policy_sample(pi, tile_row(s, 3), rng);
    for (double ai : ps.a.values()) {
      CHECK(ai > -1.0);
      CHECK(ai < 1.0);
    }
    // the sample's log prob matches the standalone evaluation at its own u
    Tensor lp = policy_log_prob(pi, tile_row(s, 3), ps.u);
    for (int i = 0; i < 3; ++i)
      CHECK(lp.values()[i] == doctest::Approx(ps.log_prob.values()[i]).epsilon(1e-10));
  }
}

TEST_CASE("gaussian density and squash correction at the origin") {
  CHECK(kHalfLog2Pi == doctest::Approx(0.5 * std::log(8.0 * std::atan(1.0))).epsilon(1e-15));
  Tensor zero = Tensor::from({1, 1}, {0.0});
  CHECK(gauss_log_prob(zero, zero, zero).item() ==
        doctest::Approx(-0.9189385332046727).epsilon(1e-12));
  CHECK(tanh_log_det(zero).item() == doctest::Approx(0.0));
  // log prob of the mean: -sum(log_std) - (d/2) log(2 pi)
  Tensor m = Tensor::from({1, 3}, {0.3, -0.8, 2.0});
  Tensor ls = Tensor::from({1, 3}, {-0.5, 0.2, 1.0});
  const double want = -(-0.5 + 0.2 + 1.0) - 3 * 0.9189385332046727;
  CHECK(gauss_log_prob(m, m, ls).item() == doctest::Approx(want).epsilon(1e-12));
}

TEST_CASE("kl divergence between diagonal gaussians") {
  SUBCASE("pinned scalar values") {
    CHECK(gauss_kl({0}, {1}, {0}, {1}) == doctest::Approx(0.0));
    CHECK(gauss_kl({1}, {1}, {0}, {1}) == doctest::Approx(0.5).epsilon(1e-12));
    const double e = std::exp(1.0);
    CHECK(gauss_kl({0}, {std::sqrt(e)}, {0}, {1}) ==
          doctest::Approx(0.5 * (e - 2.0)).epsilon(1e-12));
  }
  SUBCASE("tensor and scalar implementations agree on random batches") {
    RngStream rng(304, "test/kl");
    const int B = 6, d = 4;
    std::vector<double> m0(B * d), l0(B * d), m1(B * d), l1(B * d);
    for (int i = 0; i < B * d; ++i) {
      m0[i] = rng.uniform(-2, 2);
      l0[i] = rng.uniform(-1, 0.5);
      m1[i] = rng.uniform(-2, 2);
      l1[i] = rng.uniform(-1, 0.5);
    }
    DiagGaussian p{Tensor::from({B, d}, m0), Tensor::from({B, d}, l0)};
    DiagGaussian q{Tensor::from({B, d}, m1), Tensor::from({B, d}, l1)};
    Tensor kl = kl_diag(p, q);
    REQUIRE(kl.rows() == B);
    for (int b = 0; b < B; ++b) {
      std::vector<double> mm0(d), ss0(d), mm1(d), ss1(d);
      for (int j = 0; j < d; ++j) {
        mm0[j] = m0[b * d + j];
        ss0[j] = std::exp(l0[b * d + j]);
        mm1[j] = m1[b * d + j];
        ss1[j] = std::exp(l1[b * d + j]);
      }
      CHECK(kl.values()[b] ==
            doctest::Approx(gauss_kl(mm0, ss0, mm1, ss1)).epsilon(1e-10));
    }
  }
  SUBCASE("monte carlo estimate confirms the analytic value") {
    const std::vector<double> m0{0.5, -1.0}, s0{0.8, 1.3}, m1{0.0, 0.2}, s1{1.1, 0.6};
    const double analytic = gauss_kl(m0, s0, m1, s1);
    RngStream rng(305, "test/kl-mc");
    const int N = 200000;
    double acc = 0, acc2 = 0;
    for (int i = 0; i < N; ++i) {
      double lr = 0;
      for (int j = 0; j < 2; ++j) {
        const double z = m0[j] + s0[j] * rng.normal();
        const double lp = -0.5 * ((z - m0[j]) / s0[j]) * ((z - m0[j]) / s0[j]) -
                          std::log(s0[j]);
        const double lq = -0.5 * ((z - m1[j]) / s1[j]) * ((z - m1[j]) / s1[j]) -
                          std::log(s1[j]);
        lr += lp - lq;
      }
      acc += lr;
      acc2 += lr * lr;
    }
    const double mc = acc / N;
    const double se = std::sqrt((acc2 / N - mc * mc) / N);
    CHECK(std::fabs(mc - analytic) <=
          std::max(3 * se, 0.01 * std::fabs(analytic)));
  }
}

TEST_CASE("reparameterized sampling is differentiable with the identity mean gradient") {
  Tensor mean = Tensor::param({2, 3}, {0.1, -0.2, 0.3, 0.4, -0.5, 0.6});
  Tensor log_std = Tensor::param({2, 3}, {-1.0, 0.0, 0.5, -0.3, 0.2, -2.0});
  RngStream rng(306, "test/reparam");
  Tape tape;
  Tensor z = reparam_sample({mean, log_std}, rng);
  tape.backward(sum(z));
  for (double g : mean.grad()) CHECK(g == doctest::Approx(1.0));
  // d z / d log_std = (z - mean) elementwise
  for (size_t i = 0; i < log_std.grad().size(); ++i) {
    const double want = z.values()[i] - mean.values()[i];
    CHECK(log_std.grad()[i] == doctest::Approx(want).epsilon(1e-10));
  }
}

TEST_CASE("history model reacts to input order and carries gradients at step one") {
  RngStream init(307, "test/history");
  HistoryModel hm(3, 2, 8, 4, 16, true, init);
  RngStream rng(308, "test/history-x");
  std::vector<double> x1v(2 * 3), x2v(2 * 3);
  for (auto& v : x1v) v = rng.uniform(-1, 1);
  for (auto& v : x2v) v = rng.uniform(-1, 1);
  Tensor x1 = Tensor::from({2, 3}, x1v), x2 = Tensor::from({2, 3}, x2v);

  auto run = [&](const Tensor& a, const Tensor& b) {
    Tensor h = hm.init_state(2);
    auto [d1, h1] = hm.step(a, h);
    auto [d2, h2] = hm.step(b, h1);
    return d2.mean.values();
  };
  auto fwd = run(x1, x2), rev = run(x2, x1);
  double diff = 0;
  for (size_t i = 0; i < fwd.size(); ++i) diff += std::fabs(fwd[i] - rev[i]);
  CHECK(diff > 1e-6);  // order matters

  // gradient reaches the recurrent cell parameters after a single step
  Tape tape;
  Tensor h = hm.init_state(2);
  auto [d, hn] = hm.step(x1, h);
  tape.backward(add(sum(d.mean), sum(hn)));
  double gnorm = 0;
  for (double g : hm.cell.p.wx.grad()) gnorm += g * g;
  CHECK(gnorm > 0.0);
}

TEST_CASE("soft target updates interpolate parameters") {
  RngStream r1(309, "test/soft-a"), r2(310, "test/soft-b");
  Linear net(4, 3, r1), tgt(4, 3, r2);
  ParamVec pn, pt;
  net.collect("n", pn);
  tgt.collect("t", pt);
  const auto w0 = tgt.w.values();

  soft_update(pn, pt, 0.0);
  CHECK(std::memcmp(tgt.w.values().data(), w0.data(), w0.size() * sizeof(double)) == 0);

  soft_update(pn, pt, 0.25);
  for (size_t i = 0; i < w0.size(); ++i)
    CHECK(tgt.w.values()[i] ==
          doctest::Approx(0.75 * w0[i] + 0.25 * net.w.values()[i]).epsilon(1e-12));

  soft_update(pn, pt, 1.0);
  CHECK(std::memcmp(tgt.w.values().data(), net.w.values().data(),
                    w0.size() * sizeof(double)) == 0);
}

TEST_CASE("model set architecture per training mode") {
  ModelConfig mc;
  mc.obs_dim = 3;
  mc.act_dim = 2;
  mc.z_dim = 5;
  mc.width = 16;
  mc.gru_hidden = 8;
  mc.gru_out = 4;

  SUBCASE("module presence matrix") {
    mc.algo = Algo::mtc;
    ModelSet a(mc, 1);
    CHECK(a.has_encoder());
    CHECK(a.has_dyn());
    CHECK(a.has_act_pred());
    CHECK_FALSE(a.has_one_step());
    CHECK(a.regularized());

    mc.algo = Algo::mtc_noa;
    ModelSet b(mc, 1);
    CHECK(b.has_encoder());
    CHECK(b.has_dyn());
    CHECK_FALSE(b.has_act_pred());
    CHECK(param_count(b.act_pred_params()) == 0);

    mc.algo = Algo::rpc;
    ModelSet c(mc, 1);
    CHECK(c.has_encoder());
    CHECK_FALSE(c.has_dyn());
    CHECK(c.has_one_step());
    CHECK(param_count(c.dyn_params()) > 0);  // the one-step model fills this group

    mc.algo = Algo::sac;
    ModelSet d(mc, 1);
    CHECK_FALSE(d.has_encoder());
    CHECK_FALSE(d.has_dyn());
    CHECK_FALSE(d.has_act_pred());
    CHECK_FALSE(d.regularized());
    CHECK(d.alpha() == 0.0);
    CHECK(param_count(d.encoder_params()) == 0);
    CHECK(param_count(d.dyn_params()) == 0);
  }

  SUBCASE("parameter counts match the layer dimensions") {
    mc.algo = Algo::mtc;
    ModelSet m(mc, 7);
    CHECK(param_count(m.policy_params()) == mlp_count({3, 16, 16, 2 * 2}));
    CHECK(param_count(m.encoder_params()) == mlp_count({3, 16, 16, 2 * 5}));
    CHECK(param_count(m.critic_params()) == 2 * mlp_count({3 + 2, 16, 16, 1}));
    CHECK(param_count(m.target_params()) == param_count(m.critic_params()));
    // recurrent predictor: cell (in=z+a) + layer norm + head
    const size_t in = 5 + 2, gh = 8, go = 4;
    const size_t cell = in * 3 * gh + gh * 2 * gh + gh * gh + 3 * gh + gh * go + go;
    CHECK(param_count(m.dyn_params()) == cell + 2 * go + mlp_count({4, 16, 16, 2 * 5}));
    CHECK(param_count(m.act_pred_params()) ==
          cell + 2 * go + mlp_count({4, 16, 16, 2 * 2}));

    mc.algo = Algo::rpc;
    ModelSet r(mc, 7);
    CHECK(param_count(r.dyn_params()) == mlp_count({5 + 2, 16, 16, 2 * 5}));
  }

  SUBCASE("targets start as exact copies of the online critics and never require grad") {
    mc.algo = Algo::sac;
    ModelSet m(mc, 11);
    ParamVec on = m.critic_params();
    ParamVec tg = m.target_params();
    REQUIRE(on.size() == tg.size());
    for (size_t i = 0; i < on.size(); ++i) {
      CHECK(std::memcmp(on[i].second.values().data(), tg[i].second.values().data(),
                        on[i].second.size() * sizeof(double)) == 0);
      CHECK(on[i].second.requires_grad());
      CHECK_FALSE(tg[i].second.requires_grad());
    }
  }

  SUBCASE("encoder produces bounded log-stds and temperature accessors are consistent") {
    mc.algo = Algo::mtc;
    mc.init_temperature = 0.2;
    mc.alpha_init = 1e-3;
    ModelSet m(mc, 3);
    DiagGaussian z = m.encoder(Tensor::from({2, 3}, {0.1, 0.2, 0.3, -1, 2, 0}));
    CHECK(z.mean.rows() == 2);
    CHECK(z.mean.cols() == 5);
    for (double v : z.log_std.values()) {
      CHECK(v >= kLogStdLo);
      CHECK(v <= kLogStdHi);
    }
    CHECK(m.alpha() == doctest::Approx(1e-3));
    CHECK(m.temperature() == doctest::Approx(0.2));
    CHECK(m.critic_entropy_coef() == doctest::Approx(0.2 - 1e-3));
    mc.algo = Algo::sac;
    ModelSet s(mc, 3);
    CHECK(s.critic_entropy_coef() == doctest::Approx(0.2));
  }

  SUBCASE("checkpoint save and load restore every parameter and the duals") {
    mc.algo = Algo::mtc;
    ModelSet m(mc, 5);
    m.log_alpha = -3.25;
    m.log_temp = -1.5;
    ckpt::Map out;
    m.save(out);
    ModelConfig back = ModelSet::config_from_checkpoint(out);
    CHECK(back.algo == Algo::mtc);
    CHECK(back.obs_dim == 3);
    CHECK(back.act_dim == 2);
    CHECK(back.z_dim == 5);
    CHECK(back.width == 16);
    CHECK(back.gru_hidden == 8);
    CHECK(back.gru_out == 4);

    ModelSet m2(back, 99);  // different seed: different init before loading
    m2.load(out);
    CHECK(m2.log_alpha == -3.25);
    CHECK(m2.log_temp == -1.5);
    ParamVec a = m.policy_params(), b = m2.policy_params();
    for (size_t i = 0; i < a.size(); ++i)
      CHECK(std::memcmp(a[i].second.values().data(), b[i].second.values().data(),
                        a[i].second.size() * sizeof(double)) == 0);
  }
}

TEST_CASE("training mode names parse and print") {
  CHECK(algo_from_string("mtc") == Algo::mtc);
  CHECK(algo_from_string("mtc-noa") == Algo::mtc_noa);
  CHECK(algo_from_string("rpc") == Algo::rpc);
  CHECK(algo_from_string("sac") == Algo::sac);
  CHECK(to_string(Algo::mtc_noa) == "mtc-noa");
  CHECK_THROWS_AS(algo_from_string("ppo"), UsageError);
}
