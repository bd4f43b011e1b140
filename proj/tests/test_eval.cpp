#include <cmath>
#include <cstring>
#include <string>
#include <vector>

#include "doctest.h"
#include "mtc/common.hpp"
#include "mtc/compress.hpp"
#include "mtc/eval.hpp"
#include "mtc/objective.hpp"
#include "mtc/rng.hpp"

using namespace mtc;

namespace {

Trajectory tiny_trajectory() {
  Trajectory t;
  t.env_id = "pendulum";
  t.dim_s = 2;
  t.dim_a = 1;
  t.steps = 2;
  t.s = {1.26, -0.5, 0.0, 3.14159};
  t.a = {0.5, -1.0};
  t.ret = -3.0;
  return t;
}

// actions follow a fixed scalar sequence; states are irrelevant filler
Trajectory action_trajectory(const std::vector<double>& actions) {
  Trajectory t;
  t.env_id = "synthetic";
  t.dim_s = 1;
  t.dim_a = 1;
  t.steps = static_cast<long long>(actions.size());
  t.s.assign(actions.size(), 0.0);
  t.a = actions;
  return t;
}

ModelConfig pendulum_config(Algo algo) {
  ModelConfig mc;
  mc.algo = algo;
  mc.obs_dim = 3;
  mc.act_dim = 1;
  mc.z_dim = 4;
  mc.width = 16;
  mc.gru_hidden = 8;
  mc.gru_out = 4;
  return mc;
}

void zero_net(Mlp& net) {
  for (auto& l : net.layers) {
    l.w.values_mut().assign(l.w.size(), 0.0);
    l.b.values_mut().assign(l.b.size(), 0.0);
  }
}

void zero_history(HistoryModel& hm) {
  for (Tensor* t : {&hm.cell.p.wx, &hm.cell.p.wh_ru, &hm.cell.p.wh_c, &hm.cell.p.b,
                    &hm.cell.p.wp, &hm.cell.p.bp})
    t->values_mut().assign(t->size(), 0.0);
  zero_net(hm.head);
}

}  // namespace

TEST_CASE("trajectory text round-trips through its fixed format") {
  const Trajectory t = tiny_trajectory();
  const std::string text = trajectory_text(t);
  CHECK(text ==
        "# env=pendulum dim_s=2 dim_a=1 steps=2 prec=1\n"
        "1.3,-0.5,0.5\n"
        "0.0,3.1,-1.0\n");

  const Trajectory back = parse_trajectory_text(text);
  CHECK(back.env_id == "pendulum");
  CHECK(back.dim_s == 2);
  CHECK(back.dim_a == 1);
  CHECK(back.steps == 2);
  CHECK(back.a == std::vector<double>{0.5, -1.0});
  CHECK(back.s[0] == 1.3);  // one decimal survives the encoding
  // re-rendering parsed values reproduces the text byte for byte
  CHECK(trajectory_text(back) == text);
}

TEST_CASE("trajectory text rejects malformed input") {
  CHECK_THROWS_AS(parse_trajectory_text(""), DataError);
  CHECK_THROWS_AS(parse_trajectory_text("no header\n1,2\n"), DataError);
  CHECK_THROWS_AS(
      parse_trajectory_text("# env=e dim_s=2 dim_a=1 steps=1 prec=2\n1.0,2.0,3.0\n"),
      DataError);
  // wrong field count
  CHECK_THROWS_AS(
      parse_trajectory_text("# env=e dim_s=2 dim_a=1 steps=1 prec=1\n1.0,2.0\n"),
      DataError);
  // row count disagrees with the header
  CHECK_THROWS_AS(
      parse_trajectory_text("# env=e dim_s=2 dim_a=1 steps=2 prec=1\n1.0,2.0,3.0\n"),
      DataError);
  Trajectory empty;
  CHECK_THROWS_AS(trajectory_text(empty), DataError);
}

TEST_CASE("binary trajectory dump is a raw little-endian f64 stream") {
  const Trajectory t = tiny_trajectory();
  const std::vector<unsigned char> bytes = trajectory_binary(t);
  REQUIRE(bytes.size() == size_t(t.steps) * (t.dim_s + t.dim_a) * sizeof(double));
  double v = 0;
  std::memcpy(&v, bytes.data(), sizeof(double));
  CHECK(v == 1.26);  // unrounded, unlike the text encoding
  std::memcpy(&v, bytes.data() + 2 * sizeof(double), sizeof(double));
  CHECK(v == 0.5);
}

TEST_CASE("score normalization keeps 1.0 for the best entry under both signs") {
  CHECK(normalize_scores({2.0, 4.0, 8.0}) == std::vector<double>{0.25, 0.5, 1.0});
  // all-negative: best/score preserves the ordering (higher score, higher value)
  CHECK(normalize_scores({-2.0, -4.0, -8.0}) == std::vector<double>{1.0, 0.5, 0.25});
  CHECK(normalize_scores({-1.0, 2.0}) == std::vector<double>{-0.5, 1.0});
  CHECK(normalize_scores({0.0, -3.0}) == std::vector<double>{1.0, 0.0});
  CHECK(normalize_scores({}).empty());

  const auto r = normalize_by_max({5.0, 10.0, 2.0});
  CHECK(r == std::vector<double>{0.5, 1.0, 0.2});
  for (double x : r) CHECK((x > 0.0 && x <= 1.0));
  CHECK_THROWS_AS(normalize_by_max({-1.0, -2.0}), DataError);
}

TEST_CASE("mean with 90% confidence half-width") {
  const MeanCi mc = mean_ci90({1.0, 2.0, 3.0, 4.0});
  CHECK(mc.n == 4);
  CHECK(mc.mean == doctest::Approx(2.5).epsilon(1e-15));
  const double se = std::sqrt(5.0 / 3.0) / 2.0;
  CHECK(mc.se == doctest::Approx(se).epsilon(1e-12));
  CHECK(mc.ci90 == doctest::Approx(1.6448536269514722 * se).epsilon(1e-12));

  const MeanCi empty = mean_ci90({});
  CHECK(empty.n == 0);
  CHECK(empty.mean == 0.0);
  const MeanCi one = mean_ci90({7.0});
  CHECK(one.mean == 7.0);
  CHECK(one.se == 0.0);
  CHECK(one.ci90 == 0.0);
}

TEST_CASE("discounted accumulation of per-step values") {
  CHECK(discounted_tc_estimate({}, 0.9) == 0.0);
  CHECK(discounted_tc_estimate({5.0, 100.0, 100.0}, 0.0) == 5.0);
  CHECK(discounted_tc_estimate({1.0, 2.0, 3.0}, 1.0) == 6.0);
  CHECK(discounted_tc_estimate({1.0, 2.0, 3.0}, 0.5) ==
        doctest::Approx(1.0 + 1.0 + 0.75).epsilon(1e-15));
}

TEST_CASE("action predictability separates constant from noise actions") {
  RngStream rng(31, "eval-nll");
  std::vector<Trajectory> constant, noisy;
  for (int i = 0; i < 5; ++i) {
    std::vector<double> ca(25, 0.3), na(25);
    for (auto& x : na) x = rng.uniform(-0.9, 0.9);
    constant.push_back(action_trajectory(ca));
    noisy.push_back(action_trajectory(na));
  }
  const double nll_const = t_step_prediction_nll(constant, 2, 7);
  const double nll_noise = t_step_prediction_nll(noisy, 2, 7);
  INFO("constant " << nll_const << ", noise " << nll_noise);
  CHECK(std::isfinite(nll_const));
  CHECK(std::isfinite(nll_noise));
  CHECK(nll_const + 1.0 < nll_noise);
  CHECK(nll_const < 0.0);  // a constant action is predictable to high density

  // duplicating every row (train and held-out) leaves the estimate unchanged
  std::vector<Trajectory> dup;
  for (int r = 0; r < 2; ++r)
    for (int i = 0; i < 4; ++i) dup.push_back(noisy[size_t(i)]);
  dup.push_back(noisy[4]);
  dup.push_back(noisy[4]);
  const double nll_dup = t_step_prediction_nll(dup, 2, 7);
  CHECK(nll_dup == doctest::Approx(nll_noise).epsilon(1e-3));

  CHECK_THROWS_AS(t_step_prediction_nll(noisy, 0, 7), DataError);
  CHECK_THROWS_AS(t_step_prediction_nll({noisy[0]}, 2, 7), DataError);
  CHECK_THROWS_AS(t_step_prediction_nll(noisy, 25, 7), DataError);
}

TEST_CASE("perturbation grids map kinds to wrapper settings") {
  CHECK(perturbation_for("obs", 0.3).obs_noise == 0.3);
  CHECK(perturbation_for("act", 0.2).act_noise == 0.2);
  CHECK(perturbation_for("mass", 1.5).mass_scale == 1.5);
  CHECK(perturbation_for("distract", 4.0).distractors == 4);
  CHECK_THROWS_AS(perturbation_for("mass", 0.0), DataError);
  CHECK_THROWS_AS(perturbation_for("obs", -0.1), DataError);
  CHECK_THROWS_AS(perturbation_for("distract", 1.5), DataError);
  CHECK_THROWS_AS(perturbation_for("gravity", 1.0), UsageError);
}

TEST_CASE("a zero-strength sweep cell equals the plain environment exactly") {
  ModelSet M(pendulum_config(Algo::sac), 77);
  const std::vector<SweepCell> cells =
      robustness_sweep(M, "pendulum", "obs", {0.0, 0.25}, {3}, 2);
  REQUIRE(cells.size() == 2);
  CHECK(cells[0].kind == "obs");
  CHECK(cells[0].level == 0.0);
  CHECK(cells[0].seed == 3);
  CHECK(cells[0].episodes == 2);

  // the same two episodes, rolled by hand on the unwrapped environment
  auto env = make_env("pendulum", 3, "eval");
  std::vector<double> rets;
  for (int e = 0; e < 2; ++e) rets.push_back(rollout_episode(*env, M).ret);
  const MeanCi mc = mean_ci90(rets);
  CHECK(cells[0].mean_return == mc.mean);
  CHECK(cells[0].ci90 == mc.ci90);
  CHECK(cells[1].mean_return != cells[0].mean_return);

  // grid order does not matter: cells are rebuilt from scratch
  const std::vector<SweepCell> swapped =
      robustness_sweep(M, "pendulum", "obs", {0.25, 0.0}, {3}, 2);
  CHECK(swapped[1].mean_return == cells[0].mean_return);
  CHECK(swapped[0].mean_return == cells[1].mean_return);
}

TEST_CASE("on-policy bound estimation batches disjoint windows") {
  ModelSet M(pendulum_config(Algo::mtc), 91);
  auto env = make_env("pendulum", 5, "eval");
  RngStream enc(6, "enc"), pi(7, "pi");
  const MeanCi a = on_policy_mixed_bound(M, *env, 53, 5, 0.5, enc, pi);
  CHECK(a.n == 10);  // floor(53 / 5) complete windows, no episode ends
  CHECK(std::isfinite(a.mean));

  // fresh identical streams reproduce the estimate bitwise
  auto env2 = make_env("pendulum", 5, "eval");
  RngStream enc2(6, "enc"), pi2(7, "pi");
  const MeanCi b = on_policy_mixed_bound(M, *env2, 53, 5, 0.5, enc2, pi2);
  CHECK(a.mean == b.mean);
  CHECK(a.se == b.se);

  ModelSet S(pendulum_config(Algo::sac), 91);
  auto env3 = make_env("pendulum", 5, "eval");
  CHECK_THROWS_AS(on_policy_mixed_bound(S, *env3, 53, 5, 0.5, enc, pi), DataError);
  CHECK_THROWS_AS(on_policy_mixed_bound(M, *env3, 53, 0, 0.5, enc, pi), DataError);
  CHECK_THROWS_AS(on_policy_mixed_bound(M, *env3, 3, 5, 0.5, enc, pi), DataError);
}

TEST_CASE("identical predictors give an exactly zero on-policy bound") {
  ModelSet M(pendulum_config(Algo::mtc), 13);
  zero_net(M.policy.net);
  zero_net(M.encoder.net);
  zero_history(M.dyn);
  zero_history(M.act_pred);
  auto env = make_env("pendulum", 9, "eval");
  RngStream enc(10, "enc"), pi(11, "pi");
  const MeanCi mc = on_policy_mixed_bound(M, *env, 24, 4, 0.3, enc, pi);
  CHECK(mc.n == 6);
  CHECK(mc.mean == 0.0);
  CHECK(mc.se == 0.0);
}

TEST_CASE("trajectory compressibility reflects action structure") {
  RngStream rng(41, "eval-compress");
  std::vector<double> ca(400, 0.5), na(400);
  for (auto& x : na) x = rng.uniform(-1, 1);
  const Trajectory tc = action_trajectory(ca), tn = action_trajectory(na);
  CHECK(compressed_trajectory_size(tc) == block_compressed_size(trajectory_text(tc)));
  CHECK(compressed_trajectory_size(tc) < compressed_trajectory_size(tn));
}

TEST_CASE("architecture mismatches are refused at rollout time") {
  ModelConfig mc = pendulum_config(Algo::sac);
  mc.obs_dim = 5;  // pointmass shape, not pendulum
  ModelSet M(mc, 1);
  auto env = make_env("pendulum", 1, "eval");
  CHECK_THROWS_AS(rollout_episode(*env, M), DataError);
}
