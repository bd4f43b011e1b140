#include <cmath>
#include <vector>

#include "doctest.h"
#include "mtc/common.hpp"
#include "mtc/env.hpp"
#include "mtc/rng.hpp"

using namespace mtc;

namespace {

std::vector<std::vector<double>> random_actions(int n, int dim, uint64_t seed) {
  RngStream rng(seed, "test/env-actions");
  std::vector<std::vector<double>> out(n, std::vector<double>(dim));
  for (auto& a : out)
    for (auto& x : a) x = rng.uniform(-1, 1);
  return out;
}

double pendulum_energy(const std::vector<double>& obs) {
  // E = kinetic + potential with the angle measured from the upright position:
  // 0.5*thd^2 + g*cos(theta), m = l = 1, g = 10
  return 0.5 * obs[2] * obs[2] + 10.0 * obs[0];
}

}  // namespace

TEST_CASE("environment registry") {
  CHECK(env_ids() == std::vector<std::string>{"pendulum", "pointmass", "massspring"});
  CHECK_THROWS_AS(make_env("cartpole", 1), UsageError);

  auto p = make_env("pendulum", 1);
  CHECK(p->spec().obs_dim == 3);
  CHECK(p->spec().act_dim == 1);
  CHECK(p->spec().horizon == 1000);
  auto m = make_env("pointmass", 1);
  CHECK(m->spec().obs_dim == 4);
  CHECK(m->spec().act_dim == 2);
  auto s = make_env("massspring", 1);
  CHECK(s->spec().obs_dim == 3);
  CHECK(s->spec().act_dim == 1);
}

TEST_CASE("pendulum holds its stable equilibrium under zero torque") {
  // the freshly constructed system hangs at rest; without torque it must stay
  auto env = make_env("pendulum", 42);
  std::vector<double> obs;
  for (int t = 0; t < 200; ++t) obs = env->step({0.0}).obs;
  CHECK(std::fabs(obs[0] - (-1.0)) < 1e-10);  // cos(theta) = -1: hanging
  CHECK(std::fabs(obs[1]) < 1e-10);
  CHECK(std::fabs(obs[2]) < 1e-10);
}

TEST_CASE("pendulum energy drift without torque stays below the tolerance") {
  // seed picked so the reset lands on the hanging side, away from the
  // separatrix where the integrator error is at its worst
  auto env = make_env("pendulum", 10, "test");
  std::vector<double> obs = env->reset();
  const double E0 = pendulum_energy(obs);
  REQUIRE(obs[0] < -0.5);  // hanging-side start
  const int N = 1000;
  for (int t = 0; t < N; ++t) {
    obs = env->step({0.0}).obs;
    CHECK(std::isfinite(pendulum_energy(obs)));
  }
  const double drift_per_step = std::fabs(pendulum_energy(obs) - E0) / N;
  INFO("amortized energy drift per step: " << drift_per_step);
  CHECK(drift_per_step <= 1e-3);
}

TEST_CASE("pendulum reward matches its quadratic penalty and peaks at zero") {
  auto env = make_env("pendulum", 7, "test");
  std::vector<double> prev = env->reset();
  auto actions = random_actions(300, 1, 77);
  for (const auto& a : actions) {
    StepOut o = env->step(a);
    const double th = std::atan2(prev[1], prev[0]);
    const double want = -(th * th + 0.1 * prev[2] * prev[2] + 0.001 * a[0] * a[0]);
    CHECK(o.reward == doctest::Approx(want).epsilon(1e-12));
    CHECK(o.reward <= 0.0);  // the maximum 0 is attained only upright at rest
    prev = o.obs;
  }
}

TEST_CASE("point mass at the goal with zero velocity and zero action stays put") {
  auto env = make_env("pointmass", 3);
  for (int t = 0; t < 50; ++t) {
    StepOut o = env->step({0.0, 0.0});
    for (double x : o.obs) CHECK(x == 0.0);
    CHECK(o.reward == 0.0);  // maximal reward at the goal
  }
}

TEST_CASE("mass-spring oscillation decays under zero force") {
  auto env = make_env("massspring", 5, "test");
  std::vector<double> obs = env->reset();
  REQUIRE(std::fabs(obs[0]) > 0.5);
  std::vector<double> xs{obs[0]};
  for (int t = 0; t < 1000; ++t) xs.push_back(env->step({0.0}).obs[0]);

  std::vector<double> peaks;
  for (size_t i = 1; i + 1 < xs.size(); ++i) {
    const double m = std::fabs(xs[i]);
    if (m > std::fabs(xs[i - 1]) && m >= std::fabs(xs[i + 1]) && m > 0.05)
      peaks.push_back(m);
  }
  REQUIRE(peaks.size() >= 6);
  for (size_t i = 1; i < peaks.size(); ++i) CHECK(peaks[i] < peaks[i - 1]);
}

TEST_CASE("mass scaling changes exactly the inertial response") {
  SUBCASE("pendulum: gravity term unchanged, torque term halved at k=2") {
    auto plain = make_env("pendulum", 9, "test");
    auto heavy = wrap_mass_scale(make_env("pendulum", 9, "test"), 2.0);
    auto o1 = plain->reset(), o2 = heavy->reset();
    REQUIRE(o1 == o2);  // same stream, same start

    // zero torque: gravity only, independent of mass -> identical step
    StepOut g1 = plain->step({0.0}), g2 = heavy->step({0.0});
    CHECK(g1.obs == g2.obs);

    // full torque: velocity gain differs by dt * tau_max/2 (tau_max = 2)
    StepOut t1 = plain->step({1.0}), t2 = heavy->step({1.0});
    CHECK(t1.obs[2] - t2.obs[2] == doctest::Approx(0.05 * 1.0).epsilon(1e-10));
  }
  SUBCASE("point mass: acceleration halves at k=2") {
    auto plain = make_env("pointmass", 9, "test");
    auto heavy = wrap_mass_scale(make_env("pointmass", 9, "test"), 2.0);
    auto o1 = plain->reset(), o2 = heavy->reset();
    REQUIRE(o1 == o2);
    StepOut s1 = plain->step({1.0, -0.5}), s2 = heavy->step({1.0, -0.5});
    const double dv1 = s1.obs[2] - o1[2], dv2 = s2.obs[2] - o2[2];
    CHECK(dv1 == doctest::Approx(2.0 * dv2).epsilon(1e-10));
  }
  SUBCASE("k=1 is bit-identical to the unwrapped system") {
    auto plain = make_env("massspring", 11, "test");
    auto wrapped = wrap_mass_scale(make_env("massspring", 11, "test"), 1.0);
    auto a = plain->reset(), b = wrapped->reset();
    CHECK(a == b);
    for (const auto& act : random_actions(200, 1, 78)) {
      StepOut s1 = plain->step(act), s2 = wrapped->step(act);
      CHECK(s1.obs == s2.obs);
      CHECK(s1.reward == s2.reward);
    }
  }
  SUBCASE("nonpositive scale is rejected") {
    CHECK_THROWS_AS(wrap_mass_scale(make_env("pendulum", 1), 0.0), DataError);
    auto env = make_env("pendulum", 1);
    CHECK_THROWS_AS(env->set_mass_scale(-1.0), DataError);
  }
}

TEST_CASE("zero-sigma noise wrappers are exact identities") {
  auto plain = make_env("pendulum", 13, "test");
  auto wrapped = wrap_obs_noise(
      wrap_action_noise(make_env("pendulum", 13, "test"), 0.0,
                        RngStream(13, "wrap/act_noise/test")),
      0.0, RngStream(13, "wrap/obs_noise/test"));
  CHECK(plain->reset() == wrapped->reset());
  for (const auto& act : random_actions(300, 1, 79)) {
    StepOut a = plain->step(act), b = wrapped->step(act);
    CHECK(a.obs == b.obs);
    CHECK(a.reward == b.reward);
  }
}

TEST_CASE("observation noise is unbiased and never touches the reward") {
  const double sigma = 0.1;
  const int N = 100000;
  auto plain = make_env("pendulum", 17, "test");
  auto noisy = wrap_obs_noise(make_env("pendulum", 17, "test"), sigma,
                              RngStream(17, "wrap/obs_noise/test"));
  auto p0 = plain->reset();
  auto n0 = noisy->reset();
  REQUIRE(p0.size() == n0.size());

  std::vector<double> mean(3, 0.0), var(3, 0.0);
  for (int t = 0; t < N; ++t) {
    StepOut a = plain->step({0.0}), b = noisy->step({0.0});
    CHECK(a.reward == b.reward);  // reward computed from the true state
    for (int j = 0; j < 3; ++j) {
      const double e = b.obs[j] - a.obs[j];
      mean[j] += e;
      var[j] += e * e;
    }
  }
  for (int j = 0; j < 3; ++j) {
    mean[j] /= N;
    var[j] = var[j] / N - mean[j] * mean[j];
    CHECK(std::fabs(mean[j]) <= 3 * sigma / std::sqrt(double(N)));
    CHECK(var[j] == doctest::Approx(sigma * sigma).epsilon(0.05));
  }
}

TEST_CASE("action noise is censored at the bounds") {
  // recover the executed action from the velocity update of the point mass:
  // dv = dt*(a_exec - c*v)/m  =>  a_exec = dv/dt + c*v
  const double sigma = 0.5;
  const int N = 20000;
  auto env = wrap_action_noise(make_env("pointmass", 19, "test"), sigma,
                               RngStream(19, "wrap/act_noise/test"));
  std::vector<double> prev = env->reset();
  int censored = 0;
  for (int t = 0; t < N; ++t) {
    StepOut o = env->step({1.0, 1.0});  // commanded at the boundary
    const double a_exec = (o.obs[2] - prev[2]) / 0.05 + 0.5 * prev[2];
    CHECK(a_exec <= 1.0 + 1e-9);
    CHECK(a_exec >= -1.0 - 1e-9);
    if (a_exec > 1.0 - 1e-9) ++censored;
    prev = o.obs;
  }
  // clip(1 + eps) == 1 exactly when eps >= 0: probability one half
  const double frac = double(censored) / N;
  CHECK(std::fabs(frac - 0.5) <= 3 * std::sqrt(0.25 / N));
}

TEST_CASE("distractor dimensions are uncontrollable and reward-independent") {
  const int n = 4;
  auto env = wrap_distractors(make_env("pendulum", 23, "test"), n, 0.9, 0.3,
                              RngStream(23, "wrap/distract/test"));
  CHECK(env->spec().obs_dim == 3 + n);
  auto obs = env->reset();
  REQUIRE(int(obs.size()) == 3 + n);

  const int N = 100000;
  auto actions = random_actions(N, 1, 80);
  std::vector<double> xr(n, 0.0), xm(n, 0.0), xv(n, 0.0);
  double rm = 0.0, rv = 0.0;
  std::vector<std::vector<double>> xs(n);
  std::vector<double> rs;
  for (int t = 0; t < N; ++t) {
    StepOut o = env->step(actions[t]);
    for (int j = 0; j < n; ++j) xs[j].push_back(o.obs[3 + j]);
    rs.push_back(o.reward);
  }
  for (double r : rs) rm += r;
  rm /= N;
  for (double r : rs) rv += (r - rm) * (r - rm);
  rv /= N;
  for (int j = 0; j < n; ++j) {
    for (int t = 0; t < N; ++t) xm[j] += xs[j][t];
    xm[j] /= N;
    for (int t = 0; t < N; ++t) {
      xv[j] += (xs[j][t] - xm[j]) * (xs[j][t] - xm[j]);
      xr[j] += (xs[j][t] - xm[j]) * (rs[t] - rm);
    }
    xv[j] /= N;
    xr[j] /= N;
    const double corr = xr[j] / std::sqrt(xv[j] * rv);
    INFO("distractor " << j << " reward correlation " << corr);
    // AR(0.9) samples are serially correlated: effective sample size is
    // N*(1-rho)/(1+rho) ~ N/19, widening the null band accordingly
    CHECK(std::fabs(corr) <= 3 * std::sqrt(19.0 / N));
    // stationary variance sigma^2/(1-rho^2) = 0.09/0.19
    CHECK(xv[j] == doctest::Approx(0.09 / 0.19).epsilon(0.15));
  }

  // n=0 wrapper is an identity
  auto plain = make_env("pendulum", 23, "test2");
  auto zero = wrap_distractors(make_env("pendulum", 23, "test2"), 0, 0.9, 0.3,
                               RngStream(23, "wrap/distract/test2"));
  CHECK(zero->spec().obs_dim == 3);
  CHECK(plain->reset() == zero->reset());
  for (const auto& act : random_actions(100, 1, 81))
    CHECK(plain->step(act).obs == zero->step(act).obs);
}

TEST_CASE("episodes truncate at the horizon without physical termination") {
  auto env = make_env("massspring", 29, "test");
  env->reset();
  for (int t = 1; t <= 1000; ++t) {
    StepOut o = env->step({0.1});
    CHECK_FALSE(o.done);  // these systems never terminate physically
    CHECK(o.truncated == (t >= 1000));
  }
}

TEST_CASE("trajectories are determined by seed, tag and actions") {
  PerturbationConfig pert;
  pert.obs_noise = 0.05;
  pert.act_noise = 0.1;
  pert.mass_scale = 1.5;
  pert.distractors = 2;

  auto actions = random_actions(400, 2, 82);
  auto run = [&](const std::string& tag) {
    auto env = make_env("pointmass", 31, pert, tag);
    std::vector<double> flat = env->reset();
    for (const auto& a : actions) {
      StepOut o = env->step(a);
      flat.insert(flat.end(), o.obs.begin(), o.obs.end());
      flat.push_back(o.reward);
    }
    return flat;
  };
  auto a = run("train"), b = run("train"), c = run("eval");
  CHECK(a == b);
  CHECK(a != c);  // different instance tag, different streams
}

TEST_CASE("the composite constructor applies wrappers in its documented order") {
  PerturbationConfig pert;
  pert.obs_noise = 0.04;
  pert.act_noise = 0.2;
  pert.mass_scale = 0.5;
  pert.distractors = 3;

  auto composite = make_env("pendulum", 37, pert, "eval");
  auto manual = wrap_distractors(
      wrap_obs_noise(
          wrap_action_noise(
              wrap_mass_scale(make_env("pendulum", 37, "eval"), pert.mass_scale),
              pert.act_noise, RngStream(37, "wrap/act_noise/eval")),
          pert.obs_noise, RngStream(37, "wrap/obs_noise/eval")),
      pert.distractors, pert.distractor_rho, pert.distractor_sigma,
      RngStream(37, "wrap/distract/eval"));

  CHECK(composite->spec().obs_dim == manual->spec().obs_dim);
  CHECK(composite->reset() == manual->reset());
  for (const auto& act : random_actions(500, 1, 83)) {
    StepOut a = composite->step(act), b = manual->step(act);
    CHECK(a.obs == b.obs);
    CHECK(a.reward == b.reward);
    CHECK(a.truncated == b.truncated);
  }
}

TEST_CASE("wrappers compose in any order with a consistent spec") {
  // distractors first, then observation noise: the noise covers the
  // distractor dimensions too, and the spec still reports the grown size
  auto env = wrap_obs_noise(
      wrap_distractors(make_env("massspring", 41, "t"), 2, 0.9, 0.3,
                       RngStream(41, "wrap/distract/t")),
      0.05, RngStream(41, "wrap/obs_noise/t"));
  CHECK(env->spec().obs_dim == 5);
  auto obs = env->reset();
  CHECK(int(obs.size()) == 5);
  StepOut o = env->step({0.3});
  CHECK(int(o.obs.size()) == 5);
  CHECK(std::isfinite(o.reward));
}
