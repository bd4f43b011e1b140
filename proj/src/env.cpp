#include "mtc/env.hpp"

#include <cmath>

#include "mtc/common.hpp"

namespace mtc {

namespace {

constexpr double kDt = 0.05;
constexpr int kHorizon = 1000;

double wrap_angle(double th) {  // into (-pi, pi]
  th = std::fmod(th + M_PI, 2.0 * M_PI);
  if (th < 0) th += 2.0 * M_PI;
  return th - M_PI;
}

void check_action(const std::vector<double>& a, int dim) {
  require(int(a.size()) == dim, "env: action dimension mismatch");
  for (double x : a)
    require(x >= -1.0 - 1e-9 && x <= 1.0 + 1e-9, "env: action outside [-1, 1]");
}

void check_state_finite(const double* x, size_t n) {
  if (!all_finite(x, n)) throw NumericalFault("env: simulation produced non-finite state");
}

// Torque-limited pendulum swing-up. Angle 0 is upright (the unstable
// equilibrium the controller must reach); angle pi hangs down.
//   th_dd = (g/l)*sin(th) + a*tau_max/(m*l^2) - c*th_d
// c is zero: the undamped system keeps the zero-torque energy oracle exact
// and the swing-up task is the standard one.
class Pendulum final : public Env {
 public:
  explicit Pendulum(RngStream rng) : rng_(std::move(rng)) {}

  EnvSpec spec() const override { return {"pendulum", 3, 1, kHorizon}; }

  std::vector<double> reset() override {
    th_ = rng_.uniform(-M_PI, M_PI);
    thd_ = rng_.uniform(-1.0, 1.0);
    t_ = 0;
    return obs();
  }

  StepOut step(const std::vector<double>& a) override {
    check_action(a, 1);
    const double reward =
        -(wrap_angle(th_) * wrap_angle(th_) + 0.1 * thd_ * thd_ + 0.001 * a[0] * a[0]);
    const double m = kMass * mass_scale_;
    const double acc = (kG / kLen) * std::sin(th_) +
                       a[0] * kTorqueMax / (m * kLen * kLen) - kDamping * thd_;
    thd_ += kDt * acc;  // semi-implicit: velocity first
    thd_ = std::min(std::max(thd_, -kMaxSpeed), kMaxSpeed);
    th_ = wrap_angle(th_ + kDt * thd_);
    ++t_;
    const double st[2] = {th_, thd_};
    check_state_finite(st, 2);
    return {obs(), reward, false, t_ >= kHorizon};
  }

  void set_mass_scale(double k) override {
    require(k > 0.0, "mass scale must be positive");
    mass_scale_ = k;
  }

 private:
  std::vector<double> obs() const { return {std::cos(th_), std::sin(th_), thd_}; }

  static constexpr double kG = 10.0, kLen = 1.0, kMass = 1.0;
  static constexpr double kTorqueMax = 2.0, kDamping = 0.0, kMaxSpeed = 8.0;
  RngStream rng_;
  double th_ = M_PI, thd_ = 0.0, mass_scale_ = 1.0;
  int t_ = 0;
};

// 2-D point mass pushed toward the origin under velocity damping:
//   x_dd = (f_max*a - c*v) / m
class PointMass final : public Env {
 public:
  explicit PointMass(RngStream rng) : rng_(std::move(rng)) {}

  EnvSpec spec() const override { return {"pointmass", 4, 2, kHorizon}; }

  std::vector<double> reset() override {
    for (int i = 0; i < 2; ++i) {
      p_[i] = rng_.uniform(-1.0, 1.0);
      v_[i] = rng_.uniform(-0.1, 0.1);
    }
    t_ = 0;
    return obs();
  }

  StepOut step(const std::vector<double>& a) override {
    check_action(a, 2);
    double reward = 0.0;
    for (int i = 0; i < 2; ++i)
      reward -= p_[i] * p_[i] + 0.1 * v_[i] * v_[i] + 0.001 * a[i] * a[i];
    const double m = kMass * mass_scale_;
    for (int i = 0; i < 2; ++i) {
      const double acc = (kForceMax * a[i] - kDamping * v_[i]) / m;
      v_[i] += kDt * acc;
      p_[i] += kDt * v_[i];
    }
    ++t_;
    const double st[4] = {p_[0], p_[1], v_[0], v_[1]};
    check_state_finite(st, 4);
    return {obs(), reward, false, t_ >= kHorizon};
  }

  void set_mass_scale(double k) override {
    require(k > 0.0, "mass scale must be positive");
    mass_scale_ = k;
  }

 private:
  std::vector<double> obs() const { return {p_[0], p_[1], v_[0], v_[1]}; }

  static constexpr double kMass = 1.0, kForceMax = 1.0, kDamping = 0.5;
  RngStream rng_;
  double p_[2] = {0, 0}, v_[2] = {0, 0}, mass_scale_ = 1.0;
  int t_ = 0;
};

// 1-D mass-spring-damper holding position at a reference point x*:
//   m*x_dd = -k*x - c*v + f_max*a
class MassSpring final : public Env {
 public:
  explicit MassSpring(RngStream rng) : rng_(std::move(rng)) {}

  EnvSpec spec() const override { return {"massspring", 3, 1, kHorizon}; }

  std::vector<double> reset() override {
    x_ = rng_.uniform(-1.0, 1.0);
    v_ = rng_.uniform(-0.1, 0.1);
    t_ = 0;
    return obs();
  }

  StepOut step(const std::vector<double>& a) override {
    check_action(a, 1);
    const double e = x_ - kRef;
    const double reward = -(e * e + 0.1 * v_ * v_ + 0.001 * a[0] * a[0]);
    const double m = kMass * mass_scale_;
    const double acc = (-kSpring * x_ - kDamping * v_ + kForceMax * a[0]) / m;
    v_ += kDt * acc;
    x_ += kDt * v_;
    ++t_;
    const double st[2] = {x_, v_};
    check_state_finite(st, 2);
    return {obs(), reward, false, t_ >= kHorizon};
  }

  void set_mass_scale(double k) override {
    require(k > 0.0, "mass scale must be positive");
    mass_scale_ = k;
  }

 private:
  std::vector<double> obs() const { return {x_, v_, kRef - x_}; }

  static constexpr double kMass = 1.0, kSpring = 1.0, kDamping = 0.1;
  static constexpr double kForceMax = 2.0, kRef = 1.0;
  RngStream rng_;
  double x_ = 0.0, v_ = 0.0, mass_scale_ = 1.0;
  int t_ = 0;
};

// ---- wrappers ----

class WrapperBase : public Env {
 public:
  explicit WrapperBase(std::unique_ptr<Env> inner) : inner_(std::move(inner)) {}
  EnvSpec spec() const override { return inner_->spec(); }
  std::vector<double> reset() override { return inner_->reset(); }
  StepOut step(const std::vector<double>& a) override { return inner_->step(a); }
  void set_mass_scale(double k) override { inner_->set_mass_scale(k); }

 protected:
  std::unique_ptr<Env> inner_;
};

// Gaussian noise on what the agent observes; the dynamics and the reward see
// the true state.
class ObsNoise final : public WrapperBase {
 public:
  ObsNoise(std::unique_ptr<Env> inner, double sigma, RngStream rng)
      : WrapperBase(std::move(inner)), sigma_(sigma), rng_(std::move(rng)) {}
  std::vector<double> reset() override { return corrupt(inner_->reset()); }
  StepOut step(const std::vector<double>& a) override {
    StepOut o = inner_->step(a);
    o.obs = corrupt(std::move(o.obs));
    return o;
  }

 private:
  std::vector<double> corrupt(std::vector<double> obs) {
    if (sigma_ > 0.0)
      for (double& x : obs) x += sigma_ * rng_.normal();
    return obs;
  }
  double sigma_;
  RngStream rng_;
};

// Gaussian noise on the executed action, clipped back into [-1, 1].
class ActNoise final : public WrapperBase {
 public:
  ActNoise(std::unique_ptr<Env> inner, double sigma, RngStream rng)
      : WrapperBase(std::move(inner)), sigma_(sigma), rng_(std::move(rng)) {}
  StepOut step(const std::vector<double>& a) override {
    if (sigma_ <= 0.0) return inner_->step(a);
    std::vector<double> noisy(a);
    for (double& x : noisy)
      x = std::min(std::max(x + sigma_ * rng_.normal(), -1.0), 1.0);
    return inner_->step(noisy);
  }

 private:
  double sigma_;
  RngStream rng_;
};

class MassScale final : public WrapperBase {
 public:
  MassScale(std::unique_ptr<Env> inner, double k)
      : WrapperBase(std::move(inner)), k_(k) {
    inner_->set_mass_scale(k_);
  }
  std::vector<double> reset() override {
    inner_->set_mass_scale(k_);  // applied at reset per protocol; idempotent
    return inner_->reset();
  }

 private:
  double k_;
};

// Appends n uncontrollable dimensions following x' = rho*x + sigma*eps,
// initialized from their stationary distribution.
class Distractors final : public WrapperBase {
 public:
  Distractors(std::unique_ptr<Env> inner, int n, double rho, double sigma,
              RngStream rng)
      : WrapperBase(std::move(inner)), n_(n), rho_(rho), sigma_(sigma),
        rng_(std::move(rng)), x_(size_t(n), 0.0) {
    require(n >= 0, "distractors: n must be nonnegative");
    require(std::abs(rho) < 1.0, "distractors: |rho| must be < 1 (stationary)");
  }
  EnvSpec spec() const override {
    EnvSpec s = inner_->spec();
    s.obs_dim += n_;
    return s;
  }
  std::vector<double> reset() override {
    const double stat_sd = sigma_ / std::sqrt(1.0 - rho_ * rho_);
    for (double& x : x_) x = stat_sd * rng_.normal();
    return augment(inner_->reset());
  }
  StepOut step(const std::vector<double>& a) override {
    StepOut o = inner_->step(a);
    for (double& x : x_) x = rho_ * x + sigma_ * rng_.normal();
    o.obs = augment(std::move(o.obs));
    return o;
  }

 private:
  std::vector<double> augment(std::vector<double> obs) const {
    obs.insert(obs.end(), x_.begin(), x_.end());
    return obs;
  }
  int n_;
  double rho_, sigma_;
  RngStream rng_;
  std::vector<double> x_;
};

}  // namespace

std::vector<std::string> env_ids() { return {"pendulum", "pointmass", "massspring"}; }

std::unique_ptr<Env> make_env(const std::string& id, uint64_t master_seed,
                              const std::string& instance_tag) {
  RngStream rng(master_seed, "env/" + id + "/" + instance_tag);
  if (id == "pendulum") return std::make_unique<Pendulum>(std::move(rng));
  if (id == "pointmass") return std::make_unique<PointMass>(std::move(rng));
  if (id == "massspring") return std::make_unique<MassSpring>(std::move(rng));
  throw UsageError("unknown env '" + id + "' (valid: pendulum, pointmass, massspring)");
}

std::unique_ptr<Env> wrap_obs_noise(std::unique_ptr<Env> inner, double sigma,
                                    RngStream rng) {
  require(sigma >= 0.0, "obs noise sigma must be nonnegative");
  return std::make_unique<ObsNoise>(std::move(inner), sigma, std::move(rng));
}
std::unique_ptr<Env> wrap_action_noise(std::unique_ptr<Env> inner, double sigma,
                                       RngStream rng) {
  require(sigma >= 0.0, "action noise sigma must be nonnegative");
  return std::make_unique<ActNoise>(std::move(inner), sigma, std::move(rng));
}
std::unique_ptr<Env> wrap_mass_scale(std::unique_ptr<Env> inner, double k) {
  require(k > 0.0, "mass scale must be positive");
  return std::make_unique<MassScale>(std::move(inner), k);
}
std::unique_ptr<Env> wrap_distractors(std::unique_ptr<Env> inner, int n, double rho,
                                      double sigma, RngStream rng) {
  return std::make_unique<Distractors>(std::move(inner), n, rho, sigma, std::move(rng));
}

std::unique_ptr<Env> make_env(const std::string& id, uint64_t master_seed,
                              const PerturbationConfig& pert,
                              const std::string& instance_tag) {
  std::unique_ptr<Env> env = make_env(id, master_seed, instance_tag);
  if (pert.mass_scale != 1.0) env = wrap_mass_scale(std::move(env), pert.mass_scale);
  if (pert.act_noise > 0.0)
    env = wrap_action_noise(std::move(env), pert.act_noise,
                            RngStream(master_seed, "wrap/act_noise/" + instance_tag));
  if (pert.obs_noise > 0.0)
    env = wrap_obs_noise(std::move(env), pert.obs_noise,
                         RngStream(master_seed, "wrap/obs_noise/" + instance_tag));
  if (pert.distractors > 0)
    env = wrap_distractors(std::move(env), pert.distractors, pert.distractor_rho,
                           pert.distractor_sigma,
                           RngStream(master_seed, "wrap/distract/" + instance_tag));
  return env;
}

}  // namespace mtc
