#include "mtc/trainer.hpp"

#include <cmath>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>

#include "mtc/checkpoint.hpp"
#include "mtc/lockfile.hpp"

namespace mtc {

namespace fs = std::filesystem;

namespace {

ModelConfig model_cfg_from(const TrainConfig& c, const EnvSpec& sp) {
  ModelConfig mc;
  mc.algo = algo_from_string(c.algo);
  mc.obs_dim = sp.obs_dim;
  mc.act_dim = sp.act_dim;
  mc.z_dim = c.z_dim;
  mc.width = c.width;
  mc.gru_hidden = c.gru_hidden;
  mc.gru_out = c.gru_out;
  mc.dynamics_ln = (c.dynamics_output_norm == "layer_norm");
  mc.init_temperature = c.init_temperature;
  mc.alpha_init = c.alpha_init;
  return mc;
}

TrainConfig validated(TrainConfig c) {
  validate_config(c);
  return c;
}

std::vector<Tensor> opt_params(const ModelSet& M, const ParamVec& pv, bool present) {
  if (!present) return {};
  (void)M;
  return tensors_of(pv);
}

void check_finite_loss(double v, const char* which) {
  if (!std::isfinite(v))
    throw NumericalFault(std::string(which) + " loss is non-finite");
}

}  // namespace

std::string metrics_header() {
  return "step,episode_return,critic_loss,actor_obj,bound_mean,c_z_mean,c_a_mean,"
         "alpha,beta_prime,entropy";
}

std::string metrics_row(const Diag& d) {
  std::string row = std::to_string(d.step);
  const double cols[] = {d.episode_return, d.critic_loss, d.actor_obj, d.bound_mean,
                         d.c_z_mean,       d.c_a_mean,    d.alpha,     d.beta_prime,
                         d.entropy};
  for (double c : cols) {
    row += ',';
    row += format_g9(c);
  }
  return row;
}

uint64_t model_checksum(const ModelSet& M) {
  ckpt::Map mp;
  M.save(mp);
  uint64_t h = 1469598103934665603ULL;
  auto mix = [&h](const void* p, size_t n) {
    const unsigned char* b = static_cast<const unsigned char*>(p);
    for (size_t i = 0; i < n; ++i) {
      h ^= b[i];
      h *= 1099511628211ULL;
    }
  };
  for (const auto& [name, t] : mp) {
    mix(name.data(), name.size());
    mix(t.values().data(), t.values().size() * sizeof(double));
  }
  return h;
}

Trainer::Trainer(const TrainConfig& cfg)
    : cfg_(validated(cfg)),
      env_(make_env(cfg_.env_id, cfg_.seed, "train")),
      eval_env_(make_env(cfg_.env_id, cfg_.seed, "eval")),
      models_(model_cfg_from(cfg_, env_->spec()), cfg_.seed),
      buffer_(env_->spec().obs_dim, env_->spec().act_dim,
              static_cast<size_t>(cfg_.buffer_capacity)),
      policy_opt_(tensors_of(models_.policy_params()), cfg_.actor_lr),
      critic_opt_(tensors_of(models_.critic_params()), cfg_.critic_lr),
      enc_opt_(opt_params(models_, models_.has_encoder() ? models_.encoder_params() : ParamVec{},
                          models_.has_encoder()),
               cfg_.actor_lr),
      dyn_opt_(opt_params(models_,
                          (models_.has_dyn() || models_.has_one_step()) ? models_.dyn_params()
                                                                        : ParamVec{},
                          models_.has_dyn() || models_.has_one_step()),
               cfg_.actor_lr),
      act_pred_opt_(opt_params(models_,
                               models_.has_act_pred() ? models_.act_pred_params() : ParamVec{},
                               models_.has_act_pred()),
                    cfg_.actor_lr),
      explore_(cfg_.seed, "explore"),
      collect_(cfg_.seed, "collect"),
      pi_(cfg_.seed, "pi"),
      enc_(cfg_.seed, "enc"),
      replay_(cfg_.seed, "replay") {
  use_bonus_ = models_.regularized() && cfg_.regularizer_enabled;
  if (!cfg_.regularizer_enabled) {
    // The disabled regularizer pins alpha to exactly zero so every coefficient
    // that subtracts it reduces bitwise to the plain soft actor-critic value.
    models_.log_alpha = -std::numeric_limits<double>::infinity();
  }
  target_entropy_ = resolved_target_entropy(cfg_, env_->spec().act_dim);
  if (cfg_.grad_clip > 0.0) {
    policy_opt_.set_grad_clip(cfg_.grad_clip);
    critic_opt_.set_grad_clip(cfg_.grad_clip);
    enc_opt_.set_grad_clip(cfg_.grad_clip);
    dyn_opt_.set_grad_clip(cfg_.grad_clip);
    act_pred_opt_.set_grad_clip(cfg_.grad_clip);
  }
  cur_obs_ = env_->reset();
}

void Trainer::collect_step() {
  const EnvSpec sp = env_->spec();
  std::vector<double> a(sp.act_dim);
  if (env_step_ < cfg_.init_steps) {
    for (int i = 0; i < sp.act_dim; ++i) a[i] = explore_.uniform(-1.0, 1.0);
  } else {
    Tensor s = Tensor::from({1, sp.obs_dim}, cur_obs_);
    PolicySample ps = policy_sample(models_.policy, s, collect_);
    const auto& av = ps.a.values();
    for (int i = 0; i < sp.act_dim; ++i) a[i] = av[i];
  }
  StepOut o = env_->step(a);
  episode_accum_ += o.reward;
  const bool ep_end = o.done || o.truncated;
  buffer_.push(cur_obs_.data(), a.data(), o.reward, o.obs.data(), o.done, ep_end);
  ++env_step_;
  if (ep_end) {
    ++episode_count_;
    last_episode_return_ = episode_accum_;
    episode_accum_ = 0.0;
    cur_obs_ = env_->reset();
  } else {
    cur_obs_ = o.obs;
  }
}

bool Trainer::try_update() {
  if (env_step_ < cfg_.init_steps) return false;
  if (!buffer_.sample_windows(cfg_.batch, cfg_.history, replay_, last_window_)) return false;

  // critic (every update cycle)
  double critic_loss = 0.0;
  {
    Tape tape;
    CriticResult cr = critic_pass(last_window_, models_, cfg_.gamma, use_bonus_, enc_, pi_);
    critic_loss = cr.loss.item();
    check_finite_loss(critic_loss, "critic");
    tape.backward(cr.loss);
  }
  critic_opt_.step();
  ++update_count_;

  // actor + encoder + predictors (at the actor frequency)
  if (update_count_ % cfg_.actor_update_freq == 0) {
    ParamVec critic_pv = models_.critic_params();
    set_requires_grad(critic_pv, false);
    ActorResult ar;
    try {
      Tape tape;
      ar = actor_pass(last_window_, models_, cfg_.gamma, cfg_.m, use_bonus_, enc_, pi_);
      check_finite_loss(ar.loss.item(), "actor");
      tape.backward(ar.loss);
    } catch (...) {
      set_requires_grad(critic_pv, true);
      throw;
    }
    set_requires_grad(critic_pv, true);
    policy_opt_.step();
    if (use_bonus_) {
      enc_opt_.step();
      dyn_opt_.step();
      if (models_.has_act_pred()) act_pred_opt_.step();
    }
    diag_.actor_obj = ar.objective;
    diag_.bound_mean = ar.bound_estimate;
    diag_.c_z_mean = ar.c_z_mean;
    diag_.c_a_mean = ar.c_a_mean;
    last_fresh_logpi_mean_ = ar.fresh_logpi_mean;
  }

  // target networks
  if (update_count_ % cfg_.target_update_freq == 0) {
    ParamVec net = models_.critic_params();
    ParamVec tgt = models_.target_params();
    soft_update(net, tgt, cfg_.tau);
  }

  // dual step toward the information constraint level
  if (use_bonus_) {
    const double g = dual_grad_log_alpha(models_.alpha(), diag_.bound_mean, cfg_.ip);
    models_.log_alpha += alpha_adam_.delta(g, cfg_.alpha_lr);
  }

  // temperature step toward the target entropy
  {
    const double g =
        temperature_grad_log_temp(models_.temperature(), last_fresh_logpi_mean_, target_entropy_);
    models_.log_temp += temp_adam_.delta(g, cfg_.temp_lr);
  }

  diag_.step = env_step_;
  diag_.episode_return = last_episode_return_;
  diag_.critic_loss = critic_loss;
  diag_.alpha = models_.alpha();
  diag_.beta_prime = models_.temperature();
  diag_.entropy = -last_fresh_logpi_mean_;
  return true;
}

std::vector<double> Trainer::evaluate(int episodes, std::vector<Trajectory>* out) {
  std::vector<double> rets;
  rets.reserve(static_cast<size_t>(episodes));
  for (int i = 0; i < episodes; ++i) {
    Trajectory t = rollout_episode(*eval_env_, models_);
    rets.push_back(t.ret);
    if (out) out->push_back(std::move(t));
  }
  return rets;
}

void Trainer::save_checkpoint(const std::string& path) const {
  ckpt::Map mp;
  models_.save(mp);
  auto save_opt = [&mp](const std::string& gname, const Adam& opt, const ParamVec& pv) {
    require(opt.size() == pv.size(), "optimizer state does not match its parameter group");
    for (size_t i = 0; i < pv.size(); ++i) {
      const auto& m1 = opt.m1(i);
      const auto& m2 = opt.m2(i);
      mp["opt/" + pv[i].first + "/m1"] =
          Tensor::from({static_cast<int>(m1.size())}, m1);
      mp["opt/" + pv[i].first + "/m2"] =
          Tensor::from({static_cast<int>(m2.size())}, m2);
    }
    ckpt::put_scalar(mp, "opt/" + gname + "/t", static_cast<double>(opt.step_count()));
  };
  save_opt("policy", policy_opt_, models_.policy_params());
  save_opt("critic", critic_opt_, models_.critic_params());
  if (models_.has_encoder()) save_opt("encoder", enc_opt_, models_.encoder_params());
  if (models_.has_dyn() || models_.has_one_step())
    save_opt("dyn", dyn_opt_, models_.dyn_params());
  if (models_.has_act_pred()) save_opt("act_pred", act_pred_opt_, models_.act_pred_params());
  ckpt::put_scalar(mp, "dual/alpha_adam/m", alpha_adam_.m);
  ckpt::put_scalar(mp, "dual/alpha_adam/v", alpha_adam_.v);
  ckpt::put_scalar(mp, "dual/alpha_adam/t", static_cast<double>(alpha_adam_.t));
  ckpt::put_scalar(mp, "dual/temp_adam/m", temp_adam_.m);
  ckpt::put_scalar(mp, "dual/temp_adam/v", temp_adam_.v);
  ckpt::put_scalar(mp, "dual/temp_adam/t", static_cast<double>(temp_adam_.t));
  ckpt::put_scalar(mp, "train/step", static_cast<double>(env_step_));
  ckpt::put_scalar(mp, "train/updates", static_cast<double>(update_count_));
  ckpt::put_scalar(mp, "train/episodes", static_cast<double>(episode_count_));
  ckpt::put_scalar(mp, "train/last_episode_return", last_episode_return_);
  ckpt::save(path, mp);
}

void Trainer::load_checkpoint(const std::string& path) {
  ckpt::Map mp = ckpt::load(path);
  models_.load(mp);
  auto load_opt = [&mp](const std::string& gname, Adam& opt, const ParamVec& pv) {
    require(opt.size() == pv.size(), "optimizer state does not match its parameter group");
    for (size_t i = 0; i < pv.size(); ++i) {
      for (const char* which : {"m1", "m2"}) {
        const std::string name = "opt/" + pv[i].first + "/" + which;
        auto it = mp.find(name);
        require(it != mp.end(), "checkpoint missing optimizer entry: " + name);
        const auto& src = it->second.values();
        auto& dst = (which[1] == '1') ? opt.m1(i) : opt.m2(i);
        require(src.size() == dst.size(), "optimizer entry size mismatch: " + name);
        dst = src;
      }
    }
    opt.set_step_count(static_cast<long>(ckpt::get_scalar(mp, "opt/" + gname + "/t")));
  };
  load_opt("policy", policy_opt_, models_.policy_params());
  load_opt("critic", critic_opt_, models_.critic_params());
  if (models_.has_encoder()) load_opt("encoder", enc_opt_, models_.encoder_params());
  if (models_.has_dyn() || models_.has_one_step())
    load_opt("dyn", dyn_opt_, models_.dyn_params());
  if (models_.has_act_pred()) load_opt("act_pred", act_pred_opt_, models_.act_pred_params());
  alpha_adam_.m = ckpt::get_scalar(mp, "dual/alpha_adam/m");
  alpha_adam_.v = ckpt::get_scalar(mp, "dual/alpha_adam/v");
  alpha_adam_.t = static_cast<long>(ckpt::get_scalar(mp, "dual/alpha_adam/t"));
  temp_adam_.m = ckpt::get_scalar(mp, "dual/temp_adam/m");
  temp_adam_.v = ckpt::get_scalar(mp, "dual/temp_adam/v");
  temp_adam_.t = static_cast<long>(ckpt::get_scalar(mp, "dual/temp_adam/t"));
  env_step_ = static_cast<long long>(ckpt::get_scalar(mp, "train/step"));
  update_count_ = static_cast<long long>(ckpt::get_scalar(mp, "train/updates"));
  episode_count_ = static_cast<long long>(ckpt::get_scalar(mp, "train/episodes"));
  last_episode_return_ = ckpt::get_scalar(mp, "train/last_episode_return");
  // The replay buffer is rebuilt from fresh collection: a resumed run starts
  // a new episode and keeps collecting until windows are available again.
  episode_accum_ = 0.0;
  cur_obs_ = env_->reset();
  if (!cfg_.regularizer_enabled)
    models_.log_alpha = -std::numeric_limits<double>::infinity();
}

void Trainer::write_manifest(const std::string& path) const {
  std::ofstream f(path, std::ios::trunc);
  require(static_cast<bool>(f), "cannot write manifest: " + path);
  for (const auto& [k, v] : manifest_entries(cfg_)) f << k << "=" << v << "\n";
  std::time_t now = std::time(nullptr);
  std::tm g{};
  gmtime_r(&now, &g);
  char buf[64];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &g);
  f << "timestamp=" << buf << "\n";
}

void Trainer::dump_fault(const std::string& dir, const std::string& what) const {
  std::ofstream f(dir + "/fault.txt", std::ios::trunc);
  if (!f) return;  // best effort: the fault itself is already being thrown
  f << "non-finite value during update\n";
  f << "message=" << what << "\n";
  f << "env_step=" << env_step_ << "\n";
  f << "update_count=" << update_count_ << "\n";
  char hex[32];
  std::snprintf(hex, sizeof(hex), "%016llx",
                static_cast<unsigned long long>(model_checksum(models_)));
  f << "model_checksum=" << hex << "\n";
  auto dump_tensor = [&f](const std::string& name, const Tensor& t) {
    f << name << " =";
    for (double v : t.values()) f << ' ' << format_g17(v);
    f << "\n";
  };
  if (last_window_.B > 0) {
    f << "window B=" << last_window_.B << " H=" << last_window_.H << "\n";
    for (size_t i = 0; i < last_window_.s.size(); ++i)
      dump_tensor("s[" + std::to_string(i) + "]", last_window_.s[i]);
    for (size_t i = 0; i < last_window_.a.size(); ++i)
      dump_tensor("a[" + std::to_string(i) + "]", last_window_.a[i]);
    dump_tensor("r", last_window_.r);
    dump_tensor("d", last_window_.d);
  }
}

void Trainer::run() {
  if (cfg_.out_dir.empty()) throw UsageError("training requires an output directory (--out)");
  fs::create_directories(cfg_.out_dir);
  DirLock lock(cfg_.out_dir + "/lock");
  const std::string ckpt_path = cfg_.out_dir + "/ckpt.bin";
  const std::string metrics_path = cfg_.out_dir + "/metrics.csv";
  const std::string eval_path = cfg_.out_dir + "/eval.csv";

  const bool resuming = cfg_.resume && fs::exists(ckpt_path);
  if (resuming) load_checkpoint(ckpt_path);
  write_manifest(cfg_.out_dir + "/manifest.txt");

  const bool append = resuming && fs::exists(metrics_path) && fs::file_size(metrics_path) > 0;
  std::ofstream metrics(metrics_path, append ? std::ios::app : std::ios::trunc);
  require(static_cast<bool>(metrics), "cannot write metrics CSV: " + metrics_path);
  if (!append) metrics << metrics_header() << "\n";
  const bool eval_append = resuming && fs::exists(eval_path) && fs::file_size(eval_path) > 0;
  std::ofstream evalcsv(eval_path, eval_append ? std::ios::app : std::ios::trunc);
  require(static_cast<bool>(evalcsv), "cannot write eval CSV: " + eval_path);
  if (!eval_append) evalcsv << "step,mean_return,ci90,episodes\n";

  while (env_step_ < cfg_.steps) {
    collect_step();
    bool did = false;
    try {
      did = try_update();
    } catch (const NumericalFault& e) {
      dump_fault(cfg_.out_dir, e.what());
      throw;
    }
    if (did) metrics << metrics_row(diag_) << "\n";
    if (env_step_ % cfg_.eval_every == 0 && cfg_.eval_episodes > 0) {
      std::vector<double> rets = evaluate(cfg_.eval_episodes, nullptr);
      MeanCi mc = mean_ci90(rets);
      evalcsv << env_step_ << ',' << format_g9(mc.mean) << ',' << format_g9(mc.ci90) << ','
              << rets.size() << "\n";
      evalcsv.flush();
      metrics.flush();
      save_checkpoint(ckpt_path);
    }
  }

  if (cfg_.eval_episodes > 0) {
    std::vector<Trajectory> trajs;
    evaluate(cfg_.eval_episodes, &trajs);
    fs::create_directories(cfg_.out_dir + "/trajectories");
    for (size_t i = 0; i < trajs.size(); ++i)
      write_file(cfg_.out_dir + "/trajectories/ep" + std::to_string(i) + ".txt",
                 trajectory_text(trajs[i]));
  }
  save_checkpoint(ckpt_path);
}

}  // namespace mtc
