#include "mtc/models.hpp"

#include <cmath>

#include "mtc/common.hpp"

namespace mtc {

Algo algo_from_string(const std::string& s) {
  if (s == "mtc") return Algo::mtc;
  if (s == "mtc-noa") return Algo::mtc_noa;
  if (s == "rpc") return Algo::rpc;
  if (s == "sac") return Algo::sac;
  throw UsageError("unknown algo '" + s + "' (valid: mtc, mtc-noa, rpc, sac)");
}

std::string to_string(Algo a) {
  switch (a) {
    case Algo::mtc: return "mtc";
    case Algo::mtc_noa: return "mtc-noa";
    case Algo::rpc: return "rpc";
    case Algo::sac: return "sac";
  }
  return "?";
}

Tensor bound_log_std(const Tensor& raw) {
  // lo + (hi - lo) * (tanh(raw) + 1)/2: smooth, stays strictly inside [lo, hi]
  Tensor t = tanh(raw);
  return add_scalar(mul_scalar(t, 0.5 * (kLogStdHi - kLogStdLo)),
                    kLogStdLo + 0.5 * (kLogStdHi - kLogStdLo));
}

Tensor reparam_sample(const DiagGaussian& d, RngStream& rng) {
  Tensor eps = Tensor::zeros(d.mean.shape());
  for (auto& v : eps.values_mut()) v = rng.normal();
  return add(d.mean, mul(exp(d.log_std), eps));
}

Tensor kl_diag(const DiagGaussian& p, const DiagGaussian& q) {
  if (p.mean.shape() != q.mean.shape())
    throw ShapeError("kl_diag: dimension mismatch");
  // 0.5*( (sp/sq)^2 + ((mp-mq)/sq)^2 - 1 ) + (log sq - log sp), summed
  Tensor log_ratio = sub(q.log_std, p.log_std);
  Tensor var_ratio = exp(mul_scalar(log_ratio, -2.0));
  Tensor dm = mul(sub(p.mean, q.mean), exp(neg(q.log_std)));
  Tensor per_dim = add(add_scalar(mul_scalar(add(var_ratio, square(dm)), 0.5), -0.5),
                       log_ratio);
  return row_sum(per_dim);
}

namespace {
DiagGaussian split_gaussian(const Tensor& out2d, int d) {
  return {slice_cols(out2d, 0, d), bound_log_std(slice_cols(out2d, d, 2 * d))};
}
}  // namespace

// ---- Encoder ----

Encoder::Encoder(int obs_dim, int z, int width, RngStream& rng)
    : net({obs_dim, width, width, 2 * z}, rng), z_dim(z) {}

DiagGaussian Encoder::operator()(const Tensor& s) const {
  return split_gaussian(net(s), z_dim);
}

void Encoder::collect(const std::string& prefix, ParamVec& out) const {
  net.collect(prefix, out);
}

// ---- Policy ----

Policy::Policy(int obs_dim, int a, int width, RngStream& rng)
    : net({obs_dim, width, width, 2 * a}, rng), a_dim(a) {}

DiagGaussian Policy::dist(const Tensor& s) const {
  return split_gaussian(net(s), a_dim);
}

void Policy::collect(const std::string& prefix, ParamVec& out) const {
  net.collect(prefix, out);
}

PolicySample policy_sample(const Policy& pi, const Tensor& s, RngStream& rng) {
  DiagGaussian d = pi.dist(s);
  Tensor u = reparam_sample(d, rng);
  Tensor lp = sub(gauss_log_prob(u, d.mean, d.log_std), tanh_log_det(u));
  return {tanh(u), u, lp};
}

Tensor policy_log_prob(const Policy& pi, const Tensor& s, const Tensor& u) {
  DiagGaussian d = pi.dist(s);
  Tensor u_const = u.detach();
  return sub(gauss_log_prob(u_const, d.mean, d.log_std), tanh_log_det(u_const));
}

Tensor policy_mean_action(const Policy& pi, const Tensor& s) {
  return tanh(pi.dist(s).mean);
}

// ---- HistoryModel ----

HistoryModel::HistoryModel(int in_dim, int out, int gru_hidden, int gru_out,
                           int width, bool use_ln_, RngStream& rng)
    : cell(in_dim, gru_hidden, gru_out, rng),
      ln(gru_out),
      head({gru_out, width, width, 2 * out}, rng),
      use_ln(use_ln_),
      out_dim(out) {}

std::pair<DiagGaussian, Tensor> HistoryModel::step(const Tensor& x, const Tensor& h) const {
  auto [y, hnew] = cell.step(x, h);
  Tensor trunk = use_ln ? ln(y) : y;
  return {split_gaussian(head(trunk), out_dim), hnew};
}

void HistoryModel::collect(const std::string& prefix, ParamVec& out) const {
  cell.collect(prefix + "/cell", out);
  ln.collect(prefix + "/ln", out);
  head.collect(prefix + "/head", out);
}

// ---- OneStepModel ----

OneStepModel::OneStepModel(int in_dim, int out, int width, RngStream& rng)
    : net({in_dim, width, width, 2 * out}, rng), out_dim(out) {}

DiagGaussian OneStepModel::operator()(const Tensor& za) const {
  return split_gaussian(net(za), out_dim);
}

void OneStepModel::collect(const std::string& prefix, ParamVec& out) const {
  net.collect(prefix, out);
}

// ---- QNet ----

QNet::QNet(int obs_dim, int act_dim, int width, RngStream& rng)
    : net({obs_dim + act_dim, width, width, 1}, rng) {}

Tensor QNet::operator()(const Tensor& s, const Tensor& a) const {
  return net(concat_cols(s, a));
}

void QNet::collect(const std::string& prefix, ParamVec& out) const {
  net.collect(prefix, out);
}

// ---- ModelSet ----

ModelSet::ModelSet(const ModelConfig& c, uint64_t master_seed) : cfg(c) {
  require(cfg.obs_dim > 0 && cfg.act_dim > 0, "ModelSet: dimensions must be positive");
  {
    RngStream rng(master_seed, "init/policy");
    policy = Policy(cfg.obs_dim, cfg.act_dim, cfg.width, rng);
  }
  {
    RngStream rng(master_seed, "init/q1");
    q1 = QNet(cfg.obs_dim, cfg.act_dim, cfg.width, rng);
  }
  {
    RngStream rng(master_seed, "init/q2");
    q2 = QNet(cfg.obs_dim, cfg.act_dim, cfg.width, rng);
  }
  // targets start as exact copies and never require gradients
  {
    RngStream rng(master_seed, "init/q1");
    q1_target = QNet(cfg.obs_dim, cfg.act_dim, cfg.width, rng);
    RngStream rng2(master_seed, "init/q2");
    q2_target = QNet(cfg.obs_dim, cfg.act_dim, cfg.width, rng2);
    ParamVec t = target_params();
    set_requires_grad(t, false);
  }
  if (has_encoder()) {
    RngStream rng(master_seed, "init/encoder");
    encoder = Encoder(cfg.obs_dim, cfg.z_dim, cfg.width, rng);
  }
  if (has_dyn()) {
    RngStream rng(master_seed, "init/dyn");
    dyn = HistoryModel(cfg.z_dim + cfg.act_dim, cfg.z_dim, cfg.gru_hidden,
                       cfg.gru_out, cfg.width, cfg.dynamics_ln, rng);
  }
  if (has_one_step()) {
    RngStream rng(master_seed, "init/one_step");
    one_step = OneStepModel(cfg.z_dim + cfg.act_dim, cfg.z_dim, cfg.width, rng);
  }
  if (has_act_pred()) {
    RngStream rng(master_seed, "init/act_pred");
    act_pred = HistoryModel(cfg.z_dim + cfg.act_dim, cfg.act_dim, cfg.gru_hidden,
                            cfg.gru_out, cfg.width, cfg.dynamics_ln, rng);
  }
  log_alpha = std::log(cfg.alpha_init);
  log_temp = std::log(cfg.init_temperature);
}

ParamVec ModelSet::policy_params() const {
  ParamVec pv;
  policy.collect("policy", pv);
  return pv;
}
ParamVec ModelSet::encoder_params() const {
  ParamVec pv;
  if (has_encoder()) encoder.collect("encoder", pv);
  return pv;
}
ParamVec ModelSet::dyn_params() const {
  ParamVec pv;
  if (has_dyn()) dyn.collect("dyn", pv);
  if (has_one_step()) one_step.collect("one_step", pv);
  return pv;
}
ParamVec ModelSet::act_pred_params() const {
  ParamVec pv;
  if (has_act_pred()) act_pred.collect("act_pred", pv);
  return pv;
}
ParamVec ModelSet::critic_params() const {
  ParamVec pv;
  q1.collect("q1", pv);
  q2.collect("q2", pv);
  return pv;
}
ParamVec ModelSet::target_params() const {
  ParamVec pv;
  q1_target.collect("q1_target", pv);
  q2_target.collect("q2_target", pv);
  return pv;
}

namespace {
constexpr int kAlgoCount = 4;

void put_meta(ckpt::Map& m, const std::string& k, double v) {
  ckpt::put_scalar(m, "meta/" + k, v);
}
double get_meta(const ckpt::Map& m, const std::string& k) {
  return ckpt::get_scalar(m, "meta/" + k);
}
}  // namespace

void ModelSet::save(ckpt::Map& out) const {
  put_meta(out, "algo", double(int(cfg.algo)));
  put_meta(out, "obs_dim", cfg.obs_dim);
  put_meta(out, "act_dim", cfg.act_dim);
  put_meta(out, "z_dim", cfg.z_dim);
  put_meta(out, "width", cfg.width);
  put_meta(out, "gru_hidden", cfg.gru_hidden);
  put_meta(out, "gru_out", cfg.gru_out);
  put_meta(out, "dynamics_ln", cfg.dynamics_ln ? 1.0 : 0.0);
  put_meta(out, "init_temperature", cfg.init_temperature);
  put_meta(out, "alpha_init", cfg.alpha_init);
  ckpt::put_scalar(out, "dual/log_alpha", log_alpha);
  ckpt::put_scalar(out, "dual/log_temp", log_temp);
  for (const ParamVec& pv :
       {policy_params(), encoder_params(), dyn_params(), act_pred_params(),
        critic_params(), target_params()})
    save_params(pv, out);
}

ModelConfig ModelSet::config_from_checkpoint(const ckpt::Map& in) {
  ModelConfig c;
  const int algo = int(get_meta(in, "algo"));
  require(algo >= 0 && algo < kAlgoCount, "checkpoint: bad algo tag");
  c.algo = Algo(algo);
  c.obs_dim = int(get_meta(in, "obs_dim"));
  c.act_dim = int(get_meta(in, "act_dim"));
  c.z_dim = int(get_meta(in, "z_dim"));
  c.width = int(get_meta(in, "width"));
  c.gru_hidden = int(get_meta(in, "gru_hidden"));
  c.gru_out = int(get_meta(in, "gru_out"));
  c.dynamics_ln = get_meta(in, "dynamics_ln") != 0.0;
  c.init_temperature = get_meta(in, "init_temperature");
  c.alpha_init = get_meta(in, "alpha_init");
  return c;
}

void ModelSet::load(const ckpt::Map& in) {
  const ModelConfig c = config_from_checkpoint(in);
  require(c.algo == cfg.algo && c.obs_dim == cfg.obs_dim && c.act_dim == cfg.act_dim &&
              c.z_dim == cfg.z_dim && c.width == cfg.width &&
              c.gru_hidden == cfg.gru_hidden && c.gru_out == cfg.gru_out &&
              c.dynamics_ln == cfg.dynamics_ln,
          "checkpoint: architecture does not match this model set");
  log_alpha = ckpt::get_scalar(in, "dual/log_alpha");
  log_temp = ckpt::get_scalar(in, "dual/log_temp");
  for (ParamVec pv : {policy_params(), encoder_params(), dyn_params(),
                      act_pred_params(), critic_params(), target_params()})
    load_params(pv, in);
}

}  // namespace mtc
