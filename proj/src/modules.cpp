#include "mtc/modules.hpp"

#include <cmath>

#include "mtc/common.hpp"
#include "mtc/kernels.hpp"

namespace mtc {

std::vector<Tensor> tensors_of(const ParamVec& pv) {
  std::vector<Tensor> out;
  out.reserve(pv.size());
  for (const auto& [name, t] : pv) out.push_back(t);
  return out;
}

void save_params(const ParamVec& pv, ckpt::Map& out) {
  for (const auto& [name, t] : pv) {
    if (out.count(name)) throw DataError("save_params: duplicate name " + name);
    out.emplace(name, t.detach());
  }
}

void load_params(ParamVec& pv, const ckpt::Map& in) {
  for (auto& [name, t] : pv) ckpt::copy_into(in, name, t);
}

void set_requires_grad(ParamVec& pv, bool on) {
  for (auto& [name, t] : pv) t.set_requires_grad(on);
}

void soft_update(const ParamVec& net, ParamVec& target, double tau) {
  require(net.size() == target.size(), "soft_update: parameter count mismatch");
  for (size_t i = 0; i < net.size(); ++i) {
    const Tensor& src = net[i].second;
    Tensor& dst = target[i].second;
    if (src.shape() != dst.shape()) throw ShapeError("soft_update: shape mismatch");
    double* d = dst.values_mut().data();
    const double* s = src.values().data();
    for (size_t j = 0; j < src.size(); ++j) d[j] = (1.0 - tau) * d[j] + tau * s[j];
  }
}

namespace {
std::vector<double> uniform_init(size_t n, double bound, RngStream& rng) {
  std::vector<double> v(n);
  for (auto& x : v) x = rng.uniform(-bound, bound);
  return v;
}
}  // namespace

Linear::Linear(int in, int out, RngStream& rng) {
  const double bound = 1.0 / std::sqrt(double(in));
  w = Tensor::param({in, out}, uniform_init(size_t(in) * out, bound, rng));
  b = Tensor::param({out}, uniform_init(size_t(out), bound, rng));
}

void Linear::collect(const std::string& prefix, ParamVec& out) const {
  out.emplace_back(prefix + "/w", w);
  out.emplace_back(prefix + "/b", b);
}

Mlp::Mlp(const std::vector<int>& dims, RngStream& rng) {
  require(dims.size() >= 2, "Mlp: need at least input and output dims");
  for (size_t i = 0; i + 1 < dims.size(); ++i)
    layers.emplace_back(dims[i], dims[i + 1], rng);
}

Tensor Mlp::operator()(const Tensor& x) const {
  Tensor h = x;
  for (size_t i = 0; i < layers.size(); ++i) {
    h = layers[i](h);
    if (i + 1 < layers.size()) h = relu(h);
  }
  return h;
}

void Mlp::collect(const std::string& prefix, ParamVec& out) const {
  for (size_t i = 0; i < layers.size(); ++i)
    layers[i].collect(prefix + "/" + std::to_string(i), out);
}

GruCell::GruCell(int in_, int hidden_, int out_, RngStream& rng)
    : in(in_), hidden(hidden_), out(out_) {
  const double bound = 1.0 / std::sqrt(double(hidden_));
  p.wx = Tensor::param({in_, 3 * hidden_}, uniform_init(size_t(in_) * 3 * hidden_, bound, rng));
  p.wh_ru = Tensor::param({hidden_, 2 * hidden_},
                          uniform_init(size_t(hidden_) * 2 * hidden_, bound, rng));
  p.wh_c = Tensor::param({hidden_, hidden_},
                         uniform_init(size_t(hidden_) * hidden_, bound, rng));
  p.b = Tensor::param({3 * hidden_}, uniform_init(size_t(3) * hidden_, bound, rng));
  p.wp = Tensor::param({hidden_, out_}, uniform_init(size_t(hidden_) * out_, bound, rng));
  p.bp = Tensor::param({out_}, uniform_init(size_t(out_), bound, rng));
}

void GruCell::collect(const std::string& prefix, ParamVec& out_pv) const {
  out_pv.emplace_back(prefix + "/wx", p.wx);
  out_pv.emplace_back(prefix + "/wh_ru", p.wh_ru);
  out_pv.emplace_back(prefix + "/wh_c", p.wh_c);
  out_pv.emplace_back(prefix + "/b", p.b);
  out_pv.emplace_back(prefix + "/wp", p.wp);
  out_pv.emplace_back(prefix + "/bp", p.bp);
}

LayerNorm::LayerNorm(int n) {
  gain = Tensor::param({n}, std::vector<double>(size_t(n), 1.0));
  bias = Tensor::param({n}, std::vector<double>(size_t(n), 0.0));
}

void LayerNorm::collect(const std::string& prefix, ParamVec& out) const {
  out.emplace_back(prefix + "/gain", gain);
  out.emplace_back(prefix + "/bias", bias);
}

}  // namespace mtc
