#pragma once

#include <string>
#include <utility>
#include <vector>

#include "mtc/checkpoint.hpp"
#include "mtc/rng.hpp"
#include "mtc/tensor.hpp"

namespace mtc {

// (name, tensor) pairs; the single registry used for optimizers, checkpoints,
// soft updates, and freeze/unfreeze.
using ParamVec = std::vector<std::pair<std::string, Tensor>>;

std::vector<Tensor> tensors_of(const ParamVec& pv);
void save_params(const ParamVec& pv, ckpt::Map& out);
void load_params(ParamVec& pv, const ckpt::Map& in);  // by name, shape-checked
void set_requires_grad(ParamVec& pv, bool on);
// target <- (1-tau)*target + tau*net, matched positionally (shapes must agree)
void soft_update(const ParamVec& net, ParamVec& target, double tau);

// Fully-connected layer, weights U(+-1/sqrt(fan_in)) ("uniform fan-in")
struct Linear {
  Tensor w, b;  // {in, out}, {out}
  Linear() = default;
  Linear(int in, int out, RngStream& rng);
  Tensor operator()(const Tensor& x) const { return linear(x, w, b); }
  void collect(const std::string& prefix, ParamVec& out) const;
};

// Perceptron stack: ReLU between layers, final layer linear
struct Mlp {
  std::vector<Linear> layers;
  Mlp() = default;
  Mlp(const std::vector<int>& dims, RngStream& rng);  // dims = {in, h..., out}
  Tensor operator()(const Tensor& x) const;
  void collect(const std::string& prefix, ParamVec& out) const;
};

// Gated recurrent cell with a linear output projection (see gru_step)
struct GruCell {
  GruParams p;
  int in = 0, hidden = 0, out = 0;
  GruCell() = default;
  GruCell(int in, int hidden, int out, RngStream& rng);
  std::pair<Tensor, Tensor> step(const Tensor& x, const Tensor& h) const {
    return gru_step(p, x, h);
  }
  Tensor initial_state(int batch) const { return Tensor::zeros({batch, hidden}); }
  void collect(const std::string& prefix, ParamVec& out) const;
};

struct LayerNorm {
  Tensor gain, bias;  // {n} ones, {n} zeros
  LayerNorm() = default;
  explicit LayerNorm(int n);
  Tensor operator()(const Tensor& x) const { return layer_norm(x, gain, bias); }
  void collect(const std::string& prefix, ParamVec& out) const;
};

}  // namespace mtc
