#pragma once

#include <functional>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "mtc/common.hpp"
#include "mtc/kernels.hpp"

namespace mtc {

// Shape: {} scalar, {n} vector, {m,n} matrix (row-major). size() of {} is 1.
using Shape = std::vector<int>;

inline size_t shape_size(const Shape& s) {
  size_t n = 1;
  for (int d : s) n *= size_t(d);
  return n;
}

namespace detail {
struct TensorImpl {
  Shape shape;
  std::vector<double> v;    // values
  std::vector<double> g;    // accumulated gradient (after backward)
  std::vector<double> adj;  // per-backward adjoint scratch
  uint64_t adj_epoch = 0;
  bool requires_grad = false;

  size_t size() const { return shape_size(shape); }
  // zero-initialize adj for the given backward pass if stale
  std::vector<double>& fresh_adj(uint64_t epoch) {
    if (adj_epoch != epoch) {
      adj.assign(size(), 0.0);
      adj_epoch = epoch;
    }
    return adj;
  }
  const double* adj_if_set(uint64_t epoch) const {
    return adj_epoch == epoch ? adj.data() : nullptr;
  }
};
}  // namespace detail

// Value-semantics handle to a shared tensor node. Copies alias the same data.
class Tensor {
 public:
  Tensor() = default;
  static Tensor zeros(Shape s) { return Tensor(std::move(s), 0.0, false); }
  static Tensor full(Shape s, double fill) { return Tensor(std::move(s), fill, false); }
  static Tensor scalar(double v) { return Tensor(Shape{}, v, false); }
  static Tensor from(Shape s, std::vector<double> vals, bool requires_grad = false);
  static Tensor param(Shape s, std::vector<double> vals) {
    return from(std::move(s), std::move(vals), true);
  }

  bool defined() const { return bool(p_); }
  const Shape& shape() const { return p_->shape; }
  size_t size() const { return p_->size(); }
  int rank() const { return int(p_->shape.size()); }
  // rank-2 view helpers ({}->1x1, {n}->1xn)
  int rows() const { return rank() == 2 ? p_->shape[0] : 1; }
  int cols() const {
    return rank() == 2 ? p_->shape[1] : (rank() == 1 ? p_->shape[0] : 1);
  }

  const std::vector<double>& values() const { return p_->v; }
  std::vector<double>& values_mut() { return p_->v; }
  double item() const {
    if (size() != 1) throw ShapeError("item() requires a size-1 tensor");
    return p_->v[0];
  }

  bool requires_grad() const { return p_->requires_grad; }
  void set_requires_grad(bool b) { p_->requires_grad = b; }
  bool has_grad() const { return !p_->g.empty(); }
  const std::vector<double>& grad() const;
  std::vector<double>& grad_mut();
  void zero_grad() {
    if (!p_->g.empty()) p_->g.assign(size(), 0.0);
  }

  // value copy with no graph history and requires_grad off
  Tensor detach() const;

  std::shared_ptr<detail::TensorImpl> impl() const { return p_; }

 private:
  Tensor(Shape s, double fill, bool rg);
  explicit Tensor(std::shared_ptr<detail::TensorImpl> p) : p_(std::move(p)) {}
  std::shared_ptr<detail::TensorImpl> p_;
  friend Tensor make_from_impl(std::shared_ptr<detail::TensorImpl>);
};

Tensor make_from_impl(std::shared_ptr<detail::TensorImpl> p);

// Reverse-mode tape. Constructing a Tape makes it the active recorder on this
// thread (tapes nest as a stack); ops record while one is active and at least
// one input requires grad. Training runs are single-threaded per tape.
class Tape {
 public:
  Tape();
  ~Tape();
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Accumulates d(loss)/d(t) into .grad of every requires-grad tensor the
  // tape touched. loss must be scalar. Repeated calls accumulate.
  void backward(const Tensor& loss);
  size_t num_nodes() const { return nodes_.size(); }

  static Tape* current();
  static bool recording() { return current() != nullptr; }

  // RAII guard that suspends recording (evaluation-only regions)
  struct Pause {
    Pause();
    ~Pause();
  };

  struct Node {
    std::vector<std::shared_ptr<detail::TensorImpl>> outs;
    std::function<void(uint64_t)> bwd;  // epoch-parameterized
  };
  void record(Node n, std::initializer_list<const Tensor*> ins);
  void record(Node n, const std::vector<Tensor>& ins);

 private:
  std::vector<Node> nodes_;
  std::vector<std::shared_ptr<detail::TensorImpl>> touched_;
};

// ---- ops -------------------------------------------------------------------
// All ops propagate requires_grad and record onto the active tape.

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor add(const Tensor& a, const Tensor& b);   // same shape, or one scalar
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor minimum(const Tensor& a, const Tensor& b);
Tensor add_scalar(const Tensor& a, double c);
Tensor mul_scalar(const Tensor& a, double c);
Tensor neg(const Tensor& a);
Tensor square(const Tensor& a);
Tensor exp(const Tensor& a);
Tensor log(const Tensor& a);
Tensor tanh(const Tensor& a);
Tensor relu(const Tensor& a);
Tensor softplus(const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor clamp(const Tensor& a, double lo, double hi);
Tensor sum(const Tensor& a);                    // -> {}
Tensor mean(const Tensor& a);                   // -> {}
Tensor row_sum(const Tensor& a);                // {m,n} -> {m,1}
Tensor col_sum(const Tensor& a);                // {m,n} -> {1,n}
Tensor concat_cols(const Tensor& a, const Tensor& b);
Tensor slice_cols(const Tensor& a, int c0, int c1);
Tensor slice_rows(const Tensor& a, int r0, int r1);
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b);  // x*w + b
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias,
                  double eps = 1e-5);

// Gated recurrent cell with projected output (reset/update gates, tanh
// candidate, convex blend; output y = hnew*wp + bp).
struct GruParams {
  Tensor wx;     // {in, 3*hidden}   pre-gates from input   [r|u|c]
  Tensor wh_ru;  // {hidden, 2*hidden} pre-gates from state [r|u]
  Tensor wh_c;   // {hidden, hidden} candidate from (r.*h)
  Tensor b;      // {3*hidden}
  Tensor wp;     // {hidden, out}
  Tensor bp;     // {out}
};
std::pair<Tensor, Tensor> gru_step(const GruParams& p, const Tensor& x,
                                   const Tensor& h);  // -> {y, hnew}

}  // namespace mtc
