#include "mtc/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <cstring>

namespace mtc {

namespace {
bool g_debug_checks = false;

thread_local std::vector<Tape*> t_tape_stack;

std::atomic<uint64_t> g_epoch{1};

void post_op_check(const char* op, const Tensor& out) {
  if (!g_debug_checks) return;
  if (!all_finite(out.values().data(), out.size()))
    throw NumericalFault(std::string("op '") + op + "' produced non-finite values");
}

void check_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape())
    throw ShapeError(std::string(op) + ": shape mismatch");
}
}  // namespace

bool debug_checks() { return g_debug_checks; }
void set_debug_checks(bool on) { g_debug_checks = on; }

// ----------------------------------------------------------------- Tensor

Tensor::Tensor(Shape s, double fill, bool rg) {
  p_ = std::make_shared<detail::TensorImpl>();
  p_->shape = std::move(s);
  p_->v.assign(p_->size(), fill);
  p_->requires_grad = rg;
}

Tensor Tensor::from(Shape s, std::vector<double> vals, bool requires_grad) {
  if (shape_size(s) != vals.size())
    throw ShapeError("Tensor::from: values do not match shape");
  Tensor t;
  t.p_ = std::make_shared<detail::TensorImpl>();
  t.p_->shape = std::move(s);
  t.p_->v = std::move(vals);
  t.p_->requires_grad = requires_grad;
  return t;
}

const std::vector<double>& Tensor::grad() const {
  if (p_->g.empty()) throw ShapeError("grad(): no gradient present");
  return p_->g;
}
std::vector<double>& Tensor::grad_mut() {
  if (p_->g.empty()) p_->g.assign(size(), 0.0);
  return p_->g;
}

Tensor Tensor::detach() const {
  Tensor t;
  t.p_ = std::make_shared<detail::TensorImpl>();
  t.p_->shape = p_->shape;
  t.p_->v = p_->v;
  t.p_->requires_grad = false;
  return t;
}

Tensor make_from_impl(std::shared_ptr<detail::TensorImpl> p) { return Tensor(std::move(p)); }

// ------------------------------------------------------------------- Tape

Tape::Tape() { t_tape_stack.push_back(this); }
Tape::~Tape() {
  // tapes are scoped objects; the innermost one is destroyed first
  if (!t_tape_stack.empty() && t_tape_stack.back() == this) t_tape_stack.pop_back();
  else std::erase(t_tape_stack, this);
}

Tape* Tape::current() {
  return t_tape_stack.empty() ? nullptr : t_tape_stack.back();
}

Tape::Pause::Pause() { t_tape_stack.push_back(nullptr); }
Tape::Pause::~Pause() { t_tape_stack.pop_back(); }

void Tape::record(Node n, std::initializer_list<const Tensor*> ins) {
  for (const Tensor* t : ins) touched_.push_back(t->impl());
  for (auto& o : n.outs) touched_.push_back(o);
  nodes_.push_back(std::move(n));
}
void Tape::record(Node n, const std::vector<Tensor>& ins) {
  for (const Tensor& t : ins) touched_.push_back(t.impl());
  for (auto& o : n.outs) touched_.push_back(o);
  nodes_.push_back(std::move(n));
}

void Tape::backward(const Tensor& loss) {
  if (loss.size() != 1)
    throw ShapeError("backward: loss must be a scalar (size 1)");
  const uint64_t epoch = g_epoch.fetch_add(1) + 1;
  loss.impl()->fresh_adj(epoch)[0] = 1.0;
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
    bool reached = false;
    for (auto& o : it->outs)
      if (o->adj_if_set(epoch)) {
        reached = true;
        break;
      }
    if (reached) it->bwd(epoch);
  }
  // populate .grad on every requires-grad tensor this tape touched
  for (auto& impl : touched_) {
    if (!impl->requires_grad) continue;
    const double* a = impl->adj_if_set(epoch);
    if (!a) continue;
    if (impl->g.empty()) impl->g.assign(impl->size(), 0.0);
    kern::axpy(1.0, a, impl->g.data(), impl->size());
    impl->adj_epoch = 0;  // consume: repeated touches in the list add once
  }
}

// ------------------------------------------------------------------- ops

namespace {

bool want_record(std::initializer_list<const Tensor*> ins) {
  if (!Tape::current()) return false;
  for (auto* t : ins)
    if (t->requires_grad()) return true;
  return false;
}

// requires_grad propagates only while recording is active, so tensors built
// under Tape::Pause (or with no tape at all) come out as plain constants and
// can be mixed into later recorded graphs without acting as gradient sinks
bool any_rg(std::initializer_list<const Tensor*> ins) {
  if (!Tape::recording()) return false;
  for (auto* t : ins)
    if (t->requires_grad()) return true;
  return false;
}

Tensor unary_op(const char* name, kern::Unary k, const Tensor& a) {
  Tensor out = Tensor::zeros(a.shape());
  kern::unary_map(k, a.values().data(), out.values_mut().data(), a.size());
  out.set_requires_grad(any_rg({&a}));
  post_op_check(name, out);
  if (want_record({&a})) {
    auto ai = a.impl();
    auto oi = out.impl();
    Tape::current()->record(
        {{oi},
         [ai, oi, k](uint64_t e) {
           const double* go = oi->adj_if_set(e);
           if (!go) return;
           kern::unary_grad(k, ai->v.data(), oi->v.data(), go,
                            ai->fresh_adj(e).data(), ai->size());
         }},
        {&a});
  }
  return out;
}

// broadcast: shapes equal, or one side is size-1 (scalar)
Tensor binary_op(const char* name, kern::Binary k, const Tensor& a, const Tensor& b) {
  const bool a_scalar = a.size() == 1 && b.size() != 1;
  const bool b_scalar = b.size() == 1 && a.size() != 1;
  if (!a_scalar && !b_scalar) check_same_shape(name, a, b);
  const Tensor& big = a_scalar ? b : a;
  Tensor out = Tensor::zeros(big.shape());
  const size_t n = big.size();
  double* y = out.values_mut().data();
  const double* av = a.values().data();
  const double* bv = b.values().data();
  if (!a_scalar && !b_scalar) {
    kern::binary_map(k, av, bv, y, n);
  } else {
    const double s = a_scalar ? av[0] : bv[0];
    const double* x = a_scalar ? bv : av;
    for (size_t i = 0; i < n; ++i) {
      const double lhs = a_scalar ? s : x[i];
      const double rhs = a_scalar ? x[i] : s;
      switch (k) {
        case kern::Binary::add_: y[i] = lhs + rhs; break;
        case kern::Binary::sub_: y[i] = lhs - rhs; break;
        case kern::Binary::mul_: y[i] = lhs * rhs; break;
        case kern::Binary::min_: y[i] = lhs < rhs ? lhs : rhs; break;
      }
    }
  }
  out.set_requires_grad(any_rg({&a, &b}));
  post_op_check(name, out);
  if (want_record({&a, &b})) {
    auto ai = a.impl(), bi = b.impl(), oi = out.impl();
    Tape::current()->record(
        {{oi},
         [ai, bi, oi, k, a_scalar, b_scalar](uint64_t e) {
           const double* go = oi->adj_if_set(e);
           if (!go) return;
           const size_t n = oi->size();
           auto acc_side = [&](const std::shared_ptr<detail::TensorImpl>& t,
                               bool scalar_side, bool is_a) {
             if (!t->requires_grad) return;
             auto& g = t->fresh_adj(e);
             for (size_t i = 0; i < n; ++i) {
               const double av_ = ai->v[a_scalar ? 0 : i];
               const double bv_ = bi->v[b_scalar ? 0 : i];
               double d = 0.0;
               switch (k) {
                 case kern::Binary::add_: d = 1.0; break;
                 case kern::Binary::sub_: d = is_a ? 1.0 : -1.0; break;
                 case kern::Binary::mul_: d = is_a ? bv_ : av_; break;
                 case kern::Binary::min_: {
                   const bool a_wins = av_ < bv_ || (av_ == bv_ && is_a);
                   d = (a_wins == is_a) ? 1.0 : 0.0;
                   break;
                 }
               }
               g[scalar_side ? 0 : i] += d * go[i];
             }
           };
           acc_side(ai, a_scalar, true);
           acc_side(bi, b_scalar, false);
         }},
        {&a, &b});
  }
  return out;
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) { return binary_op("add", kern::Binary::add_, a, b); }
Tensor sub(const Tensor& a, const Tensor& b) { return binary_op("sub", kern::Binary::sub_, a, b); }
Tensor mul(const Tensor& a, const Tensor& b) { return binary_op("mul", kern::Binary::mul_, a, b); }
Tensor minimum(const Tensor& a, const Tensor& b) { return binary_op("minimum", kern::Binary::min_, a, b); }

Tensor neg(const Tensor& a) { return unary_op("neg", kern::Unary::neg_, a); }
Tensor square(const Tensor& a) { return unary_op("square", kern::Unary::square_, a); }
Tensor exp(const Tensor& a) { return unary_op("exp", kern::Unary::exp_, a); }
Tensor log(const Tensor& a) { return unary_op("log", kern::Unary::log_, a); }
Tensor tanh(const Tensor& a) { return unary_op("tanh", kern::Unary::tanh_, a); }
Tensor relu(const Tensor& a) { return unary_op("relu", kern::Unary::relu_, a); }
Tensor softplus(const Tensor& a) { return unary_op("softplus", kern::Unary::softplus_, a); }
Tensor sigmoid(const Tensor& a) { return unary_op("sigmoid", kern::Unary::sigmoid_, a); }

Tensor add_scalar(const Tensor& a, double c) {
  Tensor out = Tensor::zeros(a.shape());
  const double* x = a.values().data();
  double* y = out.values_mut().data();
  for (size_t i = 0; i < a.size(); ++i) y[i] = x[i] + c;
  out.set_requires_grad(any_rg({&a}));
  post_op_check("add_scalar", out);
  if (want_record({&a})) {
    auto ai = a.impl();
    auto oi = out.impl();
    Tape::current()->record(
        {{oi},
         [ai, oi](uint64_t e) {
           const double* go = oi->adj_if_set(e);
           if (!go) return;
           kern::axpy(1.0, go, ai->fresh_adj(e).data(), ai->size());
         }},
        {&a});
  }
  return out;
}

Tensor mul_scalar(const Tensor& a, double c) {
  Tensor out = Tensor::zeros(a.shape());
  const double* x = a.values().data();
  double* y = out.values_mut().data();
  for (size_t i = 0; i < a.size(); ++i) y[i] = x[i] * c;
  out.set_requires_grad(any_rg({&a}));
  post_op_check("mul_scalar", out);
  if (want_record({&a})) {
    auto ai = a.impl();
    auto oi = out.impl();
    Tape::current()->record(
        {{oi},
         [ai, oi, c](uint64_t e) {
           const double* go = oi->adj_if_set(e);
           if (!go) return;
           kern::axpy(c, go, ai->fresh_adj(e).data(), ai->size());
         }},
        {&a});
  }
  return out;
}

Tensor clamp(const Tensor& a, double lo, double hi) {
  if (lo > hi) throw ShapeError("clamp: lo > hi");
  Tensor out = Tensor::zeros(a.shape());
  const double* x = a.values().data();
  double* y = out.values_mut().data();
  for (size_t i = 0; i < a.size(); ++i) y[i] = std::min(std::max(x[i], lo), hi);
  out.set_requires_grad(any_rg({&a}));
  post_op_check("clamp", out);
  if (want_record({&a})) {
    auto ai = a.impl();
    auto oi = out.impl();
    Tape::current()->record(
        {{oi},
         [ai, oi, lo, hi](uint64_t e) {
           const double* go = oi->adj_if_set(e);
           if (!go) return;
           auto& g = ai->fresh_adj(e);
           for (size_t i = 0; i < ai->size(); ++i)
             if (ai->v[i] >= lo && ai->v[i] <= hi) g[i] += go[i];
         }},
        {&a});
  }
  return out;
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2) throw ShapeError("matmul: rank-2 tensors required");
  const int m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
  if (b.shape()[0] != k) throw ShapeError("matmul: inner dimensions disagree");
  Tensor out = Tensor::zeros({m, n});
  kern::matmul(a.values().data(), b.values().data(), out.values_mut().data(),
               m, n, k, false, false, false);
  out.set_requires_grad(any_rg({&a, &b}));
  post_op_check("matmul", out);
  if (want_record({&a, &b})) {
    auto ai = a.impl(), bi = b.impl(), oi = out.impl();
    Tape::current()->record(
        {{oi},
         [ai, bi, oi, m, n, k](uint64_t e) {
           const double* go = oi->adj_if_set(e);
           if (!go) return;
           if (ai->requires_grad)  // ga += go * b^T
             kern::matmul(go, bi->v.data(), ai->fresh_adj(e).data(), m, k, n,
                          false, true, true);
           if (bi->requires_grad)  // gb += a^T * go
             kern::matmul(ai->v.data(), go, bi->fresh_adj(e).data(), k, n, m,
                          true, false, true);
         }},
        {&a, &b});
  }
  return out;
}

Tensor sum(const Tensor& a) {
  Tensor out = Tensor::scalar(kern::sum(a.values().data(), a.size()));
  out.set_requires_grad(any_rg({&a}));
  post_op_check("sum", out);
  if (want_record({&a})) {
    auto ai = a.impl();
    auto oi = out.impl();
    Tape::current()->record(
        {{oi},
         [ai, oi](uint64_t e) {
           const double* go = oi->adj_if_set(e);
           if (!go) return;
           auto& g = ai->fresh_adj(e);
           for (size_t i = 0; i < ai->size(); ++i) g[i] += go[0];
         }},
        {&a});
  }
  return out;
}

Tensor mean(const Tensor& a) {
  const double n = double(a.size());
  Tensor out = Tensor::scalar(kern::sum(a.values().data(), a.size()) / n);
  out.set_requires_grad(any_rg({&a}));
  post_op_check("mean", out);
  if (want_record({&a})) {
    auto ai = a.impl();
    auto oi = out.impl();
    Tape::current()->record(
        {{oi},
         [ai, oi, n](uint64_t e) {
           const double* go = oi->adj_if_set(e);
           if (!go) return;
           auto& g = ai->fresh_adj(e);
           for (size_t i = 0; i < ai->size(); ++i) g[i] += go[0] / n;
         }},
        {&a});
  }
  return out;
}

Tensor row_sum(const Tensor& a) {
  if (a.rank() != 2) throw ShapeError("row_sum: rank-2 tensor required");
  const int m = a.shape()[0], n = a.shape()[1];
  Tensor out = Tensor::zeros({m, 1});
  kern::row_sum(a.values().data(), out.values_mut().data(), m, n, false);
  out.set_requires_grad(any_rg({&a}));
  post_op_check("row_sum", out);
  if (want_record({&a})) {
    auto ai = a.impl();
    auto oi = out.impl();
    Tape::current()->record(
        {{oi},
         [ai, oi, m, n](uint64_t e) {
           const double* go = oi->adj_if_set(e);
           if (!go) return;
           auto& g = ai->fresh_adj(e);
           for (int i = 0; i < m; ++i)
             for (int j = 0; j < n; ++j) g[size_t(i) * n + j] += go[i];
         }},
        {&a});
  }
  return out;
}

Tensor col_sum(const Tensor& a) {
  if (a.rank() != 2) throw ShapeError("col_sum: rank-2 tensor required");
  const int m = a.shape()[0], n = a.shape()[1];
  Tensor out = Tensor::zeros({1, n});
  kern::col_sum(a.values().data(), out.values_mut().data(), m, n, false);
  out.set_requires_grad(any_rg({&a}));
  post_op_check("col_sum", out);
  if (want_record({&a})) {
    auto ai = a.impl();
    auto oi = out.impl();
    Tape::current()->record(
        {{oi},
         [ai, oi, m, n](uint64_t e) {
           const double* go = oi->adj_if_set(e);
           if (!go) return;
           auto& g = ai->fresh_adj(e);
           for (int i = 0; i < m; ++i)
             for (int j = 0; j < n; ++j) g[size_t(i) * n + j] += go[j];
         }},
        {&a});
  }
  return out;
}

Tensor concat_cols(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.shape()[0] != b.shape()[0])
    throw ShapeError("concat_cols: rank-2 tensors with equal row counts required");
  const int m = a.shape()[0], na = a.shape()[1], nb = b.shape()[1];
  Tensor out = Tensor::zeros({m, na + nb});
  double* y = out.values_mut().data();
  const double* av = a.values().data();
  const double* bv = b.values().data();
  for (int i = 0; i < m; ++i) {
    std::memcpy(y + size_t(i) * (na + nb), av + size_t(i) * na, sizeof(double) * na);
    std::memcpy(y + size_t(i) * (na + nb) + na, bv + size_t(i) * nb, sizeof(double) * nb);
  }
  out.set_requires_grad(any_rg({&a, &b}));
  if (want_record({&a, &b})) {
    auto ai = a.impl(), bi = b.impl(), oi = out.impl();
    Tape::current()->record(
        {{oi},
         [ai, bi, oi, m, na, nb](uint64_t e) {
           const double* go = oi->adj_if_set(e);
           if (!go) return;
           if (ai->requires_grad) {
             auto& g = ai->fresh_adj(e);
             for (int i = 0; i < m; ++i)
               for (int j = 0; j < na; ++j)
                 g[size_t(i) * na + j] += go[size_t(i) * (na + nb) + j];
           }
           if (bi->requires_grad) {
             auto& g = bi->fresh_adj(e);
             for (int i = 0; i < m; ++i)
               for (int j = 0; j < nb; ++j)
                 g[size_t(i) * nb + j] += go[size_t(i) * (na + nb) + na + j];
           }
         }},
        {&a, &b});
  }
  return out;
}

Tensor slice_cols(const Tensor& a, int c0, int c1) {
  if (a.rank() != 2) throw ShapeError("slice_cols: rank-2 tensor required");
  const int m = a.shape()[0], n = a.shape()[1];
  if (c0 < 0 || c1 > n || c0 >= c1) throw ShapeError("slice_cols: bad column range");
  const int w = c1 - c0;
  Tensor out = Tensor::zeros({m, w});
  double* y = out.values_mut().data();
  const double* x = a.values().data();
  for (int i = 0; i < m; ++i)
    std::memcpy(y + size_t(i) * w, x + size_t(i) * n + c0, sizeof(double) * w);
  out.set_requires_grad(any_rg({&a}));
  if (want_record({&a})) {
    auto ai = a.impl();
    auto oi = out.impl();
    Tape::current()->record(
        {{oi},
         [ai, oi, m, n, c0, w](uint64_t e) {
           const double* go = oi->adj_if_set(e);
           if (!go) return;
           auto& g = ai->fresh_adj(e);
           for (int i = 0; i < m; ++i)
             for (int j = 0; j < w; ++j)
               g[size_t(i) * n + c0 + j] += go[size_t(i) * w + j];
         }},
        {&a});
  }
  return out;
}

Tensor slice_rows(const Tensor& a, int r0, int r1) {
  if (a.rank() != 2) throw ShapeError("slice_rows: rank-2 tensor required");
  const int m = a.shape()[0], n = a.shape()[1];
  if (r0 < 0 || r1 > m || r0 >= r1) throw ShapeError("slice_rows: bad row range");
  const int h = r1 - r0;
  Tensor out = Tensor::zeros({h, n});
  std::memcpy(out.values_mut().data(), a.values().data() + size_t(r0) * n,
              sizeof(double) * size_t(h) * n);
  out.set_requires_grad(any_rg({&a}));
  if (want_record({&a})) {
    auto ai = a.impl();
    auto oi = out.impl();
    Tape::current()->record(
        {{oi},
         [ai, oi, n, r0, h](uint64_t e) {
           const double* go = oi->adj_if_set(e);
           if (!go) return;
           kern::axpy(1.0, go, ai->fresh_adj(e).data() + size_t(r0) * n,
                      size_t(h) * n);
         }},
        {&a});
  }
  return out;
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) {
  if (x.rank() != 2 || w.rank() != 2 || b.rank() != 1)
    throw ShapeError("linear: expected x{m,k}, w{k,n}, b{n}");
  const int m = x.shape()[0], k = x.shape()[1], n = w.shape()[1];
  if (w.shape()[0] != k || b.shape()[0] != n)
    throw ShapeError("linear: dimension mismatch");
  Tensor out = Tensor::zeros({m, n});
  kern::matmul(x.values().data(), w.values().data(), out.values_mut().data(),
               m, n, k, false, false, false);
  kern::add_row_vec(out.values_mut().data(), b.values().data(), m, n);
  out.set_requires_grad(any_rg({&x, &w, &b}));
  post_op_check("linear", out);
  if (want_record({&x, &w, &b})) {
    auto xi = x.impl(), wi = w.impl(), bi = b.impl(), oi = out.impl();
    Tape::current()->record(
        {{oi},
         [xi, wi, bi, oi, m, n, k](uint64_t e) {
           const double* go = oi->adj_if_set(e);
           if (!go) return;
           if (xi->requires_grad)
             kern::matmul(go, wi->v.data(), xi->fresh_adj(e).data(), m, k, n,
                          false, true, true);
           if (wi->requires_grad)
             kern::matmul(xi->v.data(), go, wi->fresh_adj(e).data(), k, n, m,
                          true, false, true);
           if (bi->requires_grad)
             kern::col_sum(go, bi->fresh_adj(e).data(), m, n, true);
         }},
        {&x, &w, &b});
  }
  return out;
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
  if (x.rank() != 2 || gain.rank() != 1 || bias.rank() != 1)
    throw ShapeError("layer_norm: expected x{m,n}, gain{n}, bias{n}");
  const int m = x.shape()[0], n = x.shape()[1];
  if (gain.shape()[0] != n || bias.shape()[0] != n)
    throw ShapeError("layer_norm: dimension mismatch");
  Tensor out = Tensor::zeros({m, n});
  auto mu = std::make_shared<std::vector<double>>(m);
  auto rstd = std::make_shared<std::vector<double>>(m);
  kern::layer_norm(x.values().data(), gain.values().data(), bias.values().data(),
                   eps, out.values_mut().data(), mu->data(), rstd->data(), m, n);
  out.set_requires_grad(any_rg({&x, &gain, &bias}));
  post_op_check("layer_norm", out);
  if (want_record({&x, &gain, &bias})) {
    auto xi = x.impl(), gi = gain.impl(), bi = bias.impl(), oi = out.impl();
    Tape::current()->record(
        {{oi},
         [xi, gi, bi, oi, mu, rstd, m, n](uint64_t e) {
           const double* go = oi->adj_if_set(e);
           if (!go) return;
           // dgain/dbias go through scratch when those params are frozen
           std::vector<double> scratch_g, scratch_b;
           double* dg;
           double* db;
           if (gi->requires_grad) dg = gi->fresh_adj(e).data();
           else {
             scratch_g.assign(n, 0.0);
             dg = scratch_g.data();
           }
           if (bi->requires_grad) db = bi->fresh_adj(e).data();
           else {
             scratch_b.assign(n, 0.0);
             db = scratch_b.data();
           }
           std::vector<double> dx_scratch;
           double* dx;
           if (xi->requires_grad) dx = xi->fresh_adj(e).data();
           else {
             dx_scratch.assign(size_t(m) * n, 0.0);
             dx = dx_scratch.data();
           }
           kern::layer_norm_bwd(xi->v.data(), gi->v.data(), mu->data(),
                                rstd->data(), go, dx, dg, db, m, n);
         }},
        {&x, &gain, &bias});
  }
  return out;
}

std::pair<Tensor, Tensor> gru_step(const GruParams& p, const Tensor& x, const Tensor& h) {
  if (x.rank() != 2 || h.rank() != 2) throw ShapeError("gru_step: rank-2 x and h required");
  const int batch = x.shape()[0];
  const int in = x.shape()[1];
  const int hidden = p.wh_c.shape()[0];
  const int out_dim = p.wp.shape()[1];
  if (h.shape()[0] != batch || h.shape()[1] != hidden)
    throw ShapeError("gru_step: hidden state shape mismatch");
  if (p.wx.shape()[0] != in || p.wx.shape()[1] != 3 * hidden ||
      p.wh_ru.shape()[0] != hidden || p.wh_ru.shape()[1] != 2 * hidden ||
      p.wh_c.shape()[1] != hidden || p.b.shape()[0] != 3 * hidden ||
      p.wp.shape()[0] != hidden || p.bp.shape()[0] != out_dim)
    throw ShapeError("gru_step: parameter shape mismatch");

  const size_t bh = size_t(batch) * hidden;
  std::vector<double> gx(size_t(batch) * 3 * hidden);
  std::vector<double> ghru(size_t(batch) * 2 * hidden);
  kern::matmul(x.values().data(), p.wx.values().data(), gx.data(), batch,
               3 * hidden, in, false, false, false);
  kern::matmul(h.values().data(), p.wh_ru.values().data(), ghru.data(), batch,
               2 * hidden, hidden, false, false, false);
  auto r = std::make_shared<std::vector<double>>(bh);
  auto u = std::make_shared<std::vector<double>>(bh);
  auto rh = std::make_shared<std::vector<double>>(bh);
  kern::gru_gates(gx.data(), ghru.data(), p.b.values().data(),
                  h.values().data(), r->data(), u->data(), rh->data(), batch, hidden);
  std::vector<double> gc(bh);
  kern::matmul(rh->data(), p.wh_c.values().data(), gc.data(), batch, hidden,
               hidden, false, false, false);
  auto c = std::make_shared<std::vector<double>>(bh);
  Tensor hnew = Tensor::zeros({batch, hidden});
  kern::gru_blend(gx.data(), gc.data(), p.b.values().data() + 2 * hidden,
                  h.values().data(), u->data(), c->data(),
                  hnew.values_mut().data(), batch, hidden);
  Tensor y = Tensor::zeros({batch, out_dim});
  kern::matmul(hnew.values().data(), p.wp.values().data(), y.values_mut().data(),
               batch, out_dim, hidden, false, false, false);
  kern::add_row_vec(y.values_mut().data(), p.bp.values().data(), batch, out_dim);

  const bool rg = any_rg({&x, &h, &p.wx, &p.wh_ru, &p.wh_c, &p.b, &p.wp, &p.bp});
  y.set_requires_grad(rg);
  hnew.set_requires_grad(rg);
  post_op_check("gru_step", y);
  post_op_check("gru_step", hnew);

  if (Tape::current() && rg) {
    auto xi = x.impl(), hi = h.impl();
    auto wx = p.wx.impl(), whru = p.wh_ru.impl(), whc = p.wh_c.impl();
    auto bb = p.b.impl(), wp = p.wp.impl(), bp = p.bp.impl();
    auto yi = y.impl(), hni = hnew.impl();
    Tape::current()->record(
        {{yi, hni},
         [=](uint64_t e) {
           const double* dy = yi->adj_if_set(e);
           const double* dhn_ext = hni->adj_if_set(e);
           const size_t bh2 = size_t(batch) * hidden;
           std::vector<double> dhnew(bh2, 0.0);
           if (dhn_ext) dhnew.assign(dhn_ext, dhn_ext + bh2);
           if (dy) {
             kern::matmul(dy, wp->v.data(), dhnew.data(), batch, hidden,
                          out_dim, false, true, true);
             if (wp->requires_grad)
               kern::matmul(hni->v.data(), dy, wp->fresh_adj(e).data(), hidden,
                            out_dim, batch, true, false, true);
             if (bp->requires_grad)
               kern::col_sum(dy, bp->fresh_adj(e).data(), batch, out_dim, true);
           }
           std::vector<double> du(bh2), dpre_c(bh2), dh(bh2, 0.0);
           kern::gru_blend_bwd(dhnew.data(), hi->v.data(), u->data(), c->data(),
                               du.data(), dpre_c.data(), dh.data(), batch, hidden);
           if (whc->requires_grad)
             kern::matmul(rh->data(), dpre_c.data(), whc->fresh_adj(e).data(),
                          hidden, hidden, batch, true, false, true);
           std::vector<double> drh(bh2);
           kern::matmul(dpre_c.data(), whc->v.data(), drh.data(), batch, hidden,
                        hidden, false, true, false);
           std::vector<double> dpre_r(bh2), dpre_u(bh2);
           kern::gru_gates_bwd(drh.data(), du.data(), hi->v.data(), r->data(),
                               u->data(), dpre_r.data(), dpre_u.data(),
                               dh.data(), batch, hidden);
           // assemble [dpre_r | dpre_u | dpre_c] and [dpre_r | dpre_u]
           std::vector<double> dgx(size_t(batch) * 3 * hidden);
           std::vector<double> dghru(size_t(batch) * 2 * hidden);
           for (int i = 0; i < batch; ++i) {
             double* gi = dgx.data() + size_t(i) * 3 * hidden;
             double* hi2 = dghru.data() + size_t(i) * 2 * hidden;
             std::memcpy(gi, dpre_r.data() + size_t(i) * hidden, sizeof(double) * hidden);
             std::memcpy(gi + hidden, dpre_u.data() + size_t(i) * hidden, sizeof(double) * hidden);
             std::memcpy(gi + 2 * hidden, dpre_c.data() + size_t(i) * hidden, sizeof(double) * hidden);
             std::memcpy(hi2, dpre_r.data() + size_t(i) * hidden, sizeof(double) * hidden);
             std::memcpy(hi2 + hidden, dpre_u.data() + size_t(i) * hidden, sizeof(double) * hidden);
           }
           if (xi->requires_grad)
             kern::matmul(dgx.data(), wx->v.data(), xi->fresh_adj(e).data(),
                          batch, in, 3 * hidden, false, true, true);
           if (wx->requires_grad)
             kern::matmul(xi->v.data(), dgx.data(), wx->fresh_adj(e).data(), in,
                          3 * hidden, batch, true, false, true);
           if (bb->requires_grad)
             kern::col_sum(dgx.data(), bb->fresh_adj(e).data(), batch, 3 * hidden, true);
           if (whru->requires_grad)
             kern::matmul(hi->v.data(), dghru.data(), whru->fresh_adj(e).data(),
                          hidden, 2 * hidden, batch, true, false, true);
           if (hi->requires_grad) {
             auto& gh = hi->fresh_adj(e);
             kern::matmul(dghru.data(), whru->v.data(), gh.data(), batch,
                          hidden, 2 * hidden, false, true, true);
             kern::axpy(1.0, dh.data(), gh.data(), bh2);
           }
         }},
        {&x, &h, &p.wx, &p.wh_ru, &p.wh_c, &p.b, &p.wp, &p.bp});
  }
  return {y, hnew};
}

}  // namespace mtc
