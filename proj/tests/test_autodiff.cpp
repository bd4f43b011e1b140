#include <cmath>
#include <cstring>
#include <functional>
#include <string>
#include <vector>

#include "doctest.h"
#include "mtc/adam.hpp"
#include "mtc/kernels.hpp"
#include "mtc/modules.hpp"
#include "mtc/rng.hpp"
#include "mtc/tensor.hpp"

using namespace mtc;

namespace {

std::vector<double> rand_vals(Shape s, RngStream& rng, double lo = -2, double hi = 2) {
  std::vector<double> v(shape_size(s));
  for (auto& x : v) x = rng.uniform(lo, hi);
  return v;
}

Tensor rand_param(Shape s, RngStream& rng, double lo = -2, double hi = 2) {
  return Tensor::param(s, rand_vals(s, rng, lo, hi));
}

Tensor rand_const(Shape s, RngStream& rng) {
  return Tensor::from(s, rand_vals(s, rng), false);
}

// Central-difference check of d(loss)/d(input) for every element of every
// requires-grad input. Mixed absolute/relative criterion.
void fd_check(const std::string& name,
              const std::function<Tensor(const std::vector<Tensor>&)>& f,
              std::vector<Tensor> inputs, double tol = 1e-4, double h = 1e-5) {
  INFO("op: " << name);
  {
    Tape tape;
    Tensor loss = f(inputs);
    REQUIRE(loss.size() == 1);
    tape.backward(loss);
  }
  for (size_t t = 0; t < inputs.size(); ++t) {
    Tensor& x = inputs[t];
    if (!x.requires_grad()) continue;
    std::vector<double> g =
        x.has_grad() ? x.grad() : std::vector<double>(x.size(), 0.0);
    auto& v = x.values_mut();
    for (size_t i = 0; i < v.size(); ++i) {
      const double orig = v[i];
      v[i] = orig + h;
      const double fp = f(inputs).item();
      v[i] = orig - h;
      const double fm = f(inputs).item();
      v[i] = orig;
      const double fd = (fp - fm) / (2 * h);
      const double scale = std::max({1.0, std::fabs(g[i]), std::fabs(fd)});
      INFO("input " << t << " element " << i << " analytic " << g[i] << " fd " << fd);
      CHECK(std::fabs(g[i] - fd) <= tol * scale);
    }
  }
}

// Reduce an arbitrary-shaped output to a scalar with fixed weights so the
// backward pass sees a dense, non-uniform adjoint.
Tensor weighted(const Tensor& y, const Tensor& w) { return sum(mul(y, w)); }

}  // namespace

TEST_CASE("every differentiable op passes a finite-difference check") {
  RngStream rng(101, "test/fd");
  const Tensor w23 = rand_const({2, 3}, rng);
  const Tensor w32 = rand_const({3, 2}, rng);
  const Tensor w34 = rand_const({3, 4}, rng);
  const Tensor w31 = rand_const({3, 1}, rng);
  const Tensor w14 = rand_const({1, 4}, rng);
  const Tensor w25 = rand_const({2, 5}, rng);
  const Tensor w22 = rand_const({2, 2}, rng);
  const Tensor w35 = rand_const({3, 5}, rng);

  fd_check("add", [&](const std::vector<Tensor>& in) {
    return weighted(add(in[0], in[1]), w23);
  }, {rand_param({2, 3}, rng), rand_param({2, 3}, rng)});

  fd_check("sub", [&](const std::vector<Tensor>& in) {
    return weighted(sub(in[0], in[1]), w23);
  }, {rand_param({2, 3}, rng), rand_param({2, 3}, rng)});

  fd_check("mul", [&](const std::vector<Tensor>& in) {
    return weighted(mul(in[0], in[1]), w23);
  }, {rand_param({2, 3}, rng), rand_param({2, 3}, rng)});

  // keep the two operands separated so the min kink is never straddled
  fd_check("minimum", [&](const std::vector<Tensor>& in) {
    return weighted(minimum(in[0], in[1]), w23);
  }, {Tensor::param({2, 3}, {-1.5, 0.4, 2.0, -0.3, 1.1, -2.0}),
      Tensor::param({2, 3}, {0.5, -1.2, 0.8, 1.4, -0.9, 1.7})});

  fd_check("add_scalar", [&](const std::vector<Tensor>& in) {
    return weighted(add_scalar(in[0], 0.7), w23);
  }, {rand_param({2, 3}, rng)});

  fd_check("mul_scalar", [&](const std::vector<Tensor>& in) {
    return weighted(mul_scalar(in[0], -1.3), w23);
  }, {rand_param({2, 3}, rng)});

  fd_check("neg", [&](const std::vector<Tensor>& in) {
    return weighted(neg(in[0]), w23);
  }, {rand_param({2, 3}, rng)});

  fd_check("square", [&](const std::vector<Tensor>& in) {
    return weighted(square(in[0]), w23);
  }, {rand_param({2, 3}, rng)});

  fd_check("exp", [&](const std::vector<Tensor>& in) {
    return weighted(exp(in[0]), w23);
  }, {rand_param({2, 3}, rng)});

  fd_check("log", [&](const std::vector<Tensor>& in) {
    return weighted(log(in[0]), w23);
  }, {rand_param({2, 3}, rng, 0.2, 3.0)});

  fd_check("tanh", [&](const std::vector<Tensor>& in) {
    return weighted(tanh(in[0]), w23);
  }, {rand_param({2, 3}, rng)});

  // inputs kept away from the kink at zero
  fd_check("relu", [&](const std::vector<Tensor>& in) {
    return weighted(relu(in[0]), w23);
  }, {Tensor::param({2, 3}, {-1.5, 0.4, 2.0, -0.3, 1.1, -2.0})});

  fd_check("softplus", [&](const std::vector<Tensor>& in) {
    return weighted(softplus(in[0]), w23);
  }, {rand_param({2, 3}, rng)});

  fd_check("sigmoid", [&](const std::vector<Tensor>& in) {
    return weighted(sigmoid(in[0]), w23);
  }, {rand_param({2, 3}, rng)});

  // inputs kept away from the clamp boundaries at +/-1.5
  fd_check("clamp", [&](const std::vector<Tensor>& in) {
    return weighted(clamp(in[0], -1.5, 1.5), w23);
  }, {Tensor::param({2, 3}, {-1.9, 0.4, 1.9, -0.3, 1.1, -1.2})});

  fd_check("sum", [&](const std::vector<Tensor>& in) {
    return sum(in[0]);
  }, {rand_param({2, 3}, rng)});

  fd_check("mean", [&](const std::vector<Tensor>& in) {
    return mean(in[0]);
  }, {rand_param({2, 3}, rng)});

  fd_check("row_sum", [&](const std::vector<Tensor>& in) {
    return weighted(row_sum(in[0]), w31);
  }, {rand_param({3, 4}, rng)});

  fd_check("col_sum", [&](const std::vector<Tensor>& in) {
    return weighted(col_sum(in[0]), w14);
  }, {rand_param({3, 4}, rng)});

  fd_check("matmul", [&](const std::vector<Tensor>& in) {
    return weighted(matmul(in[0], in[1]), w32);
  }, {rand_param({3, 4}, rng), rand_param({4, 2}, rng)});

  fd_check("concat_cols", [&](const std::vector<Tensor>& in) {
    return weighted(concat_cols(in[0], in[1]), w25);
  }, {rand_param({2, 3}, rng), rand_param({2, 2}, rng)});

  fd_check("slice_cols", [&](const std::vector<Tensor>& in) {
    return weighted(slice_cols(in[0], 1, 5), w34);
  }, {rand_param({3, 5}, rng)});

  fd_check("slice_rows", [&](const std::vector<Tensor>& in) {
    return weighted(slice_rows(in[0], 1, 3), w23);
  }, {rand_param({5, 3}, rng)});

  fd_check("linear", [&](const std::vector<Tensor>& in) {
    return weighted(linear(in[0], in[1], in[2]), w32);
  }, {rand_param({3, 4}, rng), rand_param({4, 2}, rng), rand_param({2}, rng)});

  fd_check("layer_norm", [&](const std::vector<Tensor>& in) {
    return weighted(layer_norm(in[0], in[1], in[2]), w35);
  }, {rand_param({3, 5}, rng), rand_param({5}, rng, 0.5, 1.5),
      rand_param({5}, rng)});
}

TEST_CASE("gru step gradients pass finite differences") {
  RngStream rng(102, "test/fd-gru");
  const int B = 3, in_dim = 4, hidden = 5, out_dim = 2;
  GruParams p{rand_param({in_dim, 3 * hidden}, rng, -0.5, 0.5),
              rand_param({hidden, 2 * hidden}, rng, -0.5, 0.5),
              rand_param({hidden, hidden}, rng, -0.5, 0.5),
              rand_param({3 * hidden}, rng, -0.5, 0.5),
              rand_param({hidden, out_dim}, rng, -0.5, 0.5),
              rand_param({out_dim}, rng, -0.5, 0.5)};
  const Tensor wy = rand_const({B, out_dim}, rng);
  const Tensor wh = rand_const({B, hidden}, rng);

  SUBCASE("single step") {
    fd_check("gru_step", [&](const std::vector<Tensor>& in) {
      auto [y, hn] = gru_step({in[0], in[1], in[2], in[3], in[4], in[5]}, in[6], in[7]);
      return add(sum(mul(y, wy)), sum(mul(hn, wh)));
    }, {p.wx, p.wh_ru, p.wh_c, p.b, p.wp, p.bp,
        rand_param({B, in_dim}, rng), rand_param({B, hidden}, rng)}, 1e-4);
  }

  SUBCASE("eight-step unroll") {
    std::vector<Tensor> inputs = {p.wx, p.wh_ru, p.wh_c, p.b, p.wp, p.bp};
    for (int t = 0; t < 8; ++t) inputs.push_back(rand_param({B, in_dim}, rng));
    fd_check("gru_unroll8", [&](const std::vector<Tensor>& in) {
      GruParams q{in[0], in[1], in[2], in[3], in[4], in[5]};
      Tensor h = Tensor::zeros({B, hidden});
      Tensor acc = Tensor::scalar(0.0);
      for (int t = 0; t < 8; ++t) {
        auto [y, hn] = gru_step(q, in[6 + t], h);
        h = hn;
        acc = add(acc, sum(mul(y, wy)));
      }
      return add(acc, sum(mul(h, wh)));
    }, inputs, 1e-3);
  }
}

TEST_CASE("composite network gradients pass finite differences") {
  RngStream rng(103, "test/fd-mlp");
  const Tensor w45 = rand_const({4, 5}, rng);
  fd_check("linear-tanh-layernorm-linear-softplus", [&](const std::vector<Tensor>& in) {
    Tensor h = tanh(linear(in[0], in[1], in[2]));
    h = layer_norm(h, in[3], in[4]);
    Tensor y = softplus(linear(h, in[5], in[6]));
    return mean(mul(y, w45));
  }, {rand_param({4, 3}, rng), rand_param({3, 6}, rng, -0.7, 0.7),
      rand_param({6}, rng), rand_param({6}, rng, 0.5, 1.5), rand_param({6}, rng),
      rand_param({6, 5}, rng, -0.7, 0.7), rand_param({5}, rng)});
}

TEST_CASE("hand-checked gradient values") {
  SUBCASE("sum backpropagates all-ones") {
    Tensor x = Tensor::param({2, 3}, {1, 2, 3, 4, 5, 6});
    Tape tape;
    tape.backward(sum(x));
    for (double g : x.grad()) CHECK(g == 1.0);
  }
  SUBCASE("sum of squares doubles the input") {
    Tensor x = Tensor::param({2}, {1, 2});
    Tape tape;
    tape.backward(sum(square(x)));
    CHECK(x.grad()[0] == doctest::Approx(2.0));
    CHECK(x.grad()[1] == doctest::Approx(4.0));
  }
  SUBCASE("softplus at zero") {
    Tensor x = Tensor::param({1}, {0.0});
    Tape tape;
    Tensor y = softplus(x);
    CHECK(y.item() == doctest::Approx(std::log(2.0)).epsilon(1e-12));
    tape.backward(sum(y));
    CHECK(x.grad()[0] == doctest::Approx(0.5).epsilon(1e-12));
  }
  SUBCASE("tanh at zero") {
    Tensor x = Tensor::param({1}, {0.0});
    Tape tape;
    Tensor y = tanh(x);
    CHECK(y.item() == 0.0);
    tape.backward(sum(y));
    CHECK(x.grad()[0] == doctest::Approx(1.0).epsilon(1e-12));
  }
  SUBCASE("relu at a negative input") {
    Tensor x = Tensor::param({1}, {-3.0});
    Tape tape;
    Tensor y = relu(x);
    CHECK(y.item() == 0.0);
    tape.backward(sum(y));
    CHECK(x.grad()[0] == 0.0);
  }
  SUBCASE("matmul value and both input gradients") {
    Tensor a = Tensor::param({1, 2}, {1, 2});
    Tensor b = Tensor::param({2, 1}, {3, 4});
    Tape tape;
    Tensor c = matmul(a, b);
    CHECK(c.item() == 11.0);
    tape.backward(sum(c));
    CHECK(a.grad()[0] == 3.0);
    CHECK(a.grad()[1] == 4.0);
    CHECK(b.grad()[0] == 1.0);
    CHECK(b.grad()[1] == 2.0);
  }
}

TEST_CASE("tape mechanics") {
  SUBCASE("pause suspends recording") {
    Tensor x = Tensor::param({1}, {2.0});
    Tape tape;
    CHECK(Tape::recording());
    {
      Tape::Pause pause;
      CHECK_FALSE(Tape::recording());
      Tensor y = square(x);
      CHECK(y.item() == 4.0);
    }
    CHECK(tape.num_nodes() == 0);
    Tensor z = mul_scalar(x, 3.0);
    CHECK(tape.num_nodes() == 1);
    tape.backward(z);
    CHECK(x.grad()[0] == 3.0);
  }
  SUBCASE("backward accumulates into existing gradients") {
    Tensor x = Tensor::param({3}, {1, 2, 3});
    Tape tape;
    Tensor loss = sum(square(x));
    tape.backward(loss);
    tape.backward(loss);
    CHECK(x.grad()[0] == doctest::Approx(4.0));
    CHECK(x.grad()[2] == doctest::Approx(12.0));
  }
  SUBCASE("constants never receive gradients") {
    Tensor x = Tensor::param({1}, {1.5});
    Tensor c = Tensor::from({1}, {2.0});
    Tape tape;
    tape.backward(sum(mul(x, c)));
    CHECK(x.grad()[0] == 2.0);
    CHECK_FALSE(c.has_grad());
  }
  SUBCASE("backward is bitwise deterministic across repeated runs") {
    RngStream rng(104, "test/det");
    const Shape xs{16, 24}, ws{24, 24};
    auto vx = rand_vals(xs, rng);
    auto vw = rand_vals(ws, rng, -0.3, 0.3);
    auto run = [&](kern::Backend be) {
      auto saved = kern::backend();
      kern::set_backend(be);
      Tensor x = Tensor::param(xs, vx);
      Tensor w = Tensor::param(ws, vw);
      Tape tape;
      Tensor h = tanh(matmul(x, w));
      h = matmul(h, w);
      tape.backward(mean(square(h)));
      kern::set_backend(saved);
      return std::pair{x.grad(), w.grad()};
    };
    auto [gx1, gw1] = run(kern::Backend::openmp);
    auto [gx2, gw2] = run(kern::Backend::openmp);
    CHECK(std::memcmp(gx1.data(), gx2.data(), gx1.size() * sizeof(double)) == 0);
    CHECK(std::memcmp(gw1.data(), gw2.data(), gw1.size() * sizeof(double)) == 0);
    auto [gx3, gw3] = run(kern::Backend::serial);
    CHECK(std::memcmp(gx1.data(), gx3.data(), gx1.size() * sizeof(double)) == 0);
    CHECK(std::memcmp(gw1.data(), gw3.data(), gw1.size() * sizeof(double)) == 0);
  }
}

TEST_CASE("adam optimizer behavior") {
  SUBCASE("first step moves each weight by almost exactly the learning rate") {
    const double lr = 1e-2;
    Tensor p = Tensor::param({2}, {0.7, -1.2});
    Adam opt({p}, lr);
    p.grad_mut() = {2.0, -0.5};
    opt.step();
    CHECK(std::fabs(0.7 - p.values()[0]) == doctest::Approx(lr).epsilon(1e-7));
    CHECK(std::fabs(-1.2 - p.values()[1]) == doctest::Approx(lr).epsilon(1e-7));
    // direction opposes the gradient
    CHECK(p.values()[0] < 0.7);
    CHECK(p.values()[1] > -1.2);
  }
  SUBCASE("a zero-gradient step leaves parameters untouched but advances the counter") {
    Tensor p = Tensor::param({3}, {1, 2, 3});
    Adam opt({p}, 1e-2);
    CHECK(opt.step_count() == 0);
    opt.step();  // no gradient was ever produced
    CHECK(opt.step_count() == 1);
    CHECK(p.values()[0] == 1.0);
    CHECK(p.values()[1] == 2.0);
    CHECK(p.values()[2] == 3.0);
  }
  SUBCASE("an opposing gradient shrinks the second step") {
    Tensor p = Tensor::param({1}, {0.0});
    Adam opt({p}, 1e-2);
    p.grad_mut() = {1.0};
    opt.step();
    const double step1 = std::fabs(p.values()[0] - 0.0);
    const double after1 = p.values()[0];
    p.grad_mut() = {-1.0};
    opt.step();
    const double step2 = std::fabs(p.values()[0] - after1);
    CHECK(step2 < step1);
    CHECK(step2 < 0.1 * step1);  // momentum nearly cancels
  }
  SUBCASE("step consumes and clears gradients") {
    Tensor p = Tensor::param({1}, {1.0});
    Adam opt({p}, 1e-2);
    p.grad_mut() = {1.0};
    opt.step();
    CHECK(p.grad()[0] == 0.0);
  }
  SUBCASE("global-norm clipping caps the applied gradient") {
    Tensor p = Tensor::param({2}, {0.0, 0.0});
    Adam opt({p}, 1e-2);
    opt.set_grad_clip(1.0);
    p.grad_mut() = {30.0, 40.0};  // norm 50 -> scaled to 1
    CHECK(opt.grad_global_norm() == doctest::Approx(50.0));
    opt.step();
    // after scaling, gradient was {0.6, 0.8}; adam normalizes per-element,
    // so just confirm both moved opposite the gradient and are finite
    CHECK(p.values()[0] < 0.0);
    CHECK(p.values()[1] < 0.0);
    CHECK(std::isfinite(p.values()[0]));
  }
}
