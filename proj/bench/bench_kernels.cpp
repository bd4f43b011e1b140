// Kernel benchmarks: the serial reference implementations against the
// dispatched OpenMP (and, for matmul, BLAS) paths, over the shapes the
// training loop actually hits — activations and gradients at batch x width,
// parameter-gradient matmuls, and the recurrent-cell stages.
//
// Built only when Google Benchmark is available (see CMakeLists.txt). Run:
//   ./bench_kernels --benchmark_min_time=0.2s
// Thread count follows OMP_NUM_THREADS; on a single core the dispatched path
// measures the scheduling overhead it pays for determinism.

#include <benchmark/benchmark.h>

#include <cstddef>
#include <vector>

#include "mtc/kernels.hpp"
#include "mtc/rng.hpp"

namespace {

using mtc::kern::Backend;

std::vector<double> randu(size_t n, uint64_t seed) {
  mtc::RngStream r(seed, "bench/fill");
  std::vector<double> v(n);
  for (auto& x : v) x = r.uniform(-1.0, 1.0);
  return v;
}

// ---- matmul ----------------------------------------------------------------

void bm_matmul(benchmark::State& state, Backend be) {
  const int m = int(state.range(0)), k = int(state.range(1)), n = int(state.range(2));
  const auto A = randu(size_t(m) * k, 1), B = randu(size_t(k) * n, 2);
  std::vector<double> C(size_t(m) * n, 0.0);
  const Backend prev = mtc::kern::backend();
  if (be == Backend::blas && !mtc::kern::blas_available()) {
    state.SkipWithError("BLAS backend not built in");
    return;
  }
  mtc::kern::set_backend(be);
  for (auto _ : state) {
    mtc::kern::matmul(A.data(), B.data(), C.data(), m, n, k, false, false, false);
    benchmark::DoNotOptimize(C.data());
    benchmark::ClobberMemory();
  }
  mtc::kern::set_backend(prev);
  state.SetItemsProcessed(int64_t(state.iterations()) * m * n * k);
}

void bm_matmul_ref(benchmark::State& state) {
  const int m = int(state.range(0)), k = int(state.range(1)), n = int(state.range(2));
  const auto A = randu(size_t(m) * k, 1), B = randu(size_t(k) * n, 2);
  std::vector<double> C(size_t(m) * n, 0.0);
  for (auto _ : state) {
    mtc::kern::ref::matmul(A.data(), B.data(), C.data(), m, n, k, false, false, false);
    benchmark::DoNotOptimize(C.data());
    benchmark::ClobberMemory();
  }
  state.SetItemsProcessed(int64_t(state.iterations()) * m * n * k);
}

// ---- elementwise -------------------------------------------------------------

void bm_unary_ref(benchmark::State& state) {
  const size_t n = size_t(state.range(0));
  const auto x = randu(n, 3);
  std::vector<double> y(n);
  for (auto _ : state) {
    mtc::kern::ref::unary_map(mtc::kern::Unary::tanh_, x.data(), y.data(), n);
    benchmark::DoNotOptimize(y.data());
  }
  state.SetItemsProcessed(int64_t(state.iterations()) * int64_t(n));
}

void bm_unary_omp(benchmark::State& state) {
  const size_t n = size_t(state.range(0));
  const auto x = randu(n, 3);
  std::vector<double> y(n);
  const Backend prev = mtc::kern::backend();
  mtc::kern::set_backend(Backend::openmp);
  for (auto _ : state) {
    mtc::kern::unary_map(mtc::kern::Unary::tanh_, x.data(), y.data(), n);
    benchmark::DoNotOptimize(y.data());
  }
  mtc::kern::set_backend(prev);
  state.SetItemsProcessed(int64_t(state.iterations()) * int64_t(n));
}

void bm_sum_ref(benchmark::State& state) {
  const size_t n = size_t(state.range(0));
  const auto x = randu(n, 4);
  for (auto _ : state) {
    double s = mtc::kern::ref::sum(x.data(), n);
    benchmark::DoNotOptimize(s);
  }
  state.SetItemsProcessed(int64_t(state.iterations()) * int64_t(n));
}

void bm_sum_omp(benchmark::State& state) {
  const size_t n = size_t(state.range(0));
  const auto x = randu(n, 4);
  const Backend prev = mtc::kern::backend();
  mtc::kern::set_backend(Backend::openmp);
  for (auto _ : state) {
    double s = mtc::kern::sum(x.data(), n);
    benchmark::DoNotOptimize(s);
  }
  mtc::kern::set_backend(prev);
  state.SetItemsProcessed(int64_t(state.iterations()) * int64_t(n));
}

// ---- recurrent-cell stages ---------------------------------------------------

void bm_gru_gates(benchmark::State& state, bool use_ref) {
  const int batch = int(state.range(0)), hidden = int(state.range(1));
  const size_t bh = size_t(batch) * hidden;
  const auto gx = randu(3 * bh, 5), gh = randu(2 * bh, 6), b = randu(size_t(3 * hidden), 7),
             h = randu(bh, 8);
  std::vector<double> r(bh), u(bh), rh(bh);
  const Backend prev = mtc::kern::backend();
  if (!use_ref) mtc::kern::set_backend(Backend::openmp);
  for (auto _ : state) {
    if (use_ref)
      mtc::kern::ref::gru_gates(gx.data(), gh.data(), b.data(), h.data(), r.data(),
                                u.data(), rh.data(), batch, hidden);
    else
      mtc::kern::gru_gates(gx.data(), gh.data(), b.data(), h.data(), r.data(), u.data(),
                           rh.data(), batch, hidden);
    benchmark::DoNotOptimize(rh.data());
  }
  mtc::kern::set_backend(prev);
  state.SetItemsProcessed(int64_t(state.iterations()) * int64_t(bh));
}

// ---- layer norm ---------------------------------------------------------------

void bm_layer_norm(benchmark::State& state, bool use_ref) {
  const int m = int(state.range(0)), n = int(state.range(1));
  const auto x = randu(size_t(m) * n, 9), g = randu(size_t(n), 10), b = randu(size_t(n), 11);
  std::vector<double> y(size_t(m) * n), mu(size_t(m), 0.0), rstd(size_t(m), 0.0);
  const Backend prev = mtc::kern::backend();
  if (!use_ref) mtc::kern::set_backend(Backend::openmp);
  for (auto _ : state) {
    if (use_ref)
      mtc::kern::ref::layer_norm(x.data(), g.data(), b.data(), 1e-5, y.data(), mu.data(),
                                 rstd.data(), m, n);
    else
      mtc::kern::layer_norm(x.data(), g.data(), b.data(), 1e-5, y.data(), mu.data(),
                            rstd.data(), m, n);
    benchmark::DoNotOptimize(y.data());
  }
  mtc::kern::set_backend(prev);
  state.SetItemsProcessed(int64_t(state.iterations()) * int64_t(m) * n);
}

// ---- adam ----------------------------------------------------------------------

void bm_adam(benchmark::State& state, bool use_ref) {
  const size_t n = size_t(state.range(0));
  auto p = randu(n, 12);
  const auto g = randu(n, 13);
  std::vector<double> m1(n, 0.0), m2(n, 0.0);
  const Backend prev = mtc::kern::backend();
  if (!use_ref) mtc::kern::set_backend(Backend::openmp);
  long t = 0;
  for (auto _ : state) {
    ++t;
    if (use_ref)
      mtc::kern::ref::adam_step(p.data(), g.data(), m1.data(), m2.data(), n, 3e-4, 0.9,
                                0.999, 1e-8, t);
    else
      mtc::kern::adam_step(p.data(), g.data(), m1.data(), m2.data(), n, 3e-4, 0.9, 0.999,
                           1e-8, t);
    benchmark::DoNotOptimize(p.data());
  }
  mtc::kern::set_backend(prev);
  state.SetItemsProcessed(int64_t(state.iterations()) * int64_t(n));
}

}  // namespace

// training-loop shapes: batch x width activations, width x width weights
BENCHMARK_CAPTURE(bm_matmul, omp, Backend::openmp)
    ->Args({32, 128, 128})
    ->Args({256, 256, 256})
    ->Args({32, 3, 384});
BENCHMARK_CAPTURE(bm_matmul, blas, Backend::blas)
    ->Args({32, 128, 128})
    ->Args({256, 256, 256})
    ->Args({32, 3, 384});
BENCHMARK(bm_matmul_ref)->Args({32, 128, 128})->Args({256, 256, 256})->Args({32, 3, 384});

BENCHMARK(bm_unary_ref)->Arg(4096)->Arg(65536)->Arg(1 << 20);
BENCHMARK(bm_unary_omp)->Arg(4096)->Arg(65536)->Arg(1 << 20);
BENCHMARK(bm_sum_ref)->Arg(4096)->Arg(1 << 20);
BENCHMARK(bm_sum_omp)->Arg(4096)->Arg(1 << 20);

BENCHMARK_CAPTURE(bm_gru_gates, ref, true)->Args({32, 64})->Args({256, 256});
BENCHMARK_CAPTURE(bm_gru_gates, omp, false)->Args({32, 64})->Args({256, 256});

BENCHMARK_CAPTURE(bm_layer_norm, ref, true)->Args({32, 16})->Args({256, 30});
BENCHMARK_CAPTURE(bm_layer_norm, omp, false)->Args({32, 16})->Args({256, 30});

BENCHMARK_CAPTURE(bm_adam, ref, true)->Arg(16384)->Arg(262144);
BENCHMARK_CAPTURE(bm_adam, omp, false)->Arg(16384)->Arg(262144);

BENCHMARK_MAIN();
