// Serial reference vs OpenMP kernels at desk and paper-like sizes.
//
//   ./surf_bench --benchmark_filter=Perceptron

#include <benchmark/benchmark.h>

#include <random>

#include "surf/data.hpp"
#include "surf/grad.hpp"
#include "surf/graph.hpp"
#include "surf/kernels.hpp"
#include "surf/unroll.hpp"

using namespace surf;
using kernels::Backend;

namespace {

Matrix gaussian(std::size_t rows, std::size_t cols, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd(0.0, 1.0);
  Matrix m(rows, cols);
  for (double& v : m.flat()) v = nd(rng);
  return m;
}

Backend backend_arg(const benchmark::State& state) {
  return state.range(0) == 0 ? Backend::serial : Backend::parallel;
}

void label(benchmark::State& state) {
  state.SetLabel(state.range(0) == 0 ? "serial" : "openmp");
}

// n agents, model dim d, batch width b.
void BM_PerceptronForward(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(1));
  const auto d = static_cast<std::size_t>(state.range(2));
  const std::size_t b = 4 * (d / 5 + 5);
  const Matrix m = gaussian(d, d + b, 1), c = gaussian(1, d, 2), x = gaussian(n, d, 3),
               batch = gaussian(n, b, 4);
  Matrix z(n, d);
  kernels::ScopedBackend scope(backend_arg(state));
  for (auto _ : state) {
    kernels::perceptron_forward(m, c, x, batch, z);
    benchmark::DoNotOptimize(z.flat().data());
  }
  label(state);
}

void BM_PerceptronBackward(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(1));
  const auto d = static_cast<std::size_t>(state.range(2));
  const std::size_t b = 4 * (d / 5 + 5);
  const Matrix m = gaussian(d, d + b, 1), delta = gaussian(n, d, 2), x = gaussian(n, d, 3),
               batch = gaussian(n, b, 4);
  Matrix dm(d, d + b), dc(1, d), dx(n, d);
  kernels::ScopedBackend scope(backend_arg(state));
  for (auto _ : state) {
    kernels::perceptron_backward(m, delta, x, batch, dm, dc, dx);
    benchmark::DoNotOptimize(dm.flat().data());
  }
  label(state);
}

void BM_Matmul(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(1));
  const auto d = static_cast<std::size_t>(state.range(2));
  const Matrix s = gaussian(n, n, 1), w = gaussian(n, d, 2);
  Matrix out(n, d);
  kernels::ScopedBackend scope(backend_arg(state));
  for (auto _ : state) {
    kernels::matmul(s, w, out);
    benchmark::DoNotOptimize(out.flat().data());
  }
  label(state);
}

// One Lagrangian gradient at the desk-scale configuration.
void BM_LagrangianGrad(benchmark::State& state) {
  SyntheticConfig sc;
  sc.class_sep = 2.0;
  const FLDataset ds = gen_dataset(sc, class_means(sc), 1);
  const ShiftOperator s = shift_operator(make_regular(20, 3, 2), ShiftKind::normalized_adjacency);
  const UnrolledParams theta = init_params(5, 2, ds.model_dim(), 4 * ds.example_width(), 3);
  LagrangianInputs in;
  in.theta = &theta;
  in.lambda.assign(5, 0.5);
  in.w0 = init_w0(20, ds.model_dim(), 0.0, 0.1, 4);
  in.dataset = &ds;
  in.shift = &s;
  in.b_count = 4;
  in.seed = 5;
  kernels::ScopedBackend scope(backend_arg(state));
  for (auto _ : state) {
    LagrangianGrad g = lagrangian_grad(in);
    benchmark::DoNotOptimize(g.value.value);
  }
  label(state);
}

}  // namespace

BENCHMARK(BM_PerceptronForward)->ArgsProduct({{0, 1}, {20, 100}, {85, 510}});
BENCHMARK(BM_PerceptronBackward)->ArgsProduct({{0, 1}, {20, 100}, {85, 510}});
BENCHMARK(BM_Matmul)->ArgsProduct({{0, 1}, {20, 100}, {85, 510}});
BENCHMARK(BM_LagrangianGrad)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
