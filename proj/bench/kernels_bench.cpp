#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "flowseg/kernels/conv.hpp"
#include "flowseg/kernels/warp.hpp"
#include "flowseg/reference/kernels.hpp"

using flowseg::Tensor;
using flowseg::kernels::ConvGeometry;

namespace {

Tensor random_tensor(int n, int c, int h, int w, float lo, float hi, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> u(lo, hi);
  Tensor t(n, c, h, w);
  for (auto& v : t.span()) v = u(rng);
  return t;
}

std::vector<float> random_vec(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> u(-0.1f, 0.1f);
  std::vector<float> v(n);
  for (auto& x : v) x = u(rng);
  return v;
}

// Feature-sized warp: 32 channels at 1/4 of a 64x64 frame, then frame-sized.
template <bool kReference>
void BM_Warp(benchmark::State& state) {
  const int c = static_cast<int>(state.range(0)), hw = static_cast<int>(state.range(1));
  const Tensor src = random_tensor(1, c, hw, hw, -1, 1, 1);
  const Tensor flow = random_tensor(1, 2, hw, hw, -4, 4, 2);
  for (auto _ : state) {
    Tensor out = kReference ? flowseg::reference::warp(src, flow) : flowseg::kernels::warp_forward(src, flow);
    benchmark::DoNotOptimize(out.data());
  }
  state.SetItemsProcessed(state.iterations() * c * hw * hw);
}

template <bool kReference>
void BM_Conv(benchmark::State& state) {
  const int c = static_cast<int>(state.range(0)), hw = static_cast<int>(state.range(1));
  const ConvGeometry g{c, c, 3, 3, 1, 1};
  const Tensor x = random_tensor(1, c, hw, hw, -1, 1, 3);
  const auto w = random_vec(static_cast<std::size_t>(c) * c * 9, 4), b = random_vec(c, 5);
  for (auto _ : state) {
    Tensor out = kReference ? flowseg::reference::conv2d(x, w.data(), b.data(), g)
                            : flowseg::kernels::conv2d_forward(x, w.data(), b.data(), g);
    benchmark::DoNotOptimize(out.data());
  }
}

template <bool kReference>
void BM_Deconv(benchmark::State& state) {
  const int c = static_cast<int>(state.range(0)), hw = static_cast<int>(state.range(1));
  const ConvGeometry g{c, c, 4, 4, 2, 1};
  const Tensor x = random_tensor(1, c, hw, hw, -1, 1, 6);
  const auto w = random_vec(static_cast<std::size_t>(c) * c * 16, 7), b = random_vec(c, 8);
  for (auto _ : state) {
    Tensor out = kReference ? flowseg::reference::deconv2d(x, w.data(), b.data(), g)
                            : flowseg::kernels::deconv2d_forward(x, w.data(), b.data(), g);
    benchmark::DoNotOptimize(out.data());
  }
}

}  // namespace

BENCHMARK_TEMPLATE(BM_Warp, true)->Args({32, 16})->Args({3, 64})->Name("warp/reference");
BENCHMARK_TEMPLATE(BM_Warp, false)->Args({32, 16})->Args({3, 64})->Name("warp/omp");
BENCHMARK_TEMPLATE(BM_Conv, true)->Args({16, 32})->Args({32, 16})->Name("conv3x3/reference");
BENCHMARK_TEMPLATE(BM_Conv, false)->Args({16, 32})->Args({32, 16})->Name("conv3x3/omp");
BENCHMARK_TEMPLATE(BM_Deconv, true)->Args({16, 16})->Name("deconv4x4/reference");
BENCHMARK_TEMPLATE(BM_Deconv, false)->Args({16, 16})->Name("deconv4x4/omp");

BENCHMARK_MAIN();
