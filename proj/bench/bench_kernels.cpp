#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "jelly/kernels.hpp"

using namespace jelly;
using kernels::Exec;

namespace {

template <typename T>
std::vector<T> random_values(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<T> v(n);
  for (auto& x : v) x = static_cast<T>(u(gen));
  return v;
}

// A middle layer of the tiny backbone on a 16-frame batch.
kernels::ConvGeometry layer_geometry() {
  kernels::ConvGeometry g;
  g.batch = 16;
  g.in_channels = 8;
  g.out_channels = 8;
  g.in_h = 10;
  g.in_w = 16;
  g.kernel_h = g.kernel_w = 3;
  g.stride = 1;
  g.pad = 1;
  return g;
}

void BM_ConvForward(benchmark::State& state) {
  const auto g = layer_geometry();
  const Exec exec = state.range(0) ? Exec::parallel : Exec::serial;
  const auto x = random_values<float>(std::size_t(g.batch) * g.in_channels * g.in_h * g.in_w, 1);
  const auto w = random_values<float>(std::size_t(g.out_channels) * g.in_channels * 9, 2);
  std::vector<float> y(std::size_t(g.batch) * g.out_channels * g.out_h() * g.out_w());
  for (auto _ : state) {
    kernels::conv2d_forward(g, x.data(), w.data(), y.data(), exec);
    benchmark::DoNotOptimize(y.data());
  }
}

void BM_ConvBackwardInput(benchmark::State& state) {
  const auto g = layer_geometry();
  const Exec exec = state.range(0) ? Exec::parallel : Exec::serial;
  const auto w = random_values<float>(std::size_t(g.out_channels) * g.in_channels * 9, 2);
  const auto dy = random_values<float>(std::size_t(g.batch) * g.out_channels * g.out_h() * g.out_w(), 3);
  std::vector<float> dx(std::size_t(g.batch) * g.in_channels * g.in_h * g.in_w);
  for (auto _ : state) {
    kernels::conv2d_backward_input(g, w.data(), dy.data(), dx.data(), exec);
    benchmark::DoNotOptimize(dx.data());
  }
}

void BM_ConvBackwardWeight(benchmark::State& state) {
  const auto g = layer_geometry();
  const Exec exec = state.range(0) ? Exec::parallel : Exec::serial;
  const auto x = random_values<float>(std::size_t(g.batch) * g.in_channels * g.in_h * g.in_w, 1);
  const auto dy = random_values<float>(std::size_t(g.batch) * g.out_channels * g.out_h() * g.out_w(), 3);
  std::vector<float> dw(std::size_t(g.out_channels) * g.in_channels * 9);
  for (auto _ : state) {
    kernels::conv2d_backward_weight(g, x.data(), dy.data(), dw.data(), exec);
    benchmark::DoNotOptimize(dw.data());
  }
}

void BM_NccSearch(benchmark::State& state) {
  const Exec exec = state.range(0) ? Exec::parallel : Exec::serial;
  const int radius = static_cast<int>(state.range(1));
  Image frame(160, 120), templ(100, 60);
  const auto fv = random_values<float>(frame.size(), 4);
  std::copy(fv.begin(), fv.end(), frame.values().begin());
  for (int r = 0; r < 60; ++r)
    for (int c = 0; c < 100; ++c) templ.at(r, c) = frame.at(r + 30, c + 30);
  kernels::SearchWindow win{30 - radius, 30 + radius + 1, 30 - radius, 30 + radius + 1};
  for (auto _ : state) {
    auto scores = kernels::ncc_scores(templ, frame, win, exec);
    benchmark::DoNotOptimize(scores.data());
  }
}

}  // namespace

BENCHMARK(BM_ConvForward)->Arg(0)->Arg(1)->ArgName("parallel");
BENCHMARK(BM_ConvBackwardInput)->Arg(0)->Arg(1)->ArgName("parallel");
BENCHMARK(BM_ConvBackwardWeight)->Arg(0)->Arg(1)->ArgName("parallel");
BENCHMARK(BM_NccSearch)->ArgsProduct({{0, 1}, {8, 30}})->ArgNames({"parallel", "radius"});

BENCHMARK_MAIN();
