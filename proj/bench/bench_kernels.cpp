// Serial reference vs OpenMP kernels on encoder-sized convolutions.

#include <vector>

#include <benchmark/benchmark.h>

#include "iiao/kernels.hpp"
#include "iiao/rng.hpp"

namespace k = iiao::kernels;

namespace {

struct ConvData {
  k::ConvGeometry g;
  std::vector<double> input, kernel, bias, output;

  ConvData(std::size_t channels, std::size_t size, std::size_t out_channels) {
    g.batch = 1;
    g.in_channels = channels;
    g.in_h = g.in_w = size;
    g.out_channels = out_channels;
    g.kernel = 3;
    g.padding = 1;
    iiao::Rng rng(1);
    input.resize(g.input_size());
    kernel.resize(g.kernel_size());
    bias.assign(out_channels, 0.1);
    output.resize(g.output_size());
    for (double& v : input) v = rng.uniform(-1.0, 1.0);
    for (double& v : kernel) v = rng.normal(0.0, 0.1);
  }
};

ConvData make(const benchmark::State& state) {
  return ConvData(static_cast<std::size_t>(state.range(0)), static_cast<std::size_t>(state.range(1)),
                  static_cast<std::size_t>(state.range(0)));
}

void set_counters(benchmark::State& state, const k::ConvGeometry& g) {
  const double flops = 2.0 * static_cast<double>(g.output_size() * g.in_channels * g.kernel * g.kernel);
  state.counters["GFLOP/s"] = benchmark::Counter(flops / 1e9, benchmark::Counter::kIsIterationInvariantRate);
}

void BM_ConvForwardSerial(benchmark::State& state) {
  ConvData d = make(state);
  for (auto _ : state) {
    k::serial::conv2d_forward(d.g, d.input, d.kernel, d.bias, d.output);
    benchmark::DoNotOptimize(d.output.data());
  }
  set_counters(state, d.g);
}

void BM_ConvForwardOmp(benchmark::State& state) {
  ConvData d = make(state);
  for (auto _ : state) {
    k::omp::conv2d_forward(d.g, d.input, d.kernel, d.bias, d.output);
    benchmark::DoNotOptimize(d.output.data());
  }
  set_counters(state, d.g);
}

void BM_ConvBackwardSerial(benchmark::State& state) {
  ConvData d = make(state);
  std::vector<double> gi(d.input.size()), gk(d.kernel.size()), gb(d.bias.size());
  for (auto _ : state) {
    k::serial::conv2d_backward_input(d.g, d.output, d.kernel, gi);
    k::serial::conv2d_backward_kernel(d.g, d.output, d.input, gk, gb);
    benchmark::DoNotOptimize(gi.data());
    benchmark::DoNotOptimize(gk.data());
  }
}

void BM_ConvBackwardOmp(benchmark::State& state) {
  ConvData d = make(state);
  std::vector<double> gi(d.input.size()), gk(d.kernel.size()), gb(d.bias.size());
  for (auto _ : state) {
    k::omp::conv2d_backward_input(d.g, d.output, d.kernel, gi);
    k::omp::conv2d_backward_kernel(d.g, d.output, d.input, gk, gb);
    benchmark::DoNotOptimize(gi.data());
    benchmark::DoNotOptimize(gk.data());
  }
}

// (channels, spatial size)
#define CONV_ARGS Args({8, 128})->Args({16, 64})->Args({64, 32})->Unit(benchmark::kMillisecond)

BENCHMARK(BM_ConvForwardSerial)->CONV_ARGS;
BENCHMARK(BM_ConvForwardOmp)->CONV_ARGS;
BENCHMARK(BM_ConvBackwardSerial)->CONV_ARGS;
BENCHMARK(BM_ConvBackwardOmp)->CONV_ARGS;

}  // namespace

BENCHMARK_MAIN();
