// Serial references against the OpenMP kernels.

#include <benchmark/benchmark.h>

#include "covmap/neuralnet.hpp"
#include "covmap/rng.hpp"
#include "covmap/simcore.hpp"
#include "covmap/synthgen.hpp"

using namespace covmap;

namespace {

nn::Tensor random_tensor(std::vector<std::size_t> shape, std::uint64_t seed) {
    nn::Tensor t(std::move(shape));
    rng::Stream s(seed, 0, 0);
    for (double& v : t.values()) v = 2.0 * s.uniform() - 1.0;
    return t;
}

const BsImage& layout() {
    static const BsImage image = synthgen::gen_ppp_roi(1.0, 10.0, 42).image;
    return image;
}

void BM_SimulateSerial(benchmark::State& state) {
    const simcore::McConfig mc{static_cast<std::size_t>(state.range(0)), 1};
    for (auto _ : state)
        benchmark::DoNotOptimize(
            simcore::simulate_manifolds_serial(layout(), 10.0, {}, simcore::FadingModel::rayleigh(), mc));
}

void BM_SimulateParallel(benchmark::State& state) {
    const simcore::McConfig mc{static_cast<std::size_t>(state.range(0)), 1};
    for (auto _ : state)
        benchmark::DoNotOptimize(simcore::simulate_manifolds(layout(), 10.0, {}, simcore::FadingModel::rayleigh(), mc));
}

// Second encoder layer of the CNN-AE: 8 -> 16 channels on a 32x32 map.
void BM_ConvSerial(benchmark::State& state) {
    const auto x = random_tensor({8, 32, 32}, 1), w = random_tensor({16, 8, 3, 3}, 2), b = random_tensor({16}, 3);
    for (auto _ : state) benchmark::DoNotOptimize(nn::reference::conv2d_forward(x, w, b));
}

void BM_ConvParallel(benchmark::State& state) {
    const auto x = random_tensor({8, 32, 32}, 1), w = random_tensor({16, 8, 3, 3}, 2), b = random_tensor({16}, 3);
    for (auto _ : state) benchmark::DoNotOptimize(nn::conv2d_forward(x, w, b));
}

void BM_ConvTransposeSerial(benchmark::State& state) {
    const auto x = random_tensor({16, 16, 16}, 1), w = random_tensor({16, 8, 3, 3}, 2), b = random_tensor({8}, 3);
    for (auto _ : state) benchmark::DoNotOptimize(nn::reference::conv_transpose2d_forward(x, w, b));
}

void BM_ConvTransposeParallel(benchmark::State& state) {
    const auto x = random_tensor({16, 16, 16}, 1), w = random_tensor({16, 8, 3, 3}, 2), b = random_tensor({8}, 3);
    for (auto _ : state) benchmark::DoNotOptimize(nn::conv_transpose2d_forward(x, w, b));
}

void BM_AffineSerial(benchmark::State& state) {
    const auto x = random_tensor({2048}, 1), w = random_tensor({512, 2048}, 2), b = random_tensor({512}, 3);
    for (auto _ : state) benchmark::DoNotOptimize(nn::reference::affine_forward(x, w, b));
}

void BM_AffineParallel(benchmark::State& state) {
    const auto x = random_tensor({2048}, 1), w = random_tensor({512, 2048}, 2), b = random_tensor({512}, 3);
    for (auto _ : state) benchmark::DoNotOptimize(nn::affine_forward(x, w, b));
}

} // namespace

BENCHMARK(BM_SimulateSerial)->Arg(100)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_SimulateParallel)->Arg(100)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_ConvSerial)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_ConvParallel)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_ConvTransposeSerial)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_ConvTransposeParallel)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_AffineSerial)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_AffineParallel)->Unit(benchmark::kMicrosecond);

BENCHMARK_MAIN();
