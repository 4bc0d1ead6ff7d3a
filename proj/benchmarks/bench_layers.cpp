#include <benchmark/benchmark.h>

#include <random>

#include "kronmark/kcl.hpp"
#include "kronmark/landmark_net.hpp"
#include "kronmark/ops.hpp"

using namespace kronmark;

namespace {

Tensor<float> random_input(std::size_t c, std::size_t size, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<float> u(-1.f, 1.f);
    Tensor<float> t(Shape{c, size, size});
    for (float& v : t.data()) v = u(rng);
    return t;
}

void BM_Conv2d(benchmark::State& state) {
    const auto c = std::size_t(state.range(0)), size = std::size_t(state.range(1));
    auto x = random_input(c, size, 1);
    auto w = random_input(c * c, 3, 2).reshaped(Shape{c, c, 3, 3});
    Tensor<float> b(Shape{c}, 0.f);
    for (auto _ : state) benchmark::DoNotOptimize(ops::conv2d(x, w, b, {1, 1}));
    state.counters["flops"] = benchmark::Counter(2.0 * double(size * size * c * c * 9),
                                                 benchmark::Counter::kIsIterationInvariantRate);
}
BENCHMARK(BM_Conv2d)->Args({24, 80})->Args({48, 40})->Args({96, 20})->Unit(benchmark::kMillisecond);

void BM_KclForward(benchmark::State& state) {
    const auto n = std::size_t(state.range(0));
    std::mt19937_64 rng(3);
    auto p = init_kcl<float>({24, 24, 3, n}, rng);
    auto x = random_input(24, 80, 4);
    for (auto _ : state) benchmark::DoNotOptimize(kcl_forward(x, p, {1, 1}));
}
BENCHMARK(BM_KclForward)->Arg(1)->Arg(2)->Arg(3)->Unit(benchmark::kMillisecond);

void BM_AssembleWeight(benchmark::State& state) {
    std::mt19937_64 rng(5);
    auto p = init_kcl<float>({96, 96, 3, std::size_t(state.range(0))}, rng);
    for (auto _ : state) benchmark::DoNotOptimize(assemble_weight(p));
}
BENCHMARK(BM_AssembleWeight)->Arg(1)->Arg(3);

void BM_KpfemPredict(benchmark::State& state) {
    const auto cfg = net::KpfemConfig::defaults();
    const auto params = net::init_params<float>(cfg, 7);
    auto image = random_input(3, cfg.input_size, 6);
    for (auto& v : image.data()) v = 0.5f * (v + 1.f);
    for (auto _ : state) benchmark::DoNotOptimize(net::predict(image, cfg, params));
    state.counters["img_per_s"] = benchmark::Counter(1.0, benchmark::Counter::kIsIterationInvariantRate);
}
BENCHMARK(BM_KpfemPredict)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
