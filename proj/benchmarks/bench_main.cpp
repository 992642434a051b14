#include <benchmark/benchmark.h>

#include <cmath>
#include <vector>

#include "whvi/autodiff.hpp"
#include "whvi/fwht.hpp"
#include "whvi/mean_field.hpp"
#include "whvi/noise.hpp"
#include "whvi/whvi_layer.hpp"

namespace {

void BM_FwhtInplace(benchmark::State& state) {
    const auto d = static_cast<std::size_t>(state.range(0));
    std::vector<double> v(d);
    for (std::size_t i = 0; i < d; ++i) v[i] = std::sin(static_cast<double>(i));
    for (auto _ : state) {
        whvi::fwht_inplace(v, whvi::Normalization::orthonormal);
        benchmark::DoNotOptimize(v.data());
    }
    state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_FwhtInplace)->RangeMultiplier(4)->Range(1 << 4, 1 << 16)->Complexity(benchmark::oNLogN);

// Dense matrix-vector product at the same size, for the D^2 vs D log D comparison.
void BM_DenseMatVec(benchmark::State& state) {
    const auto d = static_cast<std::size_t>(state.range(0));
    std::vector<double> m(d * d), v(d), out(d);
    for (std::size_t i = 0; i < m.size(); ++i) m[i] = std::cos(static_cast<double>(i));
    for (std::size_t i = 0; i < d; ++i) v[i] = std::sin(static_cast<double>(i));
    for (auto _ : state) {
        for (std::size_t r = 0; r < d; ++r) {
            double acc = 0.0;
            for (std::size_t c = 0; c < d; ++c) acc += m[r * d + c] * v[c];
            out[r] = acc;
        }
        benchmark::DoNotOptimize(out.data());
    }
    state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_DenseMatVec)->RangeMultiplier(4)->Range(1 << 4, 1 << 12)->Complexity(benchmark::oNSquared);

// One local-reparameterization forward pass plus backward through a WHVI layer.
void BM_WhviLocalReparam(benchmark::State& state) {
    const auto d = static_cast<std::size_t>(state.range(0));
    const std::size_t batch = 64;
    whvi::NoiseStream noise(1);
    whvi::nn::WhviLayer layer(whvi::HadamardDim(d), whvi::nn::CovarianceMode::diagonal, noise);
    const whvi::Tensor h = noise.standard_normal({batch, d});
    for (auto _ : state) {
        whvi::ad::Tape tape;
        auto out = layer.forward_local_reparam(tape, tape.constant(h),
                                               noise.standard_normal({batch, d}));
        tape.backward(whvi::ad::sum(out));
        tape.reset();
    }
}
BENCHMARK(BM_WhviLocalReparam)->RangeMultiplier(2)->Range(32, 512);

void BM_MeanFieldLocalReparam(benchmark::State& state) {
    const auto d = static_cast<std::size_t>(state.range(0));
    const std::size_t batch = 64;
    whvi::NoiseStream noise(1);
    whvi::nn::MeanFieldLayer layer(d, d, noise, "mf");
    const whvi::Tensor h = noise.standard_normal({batch, d});
    for (auto _ : state) {
        whvi::ad::Tape tape;
        auto out = layer.mf_forward_local_reparam(tape, tape.constant(h),
                                                  noise.standard_normal({batch, d}));
        tape.backward(whvi::ad::sum(out));
        tape.reset();
    }
}
BENCHMARK(BM_MeanFieldLocalReparam)->RangeMultiplier(2)->Range(32, 512);

}  // namespace
BENCHMARK_MAIN();
