// Serial reference vs OpenMP kernels.
//   ./build/bench_kernels --benchmark_filter=stft

#include <benchmark/benchmark.h>

#include <random>

#include "timbre/kernels.hpp"
#include "timbre/nmds.hpp"
#include "timbre/simulate.hpp"

using namespace timbre;
using namespace timbre::kernels;

namespace {

HarmonicSeries saw_series(int harmonics) {
    HarmonicSeries s;
    for (int h = 1; h <= harmonics; ++h) {
        s.cos_coefs.push_back(0.0);
        s.sin_coefs.push_back(1.0 / h);
    }
    return s;
}

std::vector<double> noise(std::size_t n) {
    std::mt19937_64 gen(1);
    std::normal_distribution<double> nd;
    std::vector<double> v(n);
    for (double& x : v) {
        x = nd(gen);
    }
    return v;
}

template <auto Fn>
void additive(benchmark::State& state) {
    const auto s = saw_series(50);
    for (auto _ : state) {
        benchmark::DoNotOptimize(Fn(s, 440, 44100, 88200));
    }
    state.SetItemsProcessed(state.iterations() * 88200);
}

template <auto Fn>
void stft(benchmark::State& state) {
    const auto x = noise(88200);
    for (auto _ : state) {
        benchmark::DoNotOptimize(Fn(x, FrameLayout{}));
    }
}

template <auto Fn>
void rms(benchmark::State& state) {
    const auto x = noise(88200);
    for (auto _ : state) {
        benchmark::DoNotOptimize(Fn(x, FrameLayout{}));
    }
}

template <auto Fn>
void distances(benchmark::State& state) {
    const auto c = simulate::planted_coordinates(static_cast<std::size_t>(state.range(0)), 4, 2);
    for (auto _ : state) {
        benchmark::DoNotOptimize(Fn(c));
    }
}

void nmds(benchmark::State& state) {
    const auto x = simulate::planted_coordinates(15, 4, 3);
    ratings::DissimilarityMatrix d;
    for (int i = 0; i < 15; ++i) {
        d.ids.push_back(std::to_string(i));
    }
    const auto flat = kernels::serial::pairwise_distances(x);
    d.values = Matrix(15, 15);
    for (std::size_t i = 0; i < 15; ++i) {
        for (std::size_t j = i + 1; j < 15; ++j) {
            d.values(i, j) = d.values(j, i) = flat[pair_index(i, j, 15)];
        }
    }
    mds::MdsConfig cfg;
    cfg.dims = 4;
    cfg.restarts = 20;
    cfg.exec = state.range(0) != 0 ? Execution::parallel : Execution::serial;
    for (auto _ : state) {
        benchmark::DoNotOptimize(mds::nmds_fit(d, cfg));
    }
}

}  // namespace

BENCHMARK(additive<serial::additive_synthesis>)->Name("additive/serial")->Unit(benchmark::kMillisecond);
BENCHMARK(additive<parallel::additive_synthesis>)->Name("additive/parallel")->Unit(benchmark::kMillisecond);
BENCHMARK(stft<serial::stft_magnitudes>)->Name("stft/serial")->Unit(benchmark::kMillisecond);
BENCHMARK(stft<parallel::stft_magnitudes>)->Name("stft/parallel")->Unit(benchmark::kMillisecond);
BENCHMARK(rms<serial::frame_rms>)->Name("frame_rms/serial")->Unit(benchmark::kMicrosecond);
BENCHMARK(rms<parallel::frame_rms>)->Name("frame_rms/parallel")->Unit(benchmark::kMicrosecond);
BENCHMARK(distances<serial::pairwise_distances>)->Name("distances/serial")->Arg(15)->Arg(400);
BENCHMARK(distances<parallel::pairwise_distances>)->Name("distances/parallel")->Arg(15)->Arg(400);
BENCHMARK(nmds)->Name("nmds_fit_20_restarts")->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
