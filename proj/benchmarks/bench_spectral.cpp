#include <benchmark/benchmark.h>

#include <random>

#include "eigenformer/data_io.hpp"
#include "eigenformer/spectral.hpp"

using namespace eigenformer;

namespace {

Graph bench_graph(int n, uint64_t seed) {
    GeneratorSpec spec;
    spec.kind = "er";
    spec.count = 1;
    spec.n_min = spec.n_max = n;
    spec.p = 0.3;
    spec.seed = seed;
    return generate_synthetic(spec)[0];
}

} // namespace

static void BM_Eigendecompose(benchmark::State& state) {
    Graph g = bench_graph(static_cast<int>(state.range(0)), 1);
    SymmetricMatrix L = laplacian(g);
    for (auto _ : state) {
        Spectrum s = eigendecompose(L);
        benchmark::DoNotOptimize(s.eigenvalues.data());
    }
}
BENCHMARK(BM_Eigendecompose)->Arg(16)->Arg(32)->Arg(64)->Arg(128);

static void BM_SigmaTensor(benchmark::State& state) {
    Graph g = bench_graph(static_cast<int>(state.range(0)), 2);
    Spectrum s = eigendecompose(laplacian(g));
    for (auto _ : state) {
        SpectralDistances sd = sigma_tensor(g, s);
        benchmark::DoNotOptimize(sd.sigma.data());
    }
}
BENCHMARK(BM_SigmaTensor)->Arg(16)->Arg(32)->Arg(64)->Arg(128);

static void BM_PrecomputeEndToEnd(benchmark::State& state) {
    Graph g = bench_graph(static_cast<int>(state.range(0)), 3);
    for (auto _ : state) {
        Spectrum s = eigendecompose(laplacian(g));
        SpectralDistances sd = sigma_tensor(g, s);
        benchmark::DoNotOptimize(sd.max_sigma());
    }
}
BENCHMARK(BM_PrecomputeEndToEnd)->Arg(24)->Arg(64);

BENCHMARK_MAIN();
