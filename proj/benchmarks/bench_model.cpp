#include <benchmark/benchmark.h>

#include "eigenformer/data_io.hpp"
#include "eigenformer/training.hpp"

using namespace eigenformer;

namespace {

struct Fixture {
    Dataset ds;
    EigenformerModel model;
    std::mt19937_64 rng{0};

    explicit Fixture(int n) : model(make_model()) {
        GeneratorSpec spec;
        spec.kind = "er";
        spec.count = 4;
        spec.n_min = spec.n_max = n;
        spec.p = 0.3;
        spec.task = "spectral_regression";
        spec.seed = 9;
        ds = make_dataset(generate_synthetic(spec));
        for (const Graph& g : ds.graphs)
            ds.spectra.push_back(sigma_tensor(g, eigendecompose(laplacian(g))));
    }

    static EigenformerModel make_model() {
        TrainConfig cfg;
        cfg.layers = 3;
        cfg.heads = 4;
        cfg.hidden_dim = 32;
        cfg.phi_hidden_dim = 16;
        cfg.node_feat_dim = 2;
        cfg.seed = 1;
        return build_model(cfg);
    }
};

} // namespace

static void BM_ModelForward(benchmark::State& state) {
    Fixture fx(static_cast<int>(state.range(0)));
    NoGradGuard ng;
    for (auto _ : state) {
        Tensor out = model_forward(fx.model, fx.ds.graphs[0], fx.ds.spectra[0], false, fx.rng);
        benchmark::DoNotOptimize(out.data());
    }
}
BENCHMARK(BM_ModelForward)->Arg(12)->Arg(24)->Arg(48);

static void BM_ForwardBackward(benchmark::State& state) {
    Fixture fx(static_cast<int>(state.range(0)));
    std::vector<Tensor> params = fx.model.parameter_tensors();
    std::vector<const Target*> targets{&fx.ds.graphs[0].target};
    for (auto _ : state) {
        for (Tensor& p : params) p.zero_grad();
        Tensor pred = model_forward(fx.model, fx.ds.graphs[0], fx.ds.spectra[0], true, fx.rng);
        Tensor loss = compute_loss(pred, targets, TaskKind::GraphRegression);
        backward(loss);
        benchmark::DoNotOptimize(loss.item());
    }
}
BENCHMARK(BM_ForwardBackward)->Arg(12)->Arg(24);

static void BM_TrainEpoch(benchmark::State& state) {
    Fixture fx(16);
    TrainConfig cfg;
    cfg.layers = 2;
    cfg.heads = 2;
    cfg.hidden_dim = 16;
    cfg.phi_hidden_dim = 8;
    cfg.node_feat_dim = 2;
    cfg.batch_size = 4;
    cfg.max_epochs = 1;
    cfg.warmup_epochs = 0;
    cfg.seed = 2;
    for (auto _ : state) {
        TrainResult r = fit(cfg, fx.ds, fx.ds);
        benchmark::DoNotOptimize(r.log.data());
    }
}
BENCHMARK(BM_TrainEpoch);

BENCHMARK_MAIN();
