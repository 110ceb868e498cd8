// Acceptance suite: one pass/fail line per criterion, nonzero exit on any
// failure. Each criterion pins its tolerance in code.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>
#include <sstream>

#include <json.hpp>

#include "eigenformer/checkpoint.hpp"
#include "eigenformer/commands.hpp"
#include "eigenformer/data_io.hpp"
#include "eigenformer/inspect.hpp"
#include "eigenformer/training.hpp"

using namespace eigenformer;
namespace fs = std::filesystem;

namespace {

struct Harness {
    int failures = 0;
    int count = 0;

    template <typename F>
    void criterion(const char* id, const std::string& label, double budget_s, F&& body) {
        ++count;
        const auto t0 = std::chrono::steady_clock::now();
        std::string detail;
        bool ok = false;
        try {
            ok = body(detail);
        } catch (const std::exception& e) {
            detail = std::string("exception: ") + e.what();
        }
        const double secs =
            std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() -
                                                                  t0)
                .count() /
            1000.0;
        if (budget_s > 0 && secs > budget_s) {
            ok = false;
            detail += (detail.empty() ? "" : "; ") + std::string("over time budget ") +
                      std::to_string(budget_s) + "s";
        }
        std::printf("%s criterion %-3s %s (%.2fs)%s%s\n", ok ? "PASS" : "FAIL", id, label.c_str(),
                    secs, detail.empty() ? "" : " -- ", detail.c_str());
        std::fflush(stdout);
        if (!ok) ++failures;
    }
};

/// Mixed ER/SBM/tree corpus, n in [4,24], connected by construction.
Dataset acceptance_corpus() {
    std::vector<Graph> graphs;
    GeneratorSpec er;
    er.kind = "er";
    er.count = 80;
    er.n_min = 4;
    er.n_max = 24;
    er.p = 0.35;
    er.seed = 101;
    GeneratorSpec sbm;
    sbm.kind = "sbm";
    sbm.count = 60;
    sbm.n_min = 8;
    sbm.n_max = 24;
    sbm.p_in = 0.85;
    sbm.p_out = 0.1;
    sbm.seed = 102;
    GeneratorSpec tree;
    tree.kind = "tree";
    tree.count = 60;
    tree.n_min = 4;
    tree.n_max = 24;
    tree.seed = 103;
    for (auto& g : generate_synthetic(er)) graphs.push_back(std::move(g));
    for (auto& g : generate_synthetic(sbm)) graphs.push_back(std::move(g));
    for (auto& g : generate_synthetic(tree)) graphs.push_back(std::move(g));
    Dataset ds = make_dataset(std::move(graphs));
    for (const Graph& g : ds.graphs)
        ds.spectra.push_back(sigma_tensor(g, eigendecompose(laplacian(g))));
    return ds;
}

struct ScratchDir {
    fs::path path = "acceptance_scratch";
    ScratchDir() {
        std::error_code ec;
        fs::remove_all(path, ec);
        fs::create_directories(path);
    }
    ~ScratchDir() {
        std::error_code ec;
        fs::remove_all(path, ec);
    }
    std::string file(const std::string& name) const { return (path / name).string(); }
};

std::string read_bytes(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    return std::string((std::istreambuf_iterator<char>(in)), {});
}

} // namespace

int main() {
    Harness h;
    ScratchDir scratch;

    Dataset corpus = acceptance_corpus();

    // 1. Appendix A bound over the corpus.
    h.criterion("1", "sigma bound 0 <= sigma <= 1+1e-9 over 200 mixed graphs", 60.0,
                [&](std::string& detail) {
                    double max_v = 0.0, min_v = 0.0;
                    for (const auto& sd : corpus.spectra)
                        for (double v : sd.sigma) {
                            max_v = std::max(max_v, v);
                            min_v = std::min(min_v, v);
                        }
                    detail = "graphs=" + std::to_string(corpus.graphs.size()) +
                             " max sigma=" + std::to_string(max_v);
                    return corpus.graphs.size() >= 200 && min_v >= 0.0 && max_v <= 1.0 + 1e-9;
                });

    // 2. Smoothness identity and eigen-residual on the same corpus.
    h.criterion("2", "eigen identity |lambda - edge sum| <= 1e-8, residual <= 1e-8*||L||_F", 60.0,
                [&](std::string& detail) {
                    double worst_id = 0.0, worst_rel = 0.0;
                    for (const Graph& g : corpus.graphs) {
                        Spectrum s = eigendecompose(laplacian(g));
                        SpectrumReport rep = verify_spectrum(g, s);
                        worst_id = std::max(worst_id, rep.max_identity_error);
                        worst_rel = std::max(
                            worst_rel, rep.max_residual / std::max(rep.laplacian_frobenius, 1e-300));
                    }
                    detail = "max identity=" + std::to_string(worst_id);
                    return worst_id <= 1e-8 && worst_rel <= 1e-8;
                });

    // 3. Closed-form sigma fixtures.
    h.criterion("3", "closed-form fixtures: path-2 sigma=1, path-3 {0.5,1,0.5,0} to 1e-10", 10.0,
                [&](std::string& detail) {
                    Graph p2 = build_graph(2, {{0, 1}});
                    SpectralDistances s2 = sigma_tensor(p2, eigendecompose(laplacian(p2)));
                    bool ok = std::abs(s2.lambdas[0] - 2.0) <= 1e-10 &&
                              std::abs(s2.at(0, 0, 1) - 1.0) <= 1e-10;

                    Graph p3 = build_graph(3, {{0, 1}, {1, 2}});
                    SpectralDistances s3 = sigma_tensor(p3, eigendecompose(laplacian(p3)));
                    ok = ok && std::abs(s3.at(0, 0, 1) - 0.5) <= 1e-10 &&
                         std::abs(s3.at(0, 0, 2) - 1.0) <= 1e-10 &&
                         std::abs(s3.at(0, 1, 2) - 0.5) <= 1e-10 &&
                         std::abs(s3.at(1, 0, 2) - 0.0) <= 1e-10 &&
                         std::abs(s3.at(1, 0, 1) - 0.5) <= 1e-10 &&
                         std::abs(s3.at(1, 1, 2) - 0.5) <= 1e-10;
                    detail = "path-2 sigma=" + std::to_string(s2.at(0, 0, 1));
                    return ok;
                });

    // 4. Attention normalization over 50 random (graph, phi) pairs.
    h.criterion("4", "attention rows sum to 1 within 1e-9; phi=0 exactly uniform", 30.0,
                [&](std::string& detail) {
                    std::mt19937_64 rng(404);
                    double worst = 0.0;
                    for (int t = 0; t < 50; ++t) {
                        const Graph& g = corpus.graphs[t * 3 % corpus.graphs.size()];
                        const SpectralDistances& sd = corpus.spectra[t * 3 % corpus.graphs.size()];
                        Tensor imp = Tensor::uniform({sd.num_active(), 2}, -2.0, 2.0, rng);
                        std::mt19937_64 drng(0);
                        Tensor alpha = saa_attention(sd, imp, 0.0, false, drng);
                        const int n = sd.num_nodes;
                        for (int plane = 0; plane < 2; ++plane)
                            for (int i = 0; i < n; ++i) {
                                double row = 0.0;
                                for (int j = 0; j < n; ++j)
                                    row += alpha.at((static_cast<size_t>(plane) * n + i) * n + j);
                                worst = std::max(worst, std::abs(row - 1.0));
                            }

                        Tensor zero = Tensor::zeros({sd.num_active(), 1});
                        Tensor uni = saa_attention(sd, zero, 0.0, false, drng);
                        for (size_t idx = 0; idx < uni.numel(); ++idx)
                            if (uni.at(idx) != 1.0 / n) return false;
                    }
                    detail = "worst row-sum error=" + std::to_string(worst);
                    return worst <= 1e-9;
                });

    // 5. Full-model gradient integrity.
    h.criterion("5", "full-model grad check (2 layers, d=8, H=2, 8 nodes) < 1e-4", 120.0,
                [&](std::string& detail) {
                    std::mt19937_64 rng(505);
                    std::uniform_real_distribution<double> u(-1.0, 1.0);
                    std::vector<std::pair<int, int>> edges;
                    for (int i = 0; i < 8; ++i)
                        for (int j = i + 1; j < 8; ++j)
                            if (u(rng) > 0.0) edges.emplace_back(i, j);
                    std::vector<double> nf, ef;
                    for (int i = 0; i < 16; ++i) nf.push_back(u(rng));
                    Graph g0 = build_graph(8, edges);
                    if (!is_connected(g0)) return false;
                    for (int e = 0; e < g0.num_edges() * 2; ++e) ef.push_back(u(rng));
                    Graph g = build_graph(8, g0.edges, Features::from_dense(8, 2, nf),
                                          Features::from_dense(g0.num_edges(), 2, ef),
                                          Target::classes({0, 1, 2, 0, 1, 2, 0, 1}));
                    SpectralDistances sd = sigma_tensor(g, eigendecompose(laplacian(g)));

                    TrainConfig cfg;
                    cfg.layers = 2;
                    cfg.heads = 2;
                    cfg.hidden_dim = 8;
                    cfg.phi_hidden_dim = 4;
                    cfg.attn_dropout = 0.0;
                    cfg.dropout = 0.0;
                    cfg.task = "node_classification";
                    cfg.out_dim = 3;
                    cfg.node_feat_dim = 2;
                    cfg.edge_feat_dim = 2;
                    cfg.seed = 42;
                    EigenformerModel model = build_model(cfg);
                    // Nonzero phi output so attention gradients flow.
                    std::mt19937_64 prng(9);
                    for (auto& lay : model.layers) {
                        for (double& v : *lay.phi.w2.values) v = u(prng) * 0.5;
                        for (double& v : *lay.phi.b2.values) v = u(prng) * 0.5;
                        for (double& v : *lay.theta2.values) v = u(prng) * 0.5;
                    }

                    std::mt19937_64 fix(0);
                    std::vector<const Target*> targets{&g.target};
                    auto f = [&] {
                        Tensor pred = model_forward(model, g, sd, /*train=*/true, fix);
                        return compute_loss(pred, targets, TaskKind::NodeClassification);
                    };
                    const double err = grad_check(f, model.parameter_tensors(), 1e-5);
                    detail = "max rel err=" + std::to_string(err);
                    return err < 1e-4;
                });

    // 6. Permutation equivariance on simple-spectrum graphs.
    h.criterion("6", "node-task permutation equivariance within 1e-8 on 20 graphs", 60.0,
                [&](std::string& detail) {
                    TrainConfig cfg;
                    cfg.layers = 2;
                    cfg.heads = 2;
                    cfg.hidden_dim = 16;
                    cfg.phi_hidden_dim = 8;
                    cfg.attn_dropout = 0.0;
                    cfg.task = "node_classification";
                    cfg.out_dim = 2;
                    cfg.node_feat_dim = 2;
                    cfg.seed = 606;
                    EigenformerModel model = build_model(cfg);
                    std::mt19937_64 prng(1);
                    std::uniform_real_distribution<double> u(-0.5, 0.5);
                    for (auto& lay : model.layers)
                        for (double& v : *lay.phi.w2.values) v = u(prng);

                    std::mt19937_64 rng(607);
                    std::uniform_real_distribution<double> feat(-1.0, 1.0);
                    int done = 0;
                    double worst = 0.0;
                    while (done < 20) {
                        const int n = 6 + static_cast<int>(rng() % 8);
                        std::vector<std::pair<int, int>> edges;
                        for (int i = 0; i < n; ++i)
                            for (int j = i + 1; j < n; ++j)
                                if (feat(rng) > 0.0) edges.emplace_back(i, j);
                        Graph base = build_graph(n, edges);
                        if (!is_connected(base)) continue;
                        Spectrum s = eigendecompose(laplacian(base));
                        double gap = 1e9;
                        for (int k = 1; k < n; ++k)
                            gap = std::min(gap, s.eigenvalues[k] - s.eigenvalues[k - 1]);
                        if (gap <= 1e-3) continue; // well above the 1e-6 precondition
                        ++done;

                        std::vector<double> nf;
                        for (int i = 0; i < 2 * n; ++i) nf.push_back(feat(rng));
                        Graph g = build_graph(n, base.edges, Features::from_dense(n, 2, nf));
                        SpectralDistances sd = sigma_tensor(g, s);
                        NodePermutation p = NodePermutation::random(n, rng());
                        Graph pg = permute(g, p);
                        SpectralDistances psd =
                            sigma_tensor(pg, eigendecompose(laplacian(pg)));

                        std::mt19937_64 fix(0);
                        Tensor out = model_forward(model, g, sd, false, fix);
                        Tensor pout = model_forward(model, pg, psd, false, fix);
                        for (int i = 0; i < n; ++i)
                            for (int c = 0; c < 2; ++c)
                                worst = std::max(
                                    worst,
                                    std::abs(pout.at(static_cast<size_t>(p.mapping[i]) * 2 + c) -
                                             out.at(static_cast<size_t>(i) * 2 + c)));
                    }
                    detail = "worst deviation=" + std::to_string(worst);
                    return worst <= 1e-8;
                });

    // 7a. Overfit sanity: synthetic spectral regression.
    h.criterion("7a", "overfit regression: train MAE < 0.05*std within 500 epochs", 300.0,
                [&](std::string& detail) {
                    GeneratorSpec spec;
                    spec.kind = "er";
                    spec.count = 32;
                    spec.n_min = 11;
                    spec.n_max = 13;
                    spec.p = 0.35;
                    spec.task = "spectral_regression";
                    spec.seed = 701;
                    Dataset ds = make_dataset(generate_synthetic(spec));
                    for (const Graph& g : ds.graphs)
                        ds.spectra.push_back(sigma_tensor(g, eigendecompose(laplacian(g))));

                    double mean = 0.0;
                    for (const Graph& g : ds.graphs) mean += g.target.values[0];
                    mean /= ds.graphs.size();
                    double var = 0.0;
                    for (const Graph& g : ds.graphs) {
                        const double d = g.target.values[0] - mean;
                        var += d * d;
                    }
                    const double target_std = std::sqrt(var / ds.graphs.size());

                    // Batch 16 keeps the train-mode batch statistics close to
                    // the running statistics the MAE is evaluated under;
                    // small batches plateau on that mismatch alone.
                    TrainConfig cfg;
                    cfg.layers = 3;
                    cfg.heads = 4;
                    cfg.hidden_dim = 32;
                    cfg.phi_hidden_dim = 32;
                    cfg.attn_dropout = 0.0;
                    cfg.dropout = 0.0;
                    cfg.node_feat_dim = 2;
                    cfg.batch_size = 16;
                    cfg.lr = 1e-2;
                    cfg.max_epochs = 500;
                    cfg.warmup_epochs = 10;
                    cfg.weight_decay = 0.0;
                    cfg.seed = 7;
                    TrainResult r = fit(cfg, ds, ds);
                    detail = "best train MAE=" + std::to_string(r.best_val) +
                             " threshold=" + std::to_string(0.05 * target_std);
                    return !r.nan_abort && r.best_val < 0.05 * target_std;
                });

    // 7b. Overfit sanity: SBM node classification.
    h.criterion("7b", "overfit SBM labels: train accuracy >= 95% within 300 epochs", 300.0,
                [&](std::string& detail) {
                    GeneratorSpec spec;
                    spec.kind = "sbm";
                    spec.count = 64;
                    spec.n_min = 18;
                    spec.n_max = 22;
                    spec.p_in = 0.9;
                    spec.p_out = 0.05;
                    spec.reveal_fraction = 0.2;
                    spec.task = "block_labels";
                    spec.seed = 702;
                    Dataset ds = make_dataset(generate_synthetic(spec));
                    for (const Graph& g : ds.graphs)
                        ds.spectra.push_back(sigma_tensor(g, eigendecompose(laplacian(g))));

                    TrainConfig cfg;
                    cfg.layers = 3;
                    cfg.heads = 4;
                    cfg.hidden_dim = 32;
                    cfg.phi_hidden_dim = 16;
                    cfg.attn_dropout = 0.0;
                    cfg.dropout = 0.0;
                    cfg.task = "node_classification";
                    cfg.out_dim = 2;
                    cfg.node_vocab = 3;
                    cfg.batch_size = 16;
                    cfg.lr = 2e-3;
                    cfg.max_epochs = 300;
                    cfg.warmup_epochs = 10;
                    cfg.weight_decay = 0.0;
                    cfg.seed = 7;
                    TrainResult r = fit(cfg, ds, ds);
                    detail = "best train accuracy=" + std::to_string(r.best_val);
                    return !r.nan_abort && r.best_val >= 0.95;
                });

    // 8. Schedule and optimizer closed forms.
    h.criterion("8", "lr_at matches closed form at 1000 steps; AdamW first step to 1e-12", 10.0,
                [&](std::string& detail) {
                    LRSchedule s;
                    s.base_lr = 7.5e-4;
                    s.warmup_epochs = 7;
                    s.max_epochs = 113;
                    s.steps_per_epoch = 13;
                    const long total = s.total_steps();
                    const long warm = s.warmup_steps();
                    double worst = 0.0;
                    for (int t = 0; t < 1000; ++t) {
                        const long step = static_cast<long>((total * static_cast<long>(t)) / 999);
                        // Independent closed form.
                        double expect;
                        if (step < warm)
                            expect = s.base_lr * static_cast<double>(step) / warm;
                        else if (step >= total)
                            expect = 0.0;
                        else
                            expect = s.base_lr * 0.5 *
                                     (1.0 + std::cos(M_PI * static_cast<double>(step - warm) /
                                                     static_cast<double>(total - warm)));
                        worst = std::max(worst, std::abs(lr_at(s, step) - expect));
                    }
                    if (worst > 1e-12) {
                        detail = "lr mismatch " + std::to_string(worst);
                        return false;
                    }

                    std::mt19937_64 rng(808);
                    Tensor w = Tensor::uniform({5}, -2.0, 2.0, rng, true);
                    const std::vector<double> theta0 = *w.values;
                    std::vector<double> grads = {0.4, -1.2, 0.001, 3.0, -0.6};
                    w.ensure_grad();
                    *w.grad = grads;
                    std::vector<Tensor> params{w};
                    OptimizerState opt(params, /*weight_decay=*/0.01);
                    const double lr = 5e-3;
                    adamw_step(opt, params, lr);
                    double worst2 = 0.0;
                    for (size_t i = 0; i < grads.size(); ++i) {
                        // First step: m_hat = g, v_hat = g^2.
                        const double expect = theta0[i] -
                                              lr * grads[i] / (std::abs(grads[i]) + 1e-8) -
                                              lr * 0.01 * theta0[i];
                        worst2 = std::max(worst2, std::abs((*w.values)[i] - expect));
                    }
                    detail = "adamw first-step err=" + std::to_string(worst2);
                    return worst2 <= 1e-12;
                });

    // 9. Determinism: byte-identical logs (timing field excluded) and
    //    byte-stable cache writes.
    h.criterion("9", "determinism: identical epoch logs (sans wall_ms) and cache bytes", 120.0,
                [&](std::string& detail) {
                    std::ostringstream sink;
                    PrecomputeOptions pre;
                    pre.input = "gen:er:count=12,n_min=6,n_max=10,p=0.4,task=spectral_regression,seed=909";
                    pre.output = scratch.file("det_cache_a.bin");
                    pre.emit_graphs = scratch.file("det_data.jsonl");
                    if (precompute_command(pre, sink) != kExitOk) return false;
                    pre.output = scratch.file("det_cache_b.bin");
                    if (precompute_command(pre, sink) != kExitOk) return false;
                    if (read_bytes(scratch.file("det_cache_a.bin")) !=
                        read_bytes(scratch.file("det_cache_b.bin"))) {
                        detail = "cache bytes differ";
                        return false;
                    }

                    TrainConfig cfg;
                    cfg.layers = 2;
                    cfg.heads = 2;
                    cfg.hidden_dim = 16;
                    cfg.phi_hidden_dim = 8;
                    cfg.node_feat_dim = 2;
                    cfg.batch_size = 4;
                    cfg.max_epochs = 6;
                    cfg.warmup_epochs = 1;
                    cfg.seed = 909;
                    std::ofstream(scratch.file("det_config.json")) << cfg.to_json();

                    TrainOptions tr;
                    tr.config_path = scratch.file("det_config.json");
                    tr.data_path = scratch.file("det_data.jsonl");
                    tr.cache_path = scratch.file("det_cache_a.bin");
                    tr.out_dir = scratch.file("det_run_a");
                    if (train_command(tr, sink) != kExitOk) return false;
                    tr.out_dir = scratch.file("det_run_b");
                    if (train_command(tr, sink) != kExitOk) return false;

                    // wall_ms is measured time and necessarily varies; every
                    // other byte of the logs must match exactly.
                    auto canonical = [](const std::string& path) {
                        std::ifstream in(path);
                        std::string line, out;
                        while (std::getline(in, line)) {
                            auto j = nlohmann::ordered_json::parse(line);
                            j.erase("wall_ms");
                            out += j.dump() + "\n";
                        }
                        return out;
                    };
                    const std::string log_a = canonical(scratch.file("det_run_a") + "/log.jsonl");
                    const std::string log_b = canonical(scratch.file("det_run_b") + "/log.jsonl");
                    if (log_a.empty() || log_a != log_b) {
                        detail = "epoch logs differ";
                        return false;
                    }
                    detail = "logs identical over " + std::to_string(cfg.max_epochs) + " epochs";
                    return true;
                });

    // 10. Fig. 2 analogue on the SBM corpus: adjacent pairs are closer at the
    //     lowest active frequency.
    h.criterion("10", "SBM adjacent mean sigma < non-adjacent mean at lowest frequency", 60.0,
                [&](std::string& detail) {
                    GeneratorSpec spec;
                    spec.kind = "sbm";
                    spec.count = 40;
                    spec.n_min = 14;
                    spec.n_max = 22;
                    spec.p_in = 0.85;
                    spec.p_out = 0.08;
                    spec.seed = 1001;
                    Dataset ds = make_dataset(generate_synthetic(spec));
                    for (const Graph& g : ds.graphs)
                        ds.spectra.push_back(sigma_tensor(g, eigendecompose(laplacian(g))));
                    auto [adj, nonadj] = lowest_frequency_adjacency_means(ds);
                    detail = "adjacent=" + std::to_string(adj) +
                             " nonadjacent=" + std::to_string(nonadj);
                    return adj < nonadj;
                });

    std::printf("%d/%d criteria passed\n", h.count - h.failures, h.count);
    return h.failures == 0 ? 0 : 1;
}
