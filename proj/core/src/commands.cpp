#include "eigenformer/commands.hpp"

#include <atomic>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "eigenformer/checkpoint.hpp"
#include "eigenformer/data_io.hpp"
#include "eigenformer/inspect.hpp"
#include "eigenformer/training.hpp"
#include "eigenformer/util.hpp"

namespace eigenformer {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace {

std::vector<Graph> load_input_graphs(const std::string& input, const std::string& emit_graphs) {
    std::vector<Graph> graphs;
    if (input.rfind("gen:", 0) == 0) {
        graphs = generate_synthetic(GeneratorSpec::parse(input.substr(4)));
        if (!emit_graphs.empty()) write_graph_lines(emit_graphs, graphs);
    } else {
        if (!emit_graphs.empty())
            throw IoError("--emit-graphs only applies to generator inputs");
        graphs = parse_graph_lines(input).graphs;
    }
    return graphs;
}

/// Schema/shape consistency between a config and a parsed dataset; returns
/// every problem at once.
std::vector<std::string> check_config_against(const TrainConfig& cfg, const DatasetManifest& m) {
    std::vector<std::string> problems;
    auto bad = [&](const std::string& s) { problems.push_back(s); };

    if (m.node_categorical) {
        if (cfg.node_vocab < m.node_vocab)
            bad("config node_vocab " + std::to_string(cfg.node_vocab) + " < dataset vocab " +
                std::to_string(m.node_vocab));
    } else if (cfg.node_feat_dim != m.node_feat_dim) {
        bad("config node_feat_dim " + std::to_string(cfg.node_feat_dim) + " != dataset " +
            std::to_string(m.node_feat_dim));
    }
    if (m.has_edge_features) {
        if (m.edge_categorical) {
            if (cfg.edge_vocab < m.edge_vocab)
                bad("config edge_vocab " + std::to_string(cfg.edge_vocab) + " < dataset vocab " +
                    std::to_string(m.edge_vocab));
        } else if (cfg.edge_feat_dim != m.edge_feat_dim) {
            bad("config edge_feat_dim " + std::to_string(cfg.edge_feat_dim) + " != dataset " +
                std::to_string(m.edge_feat_dim));
        }
    } else if (cfg.has_edge_features()) {
        bad("config declares edge features but the dataset has none");
    }

    switch (cfg.task_kind()) {
        case TaskKind::GraphRegression:
            if (m.target_payload == "scalar") {
                if (cfg.out_dim != 1) bad("graph_regression on scalar targets needs out_dim 1");
            } else if (m.target_payload == "vector") {
                if (cfg.out_dim != m.target_width)
                    bad("out_dim " + std::to_string(cfg.out_dim) + " != target width " +
                        std::to_string(m.target_width));
            } else {
                bad("graph_regression needs scalar or vector targets, dataset has " +
                    m.target_payload);
            }
            break;
        case TaskKind::GraphClassification:
            if (m.target_payload != "scalar")
                bad("graph_classification needs scalar class targets, dataset has " +
                    m.target_payload);
            break;
        case TaskKind::MultilabelClassification:
            if (m.target_payload != "vector")
                bad("multilabel_classification needs vector targets, dataset has " +
                    m.target_payload);
            else if (cfg.out_dim != m.target_width)
                bad("out_dim " + std::to_string(cfg.out_dim) + " != label count " +
                    std::to_string(m.target_width));
            break;
        case TaskKind::NodeClassification:
            if (m.target_payload != "node_classes")
                bad("node_classification needs per-node class targets, dataset has " +
                    m.target_payload);
            else if (cfg.out_dim < m.num_classes)
                bad("out_dim " + std::to_string(cfg.out_dim) + " < observed classes " +
                    std::to_string(m.num_classes));
            break;
    }
    return problems;
}

Dataset load_with_spectra(const std::string& data_path, const std::string& cache_path) {
    Dataset ds = parse_graph_lines(data_path);
    CacheReadResult cache = read_cache(cache_path);
    if (cache.truncated)
        throw IoError("cache " + cache_path + " is truncated: " + cache.truncation_error);
    attach_spectra(ds, cache.records);
    return ds;
}

ordered_json epoch_to_json(const EpochRecord& rec) {
    ordered_json j;
    j["epoch"] = rec.epoch;
    j["lr"] = rec.lr;
    j["train_loss"] = rec.train_loss;
    j["val_metric"] = rec.val_metric;
    j["wall_ms"] = rec.wall_ms;
    return j;
}

} // namespace

int precompute_command(const PrecomputeOptions& opts, std::ostream& out) {
    const auto t0 = std::chrono::steady_clock::now();
    std::vector<Graph> graphs = load_input_graphs(opts.input, opts.emit_graphs);
    if (graphs.empty()) throw IoError("no graphs in input: " + opts.input);

    struct Slot {
        SpectraRecord record;
        bool verify_pass = false;
        std::string error;
    };
    std::vector<Slot> slots(graphs.size());
    std::atomic<size_t> next{0};
    const int workers = std::max(1, opts.workers);

    auto work = [&]() {
        for (;;) {
            const size_t i = next.fetch_add(1);
            if (i >= graphs.size()) return;
            try {
                const Graph& g = graphs[i];
                if (!is_connected(g))
                    throw GraphError(GraphError::Code::Disconnected,
                                     "graph " + std::to_string(i) + " is not connected");
                Spectrum s = eigendecompose(laplacian(g), opts.tol);
                SpectrumReport rep = verify_spectrum(g, s);
                SpectralDistances sd = sigma_tensor(g, s);
                slots[i].record = make_record(g, sd, s.residual_bound);
                slots[i].verify_pass = rep.pass;
                if (!rep.pass)
                    slots[i].error = "verification failed (identity err " +
                                     format_double(rep.max_identity_error) + ", residual " +
                                     format_double(rep.max_residual) + ")";
            } catch (const std::exception& e) {
                slots[i].error = e.what();
            }
        }
    };
    if (workers == 1) {
        work();
    } else {
        std::vector<std::thread> pool;
        for (int w = 0; w < workers; ++w) pool.emplace_back(work);
        for (auto& t : pool) t.join();
    }

    // Connectivity problems are data errors; verification problems are
    // numerical. Report the first of each kind.
    for (size_t i = 0; i < slots.size(); ++i) {
        if (!slots[i].error.empty() && !slots[i].verify_pass) {
            const bool disconnected = slots[i].error.find("connected") != std::string::npos;
            out << "graph " << i << ": " << slots[i].error << "\n";
            if (disconnected)
                throw GraphError(GraphError::Code::Disconnected,
                                 "graph " + std::to_string(i) + ": " + slots[i].error);
            throw SolverError("graph " + std::to_string(i) + ": " + slots[i].error, 0.0);
        }
    }

    std::vector<SpectraRecord> records;
    double max_residual = 0.0, max_sigma = 0.0;
    for (Slot& s : slots) {
        max_residual = std::max(max_residual, s.record.residual);
        for (double v : s.record.sigma) max_sigma = std::max(max_sigma, v);
        records.push_back(std::move(s.record));
    }
    write_cache(opts.output, records);

    const auto t1 = std::chrono::steady_clock::now();
    const double wall_s =
        std::chrono::duration_cast<std::chrono::milliseconds>(t1 - t0).count() / 1000.0;
    out << "graphs processed: " << records.size() << "\n"
        << "max residual:     " << format_double(max_residual) << "\n"
        << "max sigma:        " << format_double(max_sigma) << "\n"
        << "wall time:        " << wall_s << " s\n"
        << "cache written:    " << opts.output << "\n";
    return kExitOk;
}

int train_command(const TrainOptions& opts, std::ostream& out) {
    TrainConfig cfg = TrainConfig::load(opts.config_path);
    std::vector<std::string> problems = cfg.validate();

    Dataset train_ds = load_with_spectra(opts.data_path, opts.cache_path);
    auto schema_problems = check_config_against(cfg, train_ds.manifest);
    problems.insert(problems.end(), schema_problems.begin(), schema_problems.end());
    if (!problems.empty()) {
        out << "config validation failed:\n";
        for (const auto& p : problems) out << "  - " << p << "\n";
        return kExitData;
    }

    Dataset val_ds =
        opts.val_data_path.empty() ? train_ds : load_with_spectra(opts.val_data_path, opts.cache_path);

    fs::create_directories(opts.out_dir);
    // Verbatim copy of the config file.
    {
        std::ifstream src(opts.config_path, std::ios::binary);
        std::ofstream dst(fs::path(opts.out_dir) / "config.json", std::ios::binary | std::ios::trunc);
        dst << src.rdbuf();
    }

    std::ofstream log(fs::path(opts.out_dir) / "log.jsonl", std::ios::trunc);
    if (!log) throw IoError("cannot open epoch log in " + opts.out_dir);
    TrainResult result = fit(cfg, train_ds, val_ds, [&](const EpochRecord& rec) {
        log << epoch_to_json(rec).dump() << "\n";
        log.flush();
    });

    const std::string ckpt = (fs::path(opts.out_dir) / "best.ckpt").string();
    save_checkpoint(result.best_model, ckpt);

    ordered_json metrics;
    metrics["task"] = cfg.task;
    metrics["metric"] = primary_metric_name(cfg.task_kind());
    metrics["best_epoch"] = result.best_epoch;
    metrics["best_val_metric"] = result.best_val;
    metrics["epochs_run"] = result.log.size();
    metrics["aborted"] = result.nan_abort;
    if (result.nan_abort) metrics["abort_reason"] = result.abort_reason;
    std::ofstream mfile(fs::path(opts.out_dir) / "metrics.json", std::ios::trunc);
    mfile << metrics.dump(2) << "\n";

    out << "epochs run:      " << result.log.size() << "\n"
        << "best epoch:      " << result.best_epoch << "\n"
        << "best val metric: " << format_double(result.best_val) << "\n"
        << "checkpoint:      " << ckpt << "\n";
    if (result.nan_abort) {
        out << "aborted: " << result.abort_reason << " (last good checkpoint retained)\n";
        return kExitNumerical;
    }
    return kExitOk;
}

int eval_command(const EvalOptions& opts, std::ostream& out) {
    EigenformerModel model = load_checkpoint(opts.checkpoint_path);
    if (!opts.config_path.empty()) {
        TrainConfig external = TrainConfig::load(opts.config_path);
        if (external.digest() != model.config.digest())
            throw IoError("config " + opts.config_path +
                          " does not match the checkpoint's config digest");
    }

    Dataset ds = load_with_spectra(opts.data_path, opts.cache_path);
    auto problems = check_config_against(model.config, ds.manifest);
    if (!problems.empty()) {
        out << "checkpoint/dataset mismatch:\n";
        for (const auto& p : problems) out << "  - " << p << "\n";
        return kExitData;
    }

    auto [pred, targets] = predict_dataset(model, ds, model.config.batch_size);
    auto metrics = compute_metrics(pred, targets, model.config.task_kind());

    ordered_json j;
    j["task"] = model.config.task;
    for (const auto& [k, v] : metrics) j[k] = v;
    const std::string out_path =
        opts.out_path.empty()
            ? (fs::path(opts.checkpoint_path).parent_path() / "eval_metrics.json").string()
            : opts.out_path;
    std::ofstream f(out_path, std::ios::trunc);
    if (!f) throw IoError("cannot write metrics to " + out_path);
    f << j.dump(2) << "\n";

    for (const auto& [k, v] : metrics) out << k << ": " << format_double(v) << "\n";
    out << "written: " << out_path << "\n";
    return kExitOk;
}

int inspect_command(const InspectOptions& opts, std::ostream& out) {
    EigenformerModel model = load_checkpoint(opts.checkpoint_path);
    Dataset ds = load_with_spectra(opts.data_path, opts.cache_path);
    if (opts.graph_index < 0 || opts.graph_index >= static_cast<int>(ds.graphs.size()))
        throw IoError("graph index " + std::to_string(opts.graph_index) + " out of range (" +
                      std::to_string(ds.graphs.size()) + " graphs)");

    fs::create_directories(opts.out_dir);
    const SpectralDistances& sd = ds.spectra[opts.graph_index];

    write_phi_curves_csv(model, sd, (fs::path(opts.out_dir) / "phi_curves.csv").string());
    int files = 1;
    for (size_t l = 0; l < model.layers.size(); ++l) {
        const int planes = model.layers[l].head_mode == HeadMode::PerHead ? model.layers[l].heads : 1;
        for (int h = 0; h < planes; ++h) {
            const std::string name =
                "attention_layer" + std::to_string(l) + "_head" + std::to_string(h) + ".csv";
            write_attention_csv(model, sd, static_cast<int>(l), h,
                                (fs::path(opts.out_dir) / name).string());
            ++files;
        }
    }
    write_sigma_profile_csv(ds, (fs::path(opts.out_dir) / "sigma_profile.csv").string());
    ++files;

    out << "wrote " << files << " csv files to " << opts.out_dir << "\n";
    return kExitOk;
}

// ---- selfcheck ---------------------------------------------------------------

namespace {

struct CheckTimer {
    std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();
    double ms() const {
        return std::chrono::duration_cast<std::chrono::microseconds>(
                   std::chrono::steady_clock::now() - start)
                   .count() /
               1000.0;
    }
};

Dataset selfcheck_corpus() {
    GeneratorSpec er;
    er.kind = "er";
    er.count = 14;
    er.n_min = 5;
    er.n_max = 14;
    er.p = 0.35;
    er.seed = 11;
    GeneratorSpec sbm;
    sbm.kind = "sbm";
    sbm.count = 14;
    sbm.n_min = 8;
    sbm.n_max = 16;
    sbm.seed = 12;
    GeneratorSpec tree;
    tree.kind = "tree";
    tree.count = 12;
    tree.n_min = 4;
    tree.n_max = 12;
    tree.seed = 13;

    std::vector<Graph> graphs = generate_synthetic(er);
    for (auto& g : generate_synthetic(sbm)) graphs.push_back(std::move(g));
    for (auto& g : generate_synthetic(tree)) graphs.push_back(std::move(g));
    Dataset ds = make_dataset(std::move(graphs));
    for (const Graph& g : ds.graphs)
        ds.spectra.push_back(sigma_tensor(g, eigendecompose(laplacian(g))));
    return ds;
}

} // namespace

SelfCheckReport run_selfcheck(const SelfCheckOptions& opts) {
    SelfCheckReport report;
    Dataset corpus = selfcheck_corpus();

    {
        CheckTimer timer;
        SelfCheckReport::Entry e;
        e.name = "sigma-bound";
        double max_v = 0.0, min_v = 0.0;
        std::vector<SpectralDistances> spectra = corpus.spectra;
        if (opts.inject_sigma_perturbation && !spectra.empty() && !spectra[0].sigma.empty())
            spectra[0].sigma[spectra[0].sigma.size() / 2] += 1.5; // negative-control hook
        for (const SpectralDistances& sd : spectra)
            for (double v : sd.sigma) {
                max_v = std::max(max_v, v);
                min_v = std::min(min_v, v);
            }
        e.pass = max_v <= 1.0 + 1e-9 && min_v >= 0.0;
        e.detail = "max sigma " + format_double(max_v);
        e.ms = timer.ms();
        report.entries.push_back(e);
    }

    {
        CheckTimer timer;
        SelfCheckReport::Entry e;
        e.name = "smoothness-identity";
        double worst_identity = 0.0, worst_residual_rel = 0.0;
        bool pass = true;
        for (const Graph& g : corpus.graphs) {
            Spectrum s = eigendecompose(laplacian(g));
            SpectrumReport rep = verify_spectrum(g, s);
            worst_identity = std::max(worst_identity, rep.max_identity_error);
            worst_residual_rel =
                std::max(worst_residual_rel,
                         rep.max_residual / std::max(rep.laplacian_frobenius, 1e-300));
            pass = pass && rep.pass;
        }
        e.pass = pass && worst_identity <= 1e-8 && worst_residual_rel <= 1e-8;
        e.detail = "max identity err " + format_double(worst_identity);
        e.ms = timer.ms();
        report.entries.push_back(e);
    }

    {
        CheckTimer timer;
        SelfCheckReport::Entry e;
        e.name = "grad-check";
        GeneratorSpec spec;
        spec.kind = "er";
        spec.count = 1;
        spec.n_min = spec.n_max = 6;
        spec.p = 0.5;
        spec.task = "spectral_regression";
        spec.seed = 21;
        Dataset ds = make_dataset(generate_synthetic(spec));
        ds.spectra.push_back(sigma_tensor(ds.graphs[0], eigendecompose(laplacian(ds.graphs[0]))));

        TrainConfig cfg;
        cfg.layers = 1;
        cfg.heads = 2;
        cfg.hidden_dim = 8;
        cfg.phi_hidden_dim = 4;
        cfg.attn_dropout = 0.0;
        cfg.dropout = 0.0;
        cfg.node_feat_dim = 2;
        cfg.seed = 7;
        EigenformerModel model = build_model(cfg);
        std::vector<Tensor> params = model.parameter_tensors();

        Tensor theta1 = model.layers[0].theta1;
        std::mt19937_64 rng(0);
        auto f = [&]() {
            Tensor pred = model_forward(model, ds.graphs[0], ds.spectra[0], /*train=*/false, rng);
            std::vector<const Target*> targets{&ds.graphs[0].target};
            return compute_loss(pred, targets, TaskKind::GraphRegression);
        };
        double err;
        if (opts.inject_gradient_bug) {
            // Negative-control hook: corrupt one analytic gradient the way a
            // broken pullback would, and confirm the detector fires.
            for (Tensor& p : params) p.zero_grad();
            Tensor loss = f();
            backward(loss);
            const double analytic = theta1.grad_ref()[0] + 0.5;
            NoGradGuard ng;
            const double h = 1e-5;
            auto& vals = *theta1.values;
            const double saved = vals[0];
            vals[0] = saved + h;
            const double fp = f().item();
            vals[0] = saved - h;
            const double fm = f().item();
            vals[0] = saved;
            const double numeric = (fp - fm) / (2 * h);
            err = std::abs(analytic - numeric) /
                  std::max({std::abs(analytic), std::abs(numeric), 1e-8});
        } else {
            err = grad_check(f, params, 1e-5);
        }
        e.pass = err < 1e-4;
        e.detail = "max rel err " + format_double(err);
        e.ms = timer.ms();
        report.entries.push_back(e);
    }

    {
        CheckTimer timer;
        SelfCheckReport::Entry e;
        e.name = "schedule-shape";
        LRSchedule s;
        s.base_lr = 1e-3;
        s.warmup_epochs = 5;
        s.max_epochs = 105;
        s.steps_per_epoch = 10;
        bool pass = lr_at(s, 0) == 0.0;
        pass = pass && std::abs(lr_at(s, s.warmup_steps()) - s.base_lr) < 1e-15;
        const long mid = s.warmup_steps() + (s.total_steps() - s.warmup_steps()) / 2;
        pass = pass && std::abs(lr_at(s, mid) - s.base_lr / 2) < 1e-12;
        pass = pass && lr_at(s, s.total_steps()) == 0.0;
        double prev = lr_at(s, 0);
        bool continuous = true;
        for (long step = 1; step <= s.total_steps(); ++step) {
            const double cur = lr_at(s, step);
            continuous = continuous && cur >= 0.0 &&
                         std::abs(cur - prev) <= s.base_lr / 4.0; // no jumps
            prev = cur;
        }
        e.pass = pass && continuous;
        e.detail = pass ? "warmup+cosine endpoints exact" : "endpoint mismatch";
        e.ms = timer.ms();
        report.entries.push_back(e);
    }

    report.pass = true;
    for (const auto& e : report.entries) report.pass = report.pass && e.pass;
    return report;
}

int selfcheck_command(const SelfCheckOptions& opts, std::ostream& out) {
    SelfCheckReport report = run_selfcheck(opts);
    for (const auto& e : report.entries)
        out << (e.pass ? "PASS" : "FAIL") << "  " << e.name << "  (" << e.ms << " ms)  "
            << e.detail << "\n";
    out << (report.pass ? "selfcheck: all checks passed\n" : "selfcheck: FAILURES present\n");
    return report.pass ? kExitOk : kExitNumerical;
}

} // namespace eigenformer
