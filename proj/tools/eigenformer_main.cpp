// Command-line front end: precompute | train | eval | inspect | selfcheck.

#include <iostream>

#include <CLI11.hpp>

#include "eigenformer/commands.hpp"
#include "eigenformer/data_io.hpp"
#include "eigenformer/spectral.hpp"
#include "eigenformer/training.hpp"

using namespace eigenformer;

int main(int argc, char** argv) {
    CLI::App app{"Eigenformer: spectrum-aware graph transformer at desk scale"};
    app.require_subcommand(1);

    PrecomputeOptions pre;
    auto* cmd_pre = app.add_subcommand("precompute", "Eigendecompose graphs and cache sigma tensors");
    cmd_pre->add_option("--input", pre.input, "graphs file, or generator spec 'gen:kind:k=v,...'")
        ->required();
    cmd_pre->add_option("--output", pre.output, "cache file to write")->required();
    cmd_pre->add_option("--emit-graphs", pre.emit_graphs,
                        "also write generated graphs to this file");
    cmd_pre->add_option("--workers", pre.workers, "parallel workers")->default_val(1);
    cmd_pre->add_option("--tol", pre.tol, "eigensolver relative tolerance")->default_val(1e-12);

    TrainOptions tr;
    auto* cmd_tr = app.add_subcommand("train", "Train a model from a config file");
    cmd_tr->add_option("--config", tr.config_path, "config json")->required();
    cmd_tr->add_option("--data", tr.data_path, "training graphs file")->required();
    cmd_tr->add_option("--cache", tr.cache_path, "spectra cache")->required();
    cmd_tr->add_option("--out", tr.out_dir, "run directory")->required();
    cmd_tr->add_option("--val-data", tr.val_data_path,
                       "validation graphs file (defaults to the training set)");

    EvalOptions ev;
    auto* cmd_ev = app.add_subcommand("eval", "Evaluate a checkpoint");
    cmd_ev->add_option("--checkpoint", ev.checkpoint_path, "model checkpoint")->required();
    cmd_ev->add_option("--data", ev.data_path, "graphs file")->required();
    cmd_ev->add_option("--cache", ev.cache_path, "spectra cache")->required();
    cmd_ev->add_option("--out", ev.out_path, "metrics json path");
    cmd_ev->add_option("--config", ev.config_path, "cross-check config against the checkpoint");

    InspectOptions ins;
    auto* cmd_ins = app.add_subcommand("inspect", "Dump phi curves, attention and sigma CSVs");
    cmd_ins->add_option("--checkpoint", ins.checkpoint_path, "model checkpoint")->required();
    cmd_ins->add_option("--data", ins.data_path, "graphs file")->required();
    cmd_ins->add_option("--cache", ins.cache_path, "spectra cache")->required();
    cmd_ins->add_option("--graph", ins.graph_index, "graph index for phi/attention dumps")
        ->default_val(0);
    cmd_ins->add_option("--out", ins.out_dir, "output directory")->required();

    SelfCheckOptions sc;
    auto* cmd_sc = app.add_subcommand("selfcheck", "Run the embedded invariant suite");
    cmd_sc->add_flag("--inject-sigma-perturbation", sc.inject_sigma_perturbation,
                     "negative control: perturb one sigma entry")
        ->group("");
    cmd_sc->add_flag("--inject-grad-bug", sc.inject_gradient_bug,
                     "negative control: corrupt one analytic gradient")
        ->group("");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e); // --help
        app.exit(e);
        return kExitUsage;
    }

    try {
        if (cmd_pre->parsed()) return precompute_command(pre, std::cout);
        if (cmd_tr->parsed()) return train_command(tr, std::cout);
        if (cmd_ev->parsed()) return eval_command(ev, std::cout);
        if (cmd_ins->parsed()) return inspect_command(ins, std::cout);
        if (cmd_sc->parsed()) return selfcheck_command(sc, std::cout);
    } catch (const SolverError& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return kExitNumerical;
    } catch (const OptimError& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return kExitNumerical;
    } catch (const GraphError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return kExitData;
    } catch (const IoError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return kExitData;
    } catch (const std::invalid_argument& e) {
        std::cerr << "validation error: " << e.what() << "\n";
        return kExitData;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitNumerical;
    }
    return kExitUsage;
}
