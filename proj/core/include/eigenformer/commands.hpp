#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace eigenformer {

// Exit code conventions shared by every subcommand.
constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitNumerical = 3;

struct PrecomputeOptions {
    std::string input;       // graphs file, or inline generator spec "gen:..."
    std::string output;      // cache path
    std::string emit_graphs; // optional: also write generated graphs here
    int workers = 1;
    double tol = 1e-12;
};
int precompute_command(const PrecomputeOptions& opts, std::ostream& out);

struct TrainOptions {
    std::string config_path;
    std::string data_path;
    std::string cache_path;
    std::string out_dir;
    std::string val_data_path; // optional; defaults to evaluating on the training set
};
int train_command(const TrainOptions& opts, std::ostream& out);

struct EvalOptions {
    std::string checkpoint_path;
    std::string data_path;
    std::string cache_path;
    std::string out_path;    // metrics json; defaults next to the checkpoint
    std::string config_path; // optional cross-check against the checkpoint
};
int eval_command(const EvalOptions& opts, std::ostream& out);

struct InspectOptions {
    std::string checkpoint_path;
    std::string data_path;
    std::string cache_path;
    std::string out_dir;
    int graph_index = 0;
};
int inspect_command(const InspectOptions& opts, std::ostream& out);

struct SelfCheckOptions {
    bool inject_sigma_perturbation = false; // negative-control hooks
    bool inject_gradient_bug = false;
};

struct SelfCheckReport {
    struct Entry {
        std::string name;
        bool pass = false;
        double ms = 0.0;
        std::string detail;
    };
    std::vector<Entry> entries;
    bool pass = false;
};

SelfCheckReport run_selfcheck(const SelfCheckOptions& opts);
int selfcheck_command(const SelfCheckOptions& opts, std::ostream& out);

} // namespace eigenformer
