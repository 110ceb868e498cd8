#pragma once

#include <functional>
#include <map>
#include <string>
#include <vector>

#include "eigenformer/config.hpp"
#include "eigenformer/model.hpp"

namespace eigenformer {

/// Raised when an optimizer step sees non-finite gradients.
class OptimError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Linear warmup to base_lr, then cosine decay to ~0 over the rest.
struct LRSchedule {
    double base_lr = 1e-3;
    int warmup_epochs = 0;
    int max_epochs = 1;
    int steps_per_epoch = 1;

    long warmup_steps() const { return static_cast<long>(warmup_epochs) * steps_per_epoch; }
    long total_steps() const { return static_cast<long>(max_epochs) * steps_per_epoch; }
};

double lr_at(const LRSchedule& s, long global_step);

/// Decoupled-weight-decay Adam state: per-parameter moments + step count.
struct OptimizerState {
    double beta1 = 0.9;
    double beta2 = 0.99;
    double eps = 1e-8;
    double weight_decay = 0.0;
    long step_count = 0;
    std::vector<std::vector<double>> m, v; // aligned with the parameter list

    OptimizerState() = default;
    OptimizerState(const std::vector<Tensor>& params, double weight_decay);
};

/// theta <- theta - lr * mhat/(sqrt(vhat)+eps) - lr * wd * theta.
/// Reads gradients from the tensors; throws OptimError on non-finite input.
void adamw_step(OptimizerState& state, std::vector<Tensor>& params, double lr);

/// Scales all gradients by clip/||g|| when the global norm exceeds clip.
void clip_global_norm(std::vector<Tensor>& params, double clip);

/// Task-appropriate scalar loss: MAE (regression), softmax cross-entropy
/// (single-label), sigmoid BCE (multilabel), mean CE over nodes (node task).
Tensor compute_loss(const Tensor& prediction, const std::vector<const Target*>& targets,
                    TaskKind task);

/// "mae", "accuracy" or "ap" depending on the task, plus a "count" entry.
std::map<std::string, double> compute_metrics(const Tensor& predictions,
                                              const std::vector<const Target*>& targets,
                                              TaskKind task);

std::string primary_metric_name(TaskKind task);
bool metric_lower_is_better(TaskKind task);

struct Dataset; // data_io.hpp

struct EpochRecord {
    int epoch = 0;
    double lr = 0.0; // lr applied on the first step of the epoch
    double train_loss = 0.0;
    double val_metric = 0.0;
    long wall_ms = 0;
};

struct TrainResult {
    std::vector<EpochRecord> log;
    int best_epoch = -1;
    double best_val = 0.0;
    EigenformerModel best_model;
    bool nan_abort = false;
    std::string abort_reason;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

/// Full training loop: deterministic given (config, seed, data). Keeps the
/// best-validation snapshot; aborts on non-finite loss keeping the last good
/// snapshot.
TrainResult fit(const TrainConfig& cfg, const Dataset& train, const Dataset& val,
                const EpochCallback& on_epoch = nullptr);

/// Eval-mode predictions over a whole dataset (batched, order-preserving),
/// paired with the aligned target list.
std::pair<Tensor, std::vector<const Target*>> predict_dataset(EigenformerModel& model,
                                                              const Dataset& data,
                                                              int batch_size);

} // namespace eigenformer
