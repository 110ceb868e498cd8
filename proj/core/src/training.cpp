#include "eigenformer/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>

#include "eigenformer/data_io.hpp"

namespace eigenformer {

double lr_at(const LRSchedule& s, long global_step) {
    const long warmup = s.warmup_steps();
    const long total = s.total_steps();
    if (global_step < warmup)
        return s.base_lr * static_cast<double>(global_step) / static_cast<double>(warmup);
    if (global_step >= total) return 0.0;
    const long span = total - warmup;
    if (span <= 0) return s.base_lr;
    const double t = static_cast<double>(global_step - warmup) / static_cast<double>(span);
    return s.base_lr * 0.5 * (1.0 + std::cos(M_PI * t));
}

OptimizerState::OptimizerState(const std::vector<Tensor>& params, double wd) {
    weight_decay = wd;
    m.reserve(params.size());
    v.reserve(params.size());
    for (const Tensor& p : params) {
        m.emplace_back(p.numel(), 0.0);
        v.emplace_back(p.numel(), 0.0);
    }
}

void adamw_step(OptimizerState& state, std::vector<Tensor>& params, double lr) {
    if (state.m.size() != params.size())
        throw OptimError("adamw_step: state tracks " + std::to_string(state.m.size()) +
                         " parameters, got " + std::to_string(params.size()));
    ++state.step_count;
    const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step_count));
    const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step_count));

    for (size_t pi = 0; pi < params.size(); ++pi) {
        Tensor& p = params[pi];
        const std::vector<double>& g = p.grad_ref();
        if (g.size() != p.numel())
            throw OptimError("adamw_step: parameter " + std::to_string(pi) + " has no gradient");
        auto& mm = state.m[pi];
        auto& vv = state.v[pi];
        for (size_t i = 0; i < g.size(); ++i) {
            if (!std::isfinite(g[i]))
                throw OptimError("adamw_step: non-finite gradient in parameter " +
                                 std::to_string(pi) + " at index " + std::to_string(i));
            mm[i] = state.beta1 * mm[i] + (1.0 - state.beta1) * g[i];
            vv[i] = state.beta2 * vv[i] + (1.0 - state.beta2) * g[i] * g[i];
            const double mhat = mm[i] / bc1;
            const double vhat = vv[i] / bc2;
            double& theta = (*p.values)[i];
            theta -= lr * (mhat / (std::sqrt(vhat) + state.eps)) + lr * state.weight_decay * theta;
        }
    }
}

void clip_global_norm(std::vector<Tensor>& params, double clip) {
    if (clip <= 0.0) return;
    double norm2 = 0.0;
    for (const Tensor& p : params)
        for (double g : p.grad_ref()) norm2 += g * g;
    const double norm = std::sqrt(norm2);
    if (norm <= clip) return;
    const double factor = clip / norm;
    for (Tensor& p : params)
        if (p.grad)
            for (double& g : *p.grad) g *= factor;
}

namespace {

[[noreturn]] void target_mismatch(const char* expected, TaskKind task) {
    throw std::invalid_argument(std::string("target payload does not match task ") +
                                to_string(task) + " (expected " + expected + ")");
}

int class_of(const Target& t) {
    if (t.kind != Target::Kind::GraphScalar) target_mismatch("graph scalar class index", TaskKind::GraphClassification);
    const double v = t.values[0];
    const int c = static_cast<int>(std::lround(v));
    if (std::abs(v - c) > 1e-9)
        throw std::invalid_argument("graph classification target must be integral, got " +
                                    std::to_string(v));
    return c;
}

} // namespace

Tensor compute_loss(const Tensor& prediction, const std::vector<const Target*>& targets,
                    TaskKind task) {
    switch (task) {
        case TaskKind::GraphRegression: {
            const int b = static_cast<int>(targets.size());
            const int w = prediction.dim(1);
            std::vector<double> flat;
            flat.reserve(static_cast<size_t>(b) * w);
            for (const Target* t : targets) {
                if (t->kind != Target::Kind::GraphScalar && t->kind != Target::Kind::GraphVector)
                    target_mismatch("graph scalar/vector", task);
                if (static_cast<int>(t->values.size()) != w)
                    throw std::invalid_argument("regression target width " +
                                                std::to_string(t->values.size()) +
                                                " != prediction width " + std::to_string(w));
                flat.insert(flat.end(), t->values.begin(), t->values.end());
            }
            return mae_loss(prediction, Tensor::from({b, w}, std::move(flat)));
        }
        case TaskKind::GraphClassification: {
            std::vector<int> labels;
            labels.reserve(targets.size());
            for (const Target* t : targets) labels.push_back(class_of(*t));
            return softmax_cross_entropy(prediction, labels);
        }
        case TaskKind::MultilabelClassification: {
            const int b = static_cast<int>(targets.size());
            const int w = prediction.dim(1);
            std::vector<double> flat;
            flat.reserve(static_cast<size_t>(b) * w);
            for (const Target* t : targets) {
                if (t->kind != Target::Kind::GraphVector) target_mismatch("graph vector", task);
                if (static_cast<int>(t->values.size()) != w)
                    throw std::invalid_argument("multilabel target width mismatch");
                flat.insert(flat.end(), t->values.begin(), t->values.end());
            }
            return sigmoid_bce(prediction, Tensor::from({b, w}, std::move(flat)));
        }
        case TaskKind::NodeClassification: {
            std::vector<int> labels;
            for (const Target* t : targets) {
                if (t->kind != Target::Kind::NodeClasses) target_mismatch("node classes", task);
                labels.insert(labels.end(), t->node_classes.begin(), t->node_classes.end());
            }
            return softmax_cross_entropy(prediction, labels);
        }
    }
    throw std::logic_error("unreachable task kind");
}

namespace {

/// Average precision of one score column against binary relevance, by
/// precision-at-positive summation over descending scores. A column with no
/// positives scores its positive rate (0), matching the documented
/// degenerate-column convention.
double average_precision(const std::vector<double>& scores, const std::vector<int>& relevant) {
    const size_t n = scores.size();
    size_t positives = 0;
    for (int r : relevant) positives += (r != 0);
    if (positives == 0) return 0.0;
    if (positives == n) return 1.0;

    std::vector<size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](size_t a, size_t b) {
        if (scores[a] != scores[b]) return scores[a] > scores[b];
        return a < b;
    });

    double ap = 0.0;
    size_t hits = 0;
    for (size_t rank = 0; rank < n; ++rank) {
        if (relevant[order[rank]]) {
            ++hits;
            ap += static_cast<double>(hits) / static_cast<double>(rank + 1);
        }
    }
    return ap / static_cast<double>(positives);
}

} // namespace

std::map<std::string, double> compute_metrics(const Tensor& predictions,
                                              const std::vector<const Target*>& targets,
                                              TaskKind task) {
    if (targets.empty()) throw std::invalid_argument("compute_metrics: empty evaluation set");
    std::map<std::string, double> out;
    const int w = predictions.dim(1);

    switch (task) {
        case TaskKind::GraphRegression: {
            double sum = 0.0;
            size_t count = 0;
            for (size_t i = 0; i < targets.size(); ++i)
                for (int j = 0; j < w; ++j) {
                    sum += std::abs(predictions.at(i * w + j) - targets[i]->values[j]);
                    ++count;
                }
            out["mae"] = sum / static_cast<double>(count);
            out["count"] = static_cast<double>(targets.size());
            break;
        }
        case TaskKind::GraphClassification: {
            size_t correct = 0;
            for (size_t i = 0; i < targets.size(); ++i) {
                int arg = 0;
                for (int j = 1; j < w; ++j)
                    if (predictions.at(i * w + j) > predictions.at(i * w + arg)) arg = j;
                correct += (arg == class_of(*targets[i]));
            }
            out["accuracy"] = static_cast<double>(correct) / static_cast<double>(targets.size());
            out["count"] = static_cast<double>(targets.size());
            break;
        }
        case TaskKind::MultilabelClassification: {
            const size_t b = targets.size();
            double ap_sum = 0.0;
            for (int label = 0; label < w; ++label) {
                std::vector<double> scores(b);
                std::vector<int> rel(b);
                for (size_t i = 0; i < b; ++i) {
                    scores[i] = predictions.at(i * w + label);
                    rel[i] = targets[i]->values[label] > 0.5 ? 1 : 0;
                }
                ap_sum += average_precision(scores, rel);
            }
            out["ap"] = ap_sum / w;
            out["count"] = static_cast<double>(b);
            break;
        }
        case TaskKind::NodeClassification: {
            size_t correct = 0, total = 0;
            size_t row = 0;
            for (const Target* t : targets) {
                for (int cls : t->node_classes) {
                    int arg = 0;
                    for (int j = 1; j < w; ++j)
                        if (predictions.at(row * w + j) > predictions.at(row * w + arg)) arg = j;
                    correct += (arg == cls);
                    ++total;
                    ++row;
                }
            }
            out["accuracy"] = static_cast<double>(correct) / static_cast<double>(total);
            out["count"] = static_cast<double>(total);
            break;
        }
    }
    return out;
}

std::string primary_metric_name(TaskKind task) {
    switch (task) {
        case TaskKind::GraphRegression: return "mae";
        case TaskKind::GraphClassification:
        case TaskKind::NodeClassification: return "accuracy";
        case TaskKind::MultilabelClassification: return "ap";
    }
    return "?";
}

bool metric_lower_is_better(TaskKind task) { return task == TaskKind::GraphRegression; }

namespace {

std::vector<std::vector<int>> assemble_batches(const Dataset& data, int batch_size,
                                               std::mt19937_64& shuffle_rng) {
    const int n = static_cast<int>(data.graphs.size());
    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), shuffle_rng);

    // Sort by size within windows so batches stay size-homogeneous without
    // destroying the shuffle.
    const int window = std::max(batch_size * 4, batch_size);
    for (int start = 0; start < n; start += window) {
        const int end = std::min(start + window, n);
        std::stable_sort(order.begin() + start, order.begin() + end,
                         [&](int a, int b) { return data.graphs[a].num_nodes < data.graphs[b].num_nodes; });
    }

    std::vector<std::vector<int>> batches;
    for (int start = 0; start < n; start += batch_size) {
        const int end = std::min(start + batch_size, n);
        batches.emplace_back(order.begin() + start, order.begin() + end);
    }
    return batches;
}

struct BatchView {
    std::vector<const Graph*> graphs;
    std::vector<const SpectralDistances*> spectra;
    std::vector<const Target*> targets;
};

BatchView view_of(const Dataset& data, const std::vector<int>& indices) {
    BatchView v;
    for (int i : indices) {
        v.graphs.push_back(&data.graphs[i]);
        v.spectra.push_back(&data.spectra[i]);
        v.targets.push_back(&data.graphs[i].target);
    }
    return v;
}

double eval_metric(EigenformerModel& model, const Dataset& data, int batch_size, TaskKind task) {
    auto [pred, targets] = predict_dataset(model, data, batch_size);
    return compute_metrics(pred, targets, task).at(primary_metric_name(task));
}

} // namespace

std::pair<Tensor, std::vector<const Target*>> predict_dataset(EigenformerModel& model,
                                                              const Dataset& data,
                                                              int batch_size) {
    if (!data.has_spectra())
        throw std::invalid_argument("predict_dataset: dataset has no attached spectra");
    NoGradGuard ng;
    std::mt19937_64 unused_rng(0);
    std::vector<Tensor> parts;
    std::vector<const Target*> targets;
    const int n = static_cast<int>(data.graphs.size());
    for (int start = 0; start < n; start += batch_size) {
        std::vector<int> idx;
        for (int i = start; i < std::min(start + batch_size, n); ++i) idx.push_back(i);
        BatchView v = view_of(data, idx);
        parts.push_back(model_forward_batch(model, v.graphs, v.spectra, /*train=*/false, unused_rng));
        targets.insert(targets.end(), v.targets.begin(), v.targets.end());
    }
    Tensor pred = parts.size() == 1 ? parts[0] : concat_rows(parts);
    return {pred, targets};
}

TrainResult fit(const TrainConfig& cfg, const Dataset& train, const Dataset& val,
                const EpochCallback& on_epoch) {
    auto problems = cfg.validate();
    if (!problems.empty()) {
        std::string msg = "fit: invalid config:";
        for (const auto& p : problems) msg += "\n  - " + p;
        throw std::invalid_argument(msg);
    }
    if (train.graphs.empty()) throw std::invalid_argument("fit: empty training set");
    if (!train.has_spectra() || !val.has_spectra())
        throw std::invalid_argument("fit: spectra missing; run precompute first");

    const TaskKind task = cfg.task_kind();
    TrainResult result;
    EigenformerModel model = build_model(cfg);
    std::vector<Tensor> params = model.parameter_tensors();
    OptimizerState opt(params, cfg.weight_decay);

    LRSchedule sched;
    sched.base_lr = cfg.lr;
    sched.warmup_epochs = cfg.warmup_epochs;
    sched.max_epochs = cfg.max_epochs;
    sched.steps_per_epoch =
        static_cast<int>((train.graphs.size() + cfg.batch_size - 1) / cfg.batch_size);

    // Independent deterministic streams for shuffling and dropout.
    std::mt19937_64 shuffle_rng(cfg.seed ^ 0xC2B2AE3D27D4EB4FULL);
    std::mt19937_64 dropout_rng(cfg.seed ^ 0x165667B19E3779F9ULL);

    const bool lower_better = metric_lower_is_better(task);
    result.best_val = lower_better ? std::numeric_limits<double>::infinity()
                                   : -std::numeric_limits<double>::infinity();
    result.best_model = model.clone();

    long global_step = 0;
    for (int epoch = 0; epoch < cfg.max_epochs; ++epoch) {
        const auto t0 = std::chrono::steady_clock::now();
        const double epoch_lr = lr_at(sched, global_step);

        auto batches = assemble_batches(train, cfg.batch_size, shuffle_rng);
        double loss_sum = 0.0;
        long unit_count = 0;
        bool bad = false;
        std::string bad_reason;

        for (const auto& batch : batches) {
            BatchView v = view_of(train, batch);
            for (Tensor& p : params) p.zero_grad();
            Tensor pred = model_forward_batch(model, v.graphs, v.spectra, /*train=*/true,
                                              dropout_rng);
            Tensor loss = compute_loss(pred, v.targets, task);
            const double loss_val = loss.item();
            if (!std::isfinite(loss_val)) {
                bad = true;
                bad_reason = "non-finite loss at epoch " + std::to_string(epoch);
                break;
            }
            backward(loss);
            clip_global_norm(params, cfg.grad_clip);
            try {
                adamw_step(opt, params, lr_at(sched, global_step));
            } catch (const OptimError& e) {
                bad = true;
                bad_reason = e.what();
                break;
            }
            ++global_step;
            loss_sum += loss_val * static_cast<double>(batch.size());
            unit_count += static_cast<long>(batch.size());
        }

        if (bad) {
            result.nan_abort = true;
            result.abort_reason = bad_reason;
            break;
        }

        const double val_metric = eval_metric(model, val, cfg.batch_size, task);
        const auto t1 = std::chrono::steady_clock::now();

        EpochRecord rec;
        rec.epoch = epoch;
        rec.lr = epoch_lr;
        rec.train_loss = loss_sum / static_cast<double>(unit_count);
        rec.val_metric = val_metric;
        rec.wall_ms = std::chrono::duration_cast<std::chrono::milliseconds>(t1 - t0).count();
        result.log.push_back(rec);
        if (on_epoch) on_epoch(rec);

        const bool improved = lower_better ? (val_metric < result.best_val)
                                           : (val_metric > result.best_val);
        if (improved) {
            result.best_val = val_metric;
            result.best_epoch = epoch;
            result.best_model = model.clone();
        }
    }
    return result;
}

} // namespace eigenformer
