#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace eigenformer {

enum class TaskKind {
    GraphRegression,
    GraphClassification,
    MultilabelClassification,
    NodeClassification,
};

enum class PoolMode { Sum, Mean };
enum class HeadMode { Shared, PerHead };

TaskKind parse_task(const std::string& s);
PoolMode parse_pooling(const std::string& s);
HeadMode parse_head_mode(const std::string& s);
std::string to_string(TaskKind t);

/// Full training/model configuration, mirroring the config file field names
/// one to one. Defaults are the desk-scale ones, not any benchmark preset.
struct TrainConfig {
    int layers = 3;
    int heads = 4;
    int hidden_dim = 32;
    int phi_hidden_dim = 16;
    double dropout = 0.0;      // feed-forward dropout
    double attn_dropout = 0.1; // applied to attention weights at train time
    std::string pooling = "sum";
    int batch_size = 8;
    double lr = 1e-3;
    int max_epochs = 100;
    int warmup_epochs = 5;
    double weight_decay = 1e-5;
    uint64_t seed = 0;
    std::string head_mode = "shared"; // "shared" | "per-head"
    std::string task = "graph_regression";
    int out_dim = 1;       // classes / labels / regression width
    int node_feat_dim = 0; // dense node feature width (0 when categorical)
    int node_vocab = 0;    // >0 selects categorical node embedding
    int edge_feat_dim = 0; // dense edge feature width
    int edge_vocab = 0;    // >0 selects categorical edge embedding
    double grad_clip = 0.0; // global-norm clip; 0 disables

    TaskKind task_kind() const { return parse_task(task); }
    PoolMode pool_mode() const { return parse_pooling(pooling); }
    HeadMode head_mode_kind() const { return parse_head_mode(head_mode); }
    bool has_edge_features() const { return edge_feat_dim > 0 || edge_vocab > 0; }

    /// All validation problems at once (empty means valid).
    std::vector<std::string> validate() const;

    std::string to_json() const;                       // canonical (sorted keys)
    static TrainConfig from_json(const std::string&);  // unknown keys rejected
    static TrainConfig load(const std::string& path);

    /// FNV-1a over the canonical JSON form; ties checkpoints to configs.
    uint64_t digest() const;
};

} // namespace eigenformer
