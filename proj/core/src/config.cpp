#include "eigenformer/config.hpp"

#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "eigenformer/util.hpp"

namespace eigenformer {

TaskKind parse_task(const std::string& s) {
    if (s == "graph_regression") return TaskKind::GraphRegression;
    if (s == "graph_classification") return TaskKind::GraphClassification;
    if (s == "multilabel_classification") return TaskKind::MultilabelClassification;
    if (s == "node_classification") return TaskKind::NodeClassification;
    throw std::invalid_argument("unknown task kind: " + s);
}

std::string to_string(TaskKind t) {
    switch (t) {
        case TaskKind::GraphRegression: return "graph_regression";
        case TaskKind::GraphClassification: return "graph_classification";
        case TaskKind::MultilabelClassification: return "multilabel_classification";
        case TaskKind::NodeClassification: return "node_classification";
    }
    return "?";
}

PoolMode parse_pooling(const std::string& s) {
    if (s == "sum") return PoolMode::Sum;
    if (s == "mean") return PoolMode::Mean;
    throw std::invalid_argument("unknown pooling mode: " + s);
}

HeadMode parse_head_mode(const std::string& s) {
    if (s == "shared") return HeadMode::Shared;
    if (s == "per-head") return HeadMode::PerHead;
    throw std::invalid_argument("unknown head mode: " + s);
}

std::vector<std::string> TrainConfig::validate() const {
    std::vector<std::string> problems;
    auto check = [&](bool ok, const std::string& msg) {
        if (!ok) problems.push_back(msg);
    };
    check(layers >= 1, "layers must be >= 1");
    check(heads >= 1, "heads must be >= 1");
    check(hidden_dim >= 1, "hidden_dim must be >= 1");
    check(heads < 1 || hidden_dim % heads == 0, "hidden_dim must be divisible by heads");
    check(phi_hidden_dim >= 1, "phi_hidden_dim must be >= 1");
    check(dropout >= 0.0 && dropout < 1.0, "dropout must be in [0,1)");
    check(attn_dropout >= 0.0 && attn_dropout < 1.0, "attn_dropout must be in [0,1)");
    check(batch_size >= 1, "batch_size must be >= 1");
    check(lr > 0.0, "lr must be positive");
    check(max_epochs >= 1, "max_epochs must be >= 1");
    check(warmup_epochs >= 0, "warmup_epochs must be >= 0");
    check(warmup_epochs <= max_epochs, "warmup_epochs must not exceed max_epochs");
    check(weight_decay >= 0.0, "weight_decay must be >= 0");
    check(out_dim >= 1, "out_dim must be >= 1");
    check(node_feat_dim >= 0 && node_vocab >= 0, "node feature dims must be >= 0");
    check(edge_feat_dim >= 0 && edge_vocab >= 0, "edge feature dims must be >= 0");
    check(node_feat_dim > 0 || node_vocab > 0, "one of node_feat_dim/node_vocab must be set");
    check(!(node_feat_dim > 0 && node_vocab > 0), "node_feat_dim and node_vocab are exclusive");
    check(!(edge_feat_dim > 0 && edge_vocab > 0), "edge_feat_dim and edge_vocab are exclusive");
    check(grad_clip >= 0.0, "grad_clip must be >= 0");
    try {
        parse_task(task);
    } catch (const std::exception& e) {
        problems.push_back(e.what());
    }
    try {
        parse_pooling(pooling);
    } catch (const std::exception& e) {
        problems.push_back(e.what());
    }
    try {
        parse_head_mode(head_mode);
    } catch (const std::exception& e) {
        problems.push_back(e.what());
    }
    return problems;
}

namespace {

using nlohmann::json;

json to_json_obj(const TrainConfig& c) {
    return json{{"layers", c.layers},
                {"heads", c.heads},
                {"hidden_dim", c.hidden_dim},
                {"phi_hidden_dim", c.phi_hidden_dim},
                {"dropout", c.dropout},
                {"attn_dropout", c.attn_dropout},
                {"pooling", c.pooling},
                {"batch_size", c.batch_size},
                {"lr", c.lr},
                {"max_epochs", c.max_epochs},
                {"warmup_epochs", c.warmup_epochs},
                {"weight_decay", c.weight_decay},
                {"seed", c.seed},
                {"head_mode", c.head_mode},
                {"task", c.task},
                {"out_dim", c.out_dim},
                {"node_feat_dim", c.node_feat_dim},
                {"node_vocab", c.node_vocab},
                {"edge_feat_dim", c.edge_feat_dim},
                {"edge_vocab", c.edge_vocab},
                {"grad_clip", c.grad_clip}};
}

} // namespace

std::string TrainConfig::to_json() const { return to_json_obj(*this).dump(2); }

TrainConfig TrainConfig::from_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw std::invalid_argument(std::string("config is not valid JSON: ") + e.what());
    }
    if (!j.is_object()) throw std::invalid_argument("config must be a JSON object");

    static const std::set<std::string> known = {
        "layers",      "heads",        "hidden_dim",   "phi_hidden_dim", "dropout",
        "attn_dropout", "pooling",     "batch_size",   "lr",             "max_epochs",
        "warmup_epochs", "weight_decay", "seed",       "head_mode",      "task",
        "out_dim",     "node_feat_dim", "node_vocab",  "edge_feat_dim",  "edge_vocab",
        "grad_clip"};
    for (auto it = j.begin(); it != j.end(); ++it)
        if (!known.count(it.key()))
            throw std::invalid_argument("config has unknown field: " + it.key());

    TrainConfig c;
    auto get = [&](const char* key, auto& out) {
        if (j.contains(key)) j.at(key).get_to(out);
    };
    get("layers", c.layers);
    get("heads", c.heads);
    get("hidden_dim", c.hidden_dim);
    get("phi_hidden_dim", c.phi_hidden_dim);
    get("dropout", c.dropout);
    get("attn_dropout", c.attn_dropout);
    get("pooling", c.pooling);
    get("batch_size", c.batch_size);
    get("lr", c.lr);
    get("max_epochs", c.max_epochs);
    get("warmup_epochs", c.warmup_epochs);
    get("weight_decay", c.weight_decay);
    get("seed", c.seed);
    get("head_mode", c.head_mode);
    get("task", c.task);
    get("out_dim", c.out_dim);
    get("node_feat_dim", c.node_feat_dim);
    get("node_vocab", c.node_vocab);
    get("edge_feat_dim", c.edge_feat_dim);
    get("edge_vocab", c.edge_vocab);
    get("grad_clip", c.grad_clip);
    return c;
}

TrainConfig TrainConfig::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open config file: " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return from_json(ss.str());
}

uint64_t TrainConfig::digest() const {
    // Canonical form: nlohmann objects serialize with sorted keys.
    const std::string canon = to_json_obj(*this).dump();
    return fnv1a64(canon.data(), canon.size());
}

} // namespace eigenformer
