#include "eigenformer/model.hpp"

#include <cmath>
#include <stdexcept>

namespace eigenformer {

namespace {

/// U(-1/sqrt(fan_in), 1/sqrt(fan_in)).
Tensor fan_in_uniform(std::vector<int> shape, int fan_in, std::mt19937_64& rng) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(std::max(fan_in, 1)));
    return Tensor::uniform(std::move(shape), -bound, bound, rng, true);
}

} // namespace

PhiMLP PhiMLP::create(int hidden, int out, std::mt19937_64& rng) {
    PhiMLP phi;
    phi.w1 = fan_in_uniform({hidden, 1}, 1, rng);
    phi.b1 = fan_in_uniform({hidden}, 1, rng);
    // Zero output layer: importances start at 0, so attention starts uniform.
    phi.w2 = Tensor::zeros({out, hidden}, true);
    phi.b2 = Tensor::zeros({out}, true);
    return phi;
}

Tensor phi_eval(const PhiMLP& phi, const std::vector<double>& lambdas) {
    const int k = static_cast<int>(lambdas.size());
    Tensor lam = Tensor::from({k, 1}, lambdas);
    Tensor h = relu(add_rowvec(matmul(lam, transpose(phi.w1)), phi.b1));
    return add_rowvec(matmul(h, transpose(phi.w2)), phi.b2);
}

Tensor saa_attention(const SpectralDistances& sd, const Tensor& importances, double dropout_rate,
                     bool train, std::mt19937_64& rng) {
    const int n = sd.num_nodes;
    const int k = sd.num_active();
    if (importances.ndim() != 2 || importances.dim(0) != k)
        throw std::invalid_argument(
            "saa_attention: importances shape does not match " + std::to_string(k) +
            " active frequencies");
    const int h_out = importances.dim(1);

    Tensor sigma_flat = Tensor::from({k, n * n}, sd.sigma);
    Tensor logits = scale(matmul(transpose(importances), sigma_flat), -1.0); // [h_out, n*n]
    Tensor alpha = softmax_rows(reshape(logits, {h_out * n, n}));
    alpha = dropout(alpha, dropout_rate, rng, train);
    return reshape(alpha, {h_out, n, n});
}

EigenformerLayer EigenformerLayer::create(const TrainConfig& cfg, int edge_dim,
                                          std::mt19937_64& rng) {
    EigenformerLayer l;
    l.dim = cfg.hidden_dim;
    l.heads = cfg.heads;
    l.edge_dim = edge_dim;
    l.head_mode = cfg.head_mode_kind();
    l.attn_dropout = cfg.attn_dropout;
    l.ffn_dropout = cfg.dropout;

    const int d = cfg.hidden_dim;
    const int dh = d / cfg.heads;
    const int phi_out = (l.head_mode == HeadMode::PerHead) ? cfg.heads : 1;
    l.phi = PhiMLP::create(cfg.phi_hidden_dim, phi_out, rng);

    for (int h = 0; h < cfg.heads; ++h) {
        l.w_node.push_back(fan_in_uniform({dh, d}, d, rng));
        l.b_node.push_back(fan_in_uniform({dh}, d, rng));
        l.w_edge.push_back(fan_in_uniform({dh, edge_dim}, std::max(edge_dim, 1), rng));
        l.b_edge.push_back(fan_in_uniform({dh}, std::max(edge_dim, 1), rng));
    }

    // Degree scaler starts as identity.
    l.theta1 = Tensor::full({d}, 1.0, true);
    l.theta2 = Tensor::zeros({d}, true);

    l.bn1_gamma = Tensor::full({d}, 1.0, true);
    l.bn1_beta = Tensor::zeros({d}, true);
    l.bn2_gamma = Tensor::full({d}, 1.0, true);
    l.bn2_beta = Tensor::zeros({d}, true);
    l.bn1_state = BatchNormState(d);
    l.bn2_state = BatchNormState(d);

    l.ffn_w1 = fan_in_uniform({2 * d, d}, d, rng);
    l.ffn_b1 = fan_in_uniform({2 * d}, d, rng);
    l.ffn_w2 = fan_in_uniform({d, 2 * d}, 2 * d, rng);
    return l;
}

namespace {

/// Extract attention plane h from [H_out, N, N] as [N, N].
Tensor attention_plane(const Tensor& alpha3, int h, int n) {
    const int h_out = alpha3.dim(0);
    Tensor flat = reshape(alpha3, {h_out, n * n});
    return reshape(slice_rows(flat, h, h + 1), {n, n});
}

/// ids[r] = r / n, grouping the flattened (i,j) grid by source node i.
std::vector<int> grid_row_ids(int n) {
    std::vector<int> ids(static_cast<size_t>(n) * n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) ids[static_cast<size_t>(i) * n + j] = i;
    return ids;
}

} // namespace

Tensor layer_forward_batch(EigenformerLayer& layer, const Tensor& x,
                           const std::vector<GraphContext>& blocks, const Tensor& log_degrees,
                           bool train, std::mt19937_64& rng) {
    const int d = layer.dim;
    const int heads = layer.heads;
    if (x.ndim() != 2 || x.dim(1) != d)
        throw std::invalid_argument("layer_forward: node features must be [M," +
                                    std::to_string(d) + "]");

    // Per-head node projections over the whole batch.
    std::vector<Tensor> node_proj;
    node_proj.reserve(heads);
    for (int h = 0; h < heads; ++h)
        node_proj.push_back(add_rowvec(matmul(x, transpose(layer.w_node[h])), layer.b_node[h]));

    std::vector<Tensor> per_graph;
    per_graph.reserve(blocks.size());
    for (const GraphContext& blk : blocks) {
        const int n = blk.num_nodes;
        Tensor imp = phi_eval(layer.phi, blk.sd->lambdas);
        Tensor alpha3 = saa_attention(*blk.sd, imp, layer.attn_dropout, train, rng);

        const auto row_ids = grid_row_ids(n);
        std::vector<Tensor> head_msgs;
        head_msgs.reserve(heads);
        for (int h = 0; h < heads; ++h) {
            const int plane = (layer.head_mode == HeadMode::PerHead) ? h : 0;
            Tensor alpha = attention_plane(alpha3, plane, n);

            Tensor p = slice_rows(node_proj[h], blk.row_begin, blk.row_begin + n);
            Tensor msg = matmul(alpha, p);

            // Edge contribution: out[i,:] += sum_j alpha[i,j] * (W_E e_ij + b_E).
            Tensor q = add_rowvec(matmul(blk.edge_tensor, transpose(layer.w_edge[h])),
                                  layer.b_edge[h]);
            Tensor weighted = mul_colvec(q, reshape(alpha, {n * n}));
            msg = add(msg, segment_sum(weighted, row_ids, n));
            head_msgs.push_back(msg);
        }
        per_graph.push_back(heads == 1 ? head_msgs[0] : concat_cols(head_msgs));
    }
    Tensor attended = blocks.size() == 1 ? per_graph[0] : concat_rows(per_graph);

    // Degree scaler: x * theta1 + log(1+deg) * (x * theta2).
    Tensor scaled = add(mul_rowvec(attended, layer.theta1),
                        mul_colvec(mul_rowvec(attended, layer.theta2), log_degrees));

    Tensor res1 = batchnorm(add(x, scaled), layer.bn1_gamma, layer.bn1_beta, layer.bn1_state, train);

    Tensor f = add_rowvec(matmul(res1, transpose(layer.ffn_w1)), layer.ffn_b1);
    f = relu(f);
    f = dropout(f, layer.ffn_dropout, rng, train);
    f = matmul(f, transpose(layer.ffn_w2));

    return batchnorm(add(res1, f), layer.bn2_gamma, layer.bn2_beta, layer.bn2_state, train);
}

Tensor layer_forward(EigenformerLayer& layer, const Tensor& x, const Tensor& edge_tensor,
                     const SpectralDistances& sd, const std::vector<int>& degrees, bool train,
                     std::mt19937_64& rng) {
    GraphContext blk;
    blk.sd = &sd;
    blk.edge_tensor = edge_tensor;
    blk.row_begin = 0;
    blk.num_nodes = sd.num_nodes;

    std::vector<double> logdeg(degrees.size());
    for (size_t i = 0; i < degrees.size(); ++i) logdeg[i] = std::log1p(static_cast<double>(degrees[i]));
    Tensor ld = Tensor::from({static_cast<int>(degrees.size())}, logdeg);
    return layer_forward_batch(layer, x, {blk}, ld, train, rng);
}

EigenformerModel build_model(const TrainConfig& cfg) {
    auto problems = cfg.validate();
    if (!problems.empty()) {
        std::string msg = "invalid config:";
        for (const auto& p : problems) msg += "\n  - " + p;
        throw std::invalid_argument(msg);
    }

    std::mt19937_64 rng(cfg.seed ^ 0x9E3779B97F4A7C15ULL);
    EigenformerModel m;
    m.config = cfg;
    const int d = cfg.hidden_dim;

    if (cfg.node_vocab > 0) {
        m.node_table = fan_in_uniform({cfg.node_vocab, d}, d, rng);
    } else {
        m.node_embed_w = fan_in_uniform({d, cfg.node_feat_dim}, cfg.node_feat_dim, rng);
        m.node_embed_b = fan_in_uniform({d}, cfg.node_feat_dim, rng);
    }
    const bool has_edges = cfg.has_edge_features();
    if (cfg.edge_vocab > 0) {
        m.edge_table = fan_in_uniform({cfg.edge_vocab, d}, d, rng);
    } else if (cfg.edge_feat_dim > 0) {
        m.edge_embed_w = fan_in_uniform({d, cfg.edge_feat_dim}, cfg.edge_feat_dim, rng);
        m.edge_embed_b = fan_in_uniform({d}, cfg.edge_feat_dim, rng);
    }

    const int layer_edge_dim = has_edges ? d : 0;
    for (int l = 0; l < cfg.layers; ++l)
        m.layers.push_back(EigenformerLayer::create(cfg, layer_edge_dim, rng));

    m.head_w = fan_in_uniform({cfg.out_dim, d}, d, rng);
    m.head_b = Tensor::zeros({cfg.out_dim}, true);
    return m;
}

std::vector<NamedParam> EigenformerModel::parameters() {
    std::vector<NamedParam> out;
    auto push = [&](const std::string& name, Tensor& t) {
        if (t.values) out.push_back({name, t});
    };
    push("embed.node.w", node_embed_w);
    push("embed.node.b", node_embed_b);
    push("embed.node.table", node_table);
    push("embed.edge.w", edge_embed_w);
    push("embed.edge.b", edge_embed_b);
    push("embed.edge.table", edge_table);
    for (size_t l = 0; l < layers.size(); ++l) {
        const std::string p = "layers." + std::to_string(l) + ".";
        EigenformerLayer& lay = layers[l];
        push(p + "phi.w1", lay.phi.w1);
        push(p + "phi.b1", lay.phi.b1);
        push(p + "phi.w2", lay.phi.w2);
        push(p + "phi.b2", lay.phi.b2);
        for (int h = 0; h < lay.heads; ++h) {
            const std::string hp = p + "head" + std::to_string(h) + ".";
            push(hp + "w_node", lay.w_node[h]);
            push(hp + "b_node", lay.b_node[h]);
            push(hp + "w_edge", lay.w_edge[h]);
            push(hp + "b_edge", lay.b_edge[h]);
        }
        push(p + "theta1", lay.theta1);
        push(p + "theta2", lay.theta2);
        push(p + "bn1.gamma", lay.bn1_gamma);
        push(p + "bn1.beta", lay.bn1_beta);
        push(p + "bn2.gamma", lay.bn2_gamma);
        push(p + "bn2.beta", lay.bn2_beta);
        push(p + "ffn.w1", lay.ffn_w1);
        push(p + "ffn.b1", lay.ffn_b1);
        push(p + "ffn.w2", lay.ffn_w2);
    }
    push("head.w", head_w);
    push("head.b", head_b);
    return out;
}

std::vector<Tensor> EigenformerModel::parameter_tensors() {
    std::vector<Tensor> out;
    for (auto& np : parameters()) out.push_back(np.tensor);
    return out;
}

EigenformerModel EigenformerModel::clone() const {
    EigenformerModel copy = *this; // shares buffers; now deep-copy the learnable state
    auto deep = [](Tensor& t) {
        if (!t.values) return;
        Tensor fresh = Tensor::from(t.shape, *t.values, true);
        t = fresh;
    };
    deep(copy.node_embed_w);
    deep(copy.node_embed_b);
    deep(copy.node_table);
    deep(copy.edge_embed_w);
    deep(copy.edge_embed_b);
    deep(copy.edge_table);
    for (auto& lay : copy.layers) {
        deep(lay.phi.w1);
        deep(lay.phi.b1);
        deep(lay.phi.w2);
        deep(lay.phi.b2);
        for (int h = 0; h < lay.heads; ++h) {
            deep(lay.w_node[h]);
            deep(lay.b_node[h]);
            deep(lay.w_edge[h]);
            deep(lay.b_edge[h]);
        }
        deep(lay.theta1);
        deep(lay.theta2);
        deep(lay.bn1_gamma);
        deep(lay.bn1_beta);
        deep(lay.bn2_gamma);
        deep(lay.bn2_beta);
        deep(lay.ffn_w1);
        deep(lay.ffn_b1);
        deep(lay.ffn_w2);
        // BatchNormState vectors copied by value already.
    }
    deep(copy.head_w);
    deep(copy.head_b);
    return copy;
}

namespace {

/// Dense [N*N, edge_dim] tensor with the embedded edge feature at (i,j) and
/// (j,i) for every edge, zeros elsewhere.
Tensor build_edge_tensor(EigenformerModel& m, const Graph& g) {
    const int n = g.num_nodes;
    if (!m.config.has_edge_features()) return Tensor::zeros({n * n, 0});

    Tensor rows;
    if (m.config.edge_vocab > 0) {
        rows = embedding_lookup(m.edge_table, g.edge_features.codes);
    } else {
        Tensor raw = Tensor::from({g.num_edges(), m.config.edge_feat_dim}, g.edge_features.dense);
        rows = add_rowvec(matmul(raw, transpose(m.edge_embed_w)), m.edge_embed_b);
    }
    std::vector<std::vector<int>> dests(g.num_edges());
    for (int e = 0; e < g.num_edges(); ++e) {
        auto [i, j] = g.edges[e];
        dests[e] = {i * n + j, j * n + i};
    }
    return scatter_rows(rows, dests, n * n);
}

Tensor embed_nodes(EigenformerModel& m, const std::vector<const Graph*>& graphs) {
    if (m.config.node_vocab > 0) {
        std::vector<int> codes;
        for (const Graph* g : graphs)
            codes.insert(codes.end(), g->node_features.codes.begin(), g->node_features.codes.end());
        return embedding_lookup(m.node_table, codes);
    }
    std::vector<double> rows;
    int total = 0;
    for (const Graph* g : graphs) {
        rows.insert(rows.end(), g->node_features.dense.begin(), g->node_features.dense.end());
        total += g->num_nodes;
    }
    Tensor raw = Tensor::from({total, m.config.node_feat_dim}, std::move(rows));
    return add_rowvec(matmul(raw, transpose(m.node_embed_w)), m.node_embed_b);
}

} // namespace

Tensor model_forward_batch(EigenformerModel& m, const std::vector<const Graph*>& graphs,
                           const std::vector<const SpectralDistances*>& spectra, bool train,
                           std::mt19937_64& rng) {
    if (graphs.empty()) throw std::invalid_argument("model_forward: empty batch");
    if (graphs.size() != spectra.size())
        throw std::invalid_argument("model_forward: graphs/spectra count mismatch");

    std::vector<GraphContext> blocks(graphs.size());
    std::vector<double> logdeg;
    std::vector<int> graph_ids;
    int row = 0;
    for (size_t gi = 0; gi < graphs.size(); ++gi) {
        const Graph& g = *graphs[gi];
        if (spectra[gi]->num_nodes != g.num_nodes)
            throw std::invalid_argument("model_forward: spectra do not match graph " +
                                        std::to_string(gi));
        blocks[gi].sd = spectra[gi];
        blocks[gi].edge_tensor = build_edge_tensor(m, g);
        blocks[gi].row_begin = row;
        blocks[gi].num_nodes = g.num_nodes;
        auto deg = degree_vector(g);
        for (int d : deg.degrees) logdeg.push_back(std::log1p(static_cast<double>(d)));
        for (int i = 0; i < g.num_nodes; ++i) graph_ids.push_back(static_cast<int>(gi));
        row += g.num_nodes;
    }
    Tensor log_degrees = Tensor::from({row}, std::move(logdeg));

    Tensor x = embed_nodes(m, graphs);
    for (auto& layer : m.layers)
        x = layer_forward_batch(layer, x, blocks, log_degrees, train, rng);

    const TaskKind task = m.config.task_kind();
    if (task == TaskKind::NodeClassification)
        return add_rowvec(matmul(x, transpose(m.head_w)), m.head_b);

    Tensor pooled = (m.config.pool_mode() == PoolMode::Sum)
                        ? segment_sum(x, graph_ids, static_cast<int>(graphs.size()))
                        : segment_mean(x, graph_ids, static_cast<int>(graphs.size()));
    return add_rowvec(matmul(pooled, transpose(m.head_w)), m.head_b);
}

Tensor model_forward(EigenformerModel& m, const Graph& g, const SpectralDistances& sd, bool train,
                     std::mt19937_64& rng) {
    return model_forward_batch(m, {&g}, {&sd}, train, rng);
}

} // namespace eigenformer
