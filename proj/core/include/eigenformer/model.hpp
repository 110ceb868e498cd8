#pragma once

#include <random>
#include <string>
#include <vector>

#include "eigenformer/config.hpp"
#include "eigenformer/graph.hpp"
#include "eigenformer/spectral.hpp"
#include "eigenformer/tensor.hpp"

namespace eigenformer {

/// Learnable frequency-importance function: a single-hidden-layer perceptron
/// from an eigenvalue to one importance per attention matrix (1 in shared
/// mode, H in per-head mode).
struct PhiMLP {
    Tensor w1; // [hidden, 1]
    Tensor b1; // [hidden]
    Tensor w2; // [out, hidden], zero-initialized so training starts uniform
    Tensor b2; // [out]

    static PhiMLP create(int hidden, int out, std::mt19937_64& rng);
    int out_width() const { return w2.dim(0); }
};

/// phi(lambda_k) for each active frequency; shape [K, out_width].
Tensor phi_eval(const PhiMLP& phi, const std::vector<double>& lambdas);

/// Attention from precomputed spectral distances and frequency importances:
/// logits[i,j] = sum_k -sigma_k[i,j] * phi(lambda_k), row-softmaxed over all
/// nodes. Returns [H_out, N, N]; attention dropout is applied at train time.
Tensor saa_attention(const SpectralDistances& sd, const Tensor& importances, double dropout_rate,
                     bool train, std::mt19937_64& rng);

struct EigenformerLayer {
    int dim = 0;      // d
    int heads = 0;    // H
    int edge_dim = 0; // width of the dense edge tensor fed to this layer
    HeadMode head_mode = HeadMode::Shared;
    double attn_dropout = 0.0;
    double ffn_dropout = 0.0;

    PhiMLP phi;
    std::vector<Tensor> w_node, b_node; // per head: [d/H, d], [d/H]
    std::vector<Tensor> w_edge, b_edge; // per head: [d/H, edge_dim], [d/H]
    Tensor theta1, theta2;              // degree scaler, [d] each
    Tensor bn1_gamma, bn1_beta, bn2_gamma, bn2_beta;
    BatchNormState bn1_state, bn2_state;
    Tensor ffn_w1, ffn_b1; // [2d, d], [2d]
    Tensor ffn_w2;         // [d, 2d]; no output bias, BN2's shift subsumes it

    static EigenformerLayer create(const TrainConfig& cfg, int edge_dim, std::mt19937_64& rng);
};

/// Per-graph constants for one forward pass through the layer stack.
struct GraphContext {
    const SpectralDistances* sd = nullptr;
    Tensor edge_tensor; // [N*N, edge_dim]; zero rows at non-edges and diagonal
    int row_begin = 0;  // node-row offset in the batch
    int num_nodes = 0;
};

/// One propagation step (attention, degree scaler, BN residual, FFN) over a
/// block-diagonal batch. X is [M, d] with per-graph row blocks.
Tensor layer_forward_batch(EigenformerLayer& layer, const Tensor& x,
                           const std::vector<GraphContext>& blocks, const Tensor& log_degrees,
                           bool train, std::mt19937_64& rng);

/// Single-graph convenience form: E is the dense [N*N, edge_dim] tensor.
Tensor layer_forward(EigenformerLayer& layer, const Tensor& x, const Tensor& edge_tensor,
                     const SpectralDistances& sd, const std::vector<int>& degrees, bool train,
                     std::mt19937_64& rng);

struct NamedParam {
    std::string name;
    Tensor tensor;
};

struct EigenformerModel {
    TrainConfig config;
    // Node embedder: dense (w [d, d_V], b [d]) or categorical table [V, d].
    Tensor node_embed_w, node_embed_b, node_table;
    // Edge embedder (present only when the dataset has edge features).
    Tensor edge_embed_w, edge_embed_b, edge_table;
    std::vector<EigenformerLayer> layers;
    Tensor head_w, head_b; // [out_dim, d], [out_dim]

    std::vector<NamedParam> parameters();
    std::vector<Tensor> parameter_tensors();
    EigenformerModel clone() const;
};

EigenformerModel build_model(const TrainConfig& cfg);

/// Prediction for a block-diagonal batch: [B, out_dim] for graph-level tasks,
/// [sum N_g, out_dim] for node-level tasks.
Tensor model_forward_batch(EigenformerModel& m, const std::vector<const Graph*>& graphs,
                           const std::vector<const SpectralDistances*>& spectra, bool train,
                           std::mt19937_64& rng);

Tensor model_forward(EigenformerModel& m, const Graph& g, const SpectralDistances& sd, bool train,
                     std::mt19937_64& rng);

} // namespace eigenformer
