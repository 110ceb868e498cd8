#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "eigenformer/graph.hpp"
#include "eigenformer/spectral.hpp"

namespace eigenformer {

/// File/format problems during dataset or cache handling.
class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Schema shared by every graph in a dataset, inferred at parse time.
struct DatasetManifest {
    std::string target_payload; // "none" | "scalar" | "vector" | "node_classes"
    int target_width = 0;       // width when "vector"
    int num_classes = 0;        // max class + 1 when "node_classes"
    bool node_categorical = false;
    int node_feat_dim = 0;
    int node_vocab = 0; // max code + 1 when categorical
    bool has_edge_features = false;
    bool edge_categorical = false;
    int edge_feat_dim = 0;
    int edge_vocab = 0;
    int count = 0;
};

struct Dataset {
    std::vector<Graph> graphs;
    std::vector<SpectralDistances> spectra; // aligned with graphs once attached
    DatasetManifest manifest;

    bool has_spectra() const { return spectra.size() == graphs.size() && !graphs.empty(); }
};

/// One graph per line (JSON): fields n, edges, x, optional e, y.
/// Connectivity is enforced at ingestion. Errors carry the line number.
Dataset parse_graph_lines(const std::string& path);

/// Inverse of parse_graph_lines, used by generators and tests.
void write_graph_lines(const std::string& path, const std::vector<Graph>& graphs);

struct GeneratorSpec {
    std::string kind = "er"; // "er" | "sbm" | "tree"
    int count = 1;
    int n_min = 8, n_max = 8;
    double p = 0.3;                    // er edge probability
    double p_in = 0.9, p_out = 0.05;   // sbm block probabilities
    double reveal_fraction = 0.2;      // sbm: fraction of nodes with revealed label
    std::string task = "none";         // "none" | "spectral_regression" | "block_labels"
    uint64_t seed = 0;

    /// Inline form: "kind:key=value,key=value" (e.g. "sbm:count=64,n=20,p_in=0.9").
    static GeneratorSpec parse(const std::string& text);
};

/// Deterministic per (spec, seed); every graph connected.
/// spectral_regression targets: mean of the three smallest nonzero Laplacian
/// eigenvalues. block_labels targets: planted SBM block per node, with a
/// reveal_fraction of nodes carrying their block as a categorical feature.
std::vector<Graph> generate_synthetic(const GeneratorSpec& spec);

Dataset make_dataset(std::vector<Graph> graphs);

/// 64-bit FNV-1a over node count and the canonical edge list.
uint64_t graph_digest(const Graph& g);

struct SpectraRecord {
    uint64_t digest = 0;
    uint32_t num_nodes = 0;
    uint32_t k_active = 0;
    uint32_t diameter = 0;
    double residual = 0.0;
    std::vector<double> eigenvalues; // k_active
    std::vector<double> sigma;       // k_active * n * n
};

SpectraRecord make_record(const Graph& g, const SpectralDistances& sd, double residual);
SpectralDistances to_spectral_distances(const SpectraRecord& r);

/// Binary cache, little-endian: magic "EIGS", u32 version, then records.
void write_cache(const std::string& path, const std::vector<SpectraRecord>& records);

struct CacheReadResult {
    std::vector<SpectraRecord> records;
    bool truncated = false;
    std::string truncation_error;
};

/// Reads all complete records; a truncated trailing record is reported but
/// does not discard earlier ones. Magic/version mismatch throws.
CacheReadResult read_cache(const std::string& path);

/// Pairs each graph with its cached record by digest; a missing or mismatched
/// digest throws, naming it.
void attach_spectra(Dataset& ds, const std::vector<SpectraRecord>& records);

} // namespace eigenformer
