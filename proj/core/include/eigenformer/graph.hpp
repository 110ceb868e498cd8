#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace eigenformer {

/// Validation failure raised while building or transforming graphs.
/// The code pins down which invariant was violated so callers (and tests)
/// can distinguish failure modes without parsing messages.
class GraphError : public std::runtime_error {
public:
    enum class Code {
        SelfLoop,
        DuplicateEdge,
        IndexOutOfRange,
        FeatureMismatch,
        Disconnected,
        SizeMismatch,
    };

    GraphError(Code code, const std::string& what)
        : std::runtime_error(what), code_(code) {}

    Code code() const noexcept { return code_; }

private:
    Code code_;
};

/// Task label payload carried by a graph. Interpreted only by the training
/// head; everything else treats it as opaque.
struct Target {
    enum class Kind { None, GraphScalar, GraphVector, NodeClasses };

    Kind kind = Kind::None;
    std::vector<double> values;    // GraphScalar: size 1; GraphVector: size T
    std::vector<int> node_classes; // NodeClasses: size num_nodes

    static Target none() { return {}; }
    static Target scalar(double v) { return {Kind::GraphScalar, {v}, {}}; }
    static Target vector(std::vector<double> v) { return {Kind::GraphVector, std::move(v), {}}; }
    static Target classes(std::vector<int> c) { return {Kind::NodeClasses, {}, std::move(c)}; }

    bool operator==(const Target&) const = default;
};

/// Per-entity feature payload: either dense real vectors (row-major) or
/// categorical codes. `count == 0 && dim == 0` means "absent".
struct Features {
    bool categorical = false;
    int count = 0;         // number of entities (nodes or edges)
    int dim = 0;           // dense width; 1 when categorical
    std::vector<double> dense; // count*dim, row-major
    std::vector<int> codes;    // count entries when categorical

    static Features none() { return {}; }
    static Features from_dense(int count, int dim, std::vector<double> values);
    static Features from_codes(std::vector<int> codes);

    bool empty() const { return count == 0 && dim == 0; }
    const double* row(int i) const { return dense.data() + static_cast<size_t>(i) * dim; }

    bool operator==(const Features&) const = default;
};

/// Simple undirected graph. Edges are stored canonically as (min,max) pairs,
/// sorted lexicographically, with no self-loops or duplicates; `build_graph`
/// is the only sanctioned constructor. Immutable after construction.
struct Graph {
    int num_nodes = 0;
    std::vector<std::pair<int, int>> edges;
    Features node_features;
    Features edge_features; // empty() means d_E = 0
    Target target;

    int num_edges() const { return static_cast<int>(edges.size()); }
    bool has_edge(int i, int j) const;

    bool operator==(const Graph&) const = default;
};

struct DegreeVector {
    std::vector<int> degrees;
};

/// Bijection on {0..n-1}; mapping[i] is the new index of old node i.
struct NodePermutation {
    std::vector<int> mapping;

    static NodePermutation identity(int n);
    static NodePermutation random(int n, uint64_t seed);
    NodePermutation inverse() const;
    int size() const { return static_cast<int>(mapping.size()); }
};

Graph build_graph(int num_nodes, std::vector<std::pair<int, int>> edges,
                  Features node_features = Features::none(),
                  Features edge_features = Features::none(),
                  Target target = Target::none());

DegreeVector degree_vector(const Graph& g);

/// Component labels, contiguous from 0 in order of first appearance.
std::vector<int> connected_components(const Graph& g);

bool is_connected(const Graph& g);

/// Max shortest-path hop count over all node pairs (BFS from every node).
/// Throws GraphError::Disconnected when the graph is not connected.
int diameter(const Graph& g);

/// Relabels nodes through p; features and targets are carried along, edges
/// re-canonicalized.
Graph permute(const Graph& g, const NodePermutation& p);

} // namespace eigenformer
