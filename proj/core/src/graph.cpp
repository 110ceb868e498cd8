#include "eigenformer/graph.hpp"

#include <algorithm>
#include <numeric>
#include <queue>
#include <random>
#include <set>

namespace eigenformer {

Features Features::from_dense(int count, int dim, std::vector<double> values) {
    if (static_cast<size_t>(count) * dim != values.size())
        throw GraphError(GraphError::Code::FeatureMismatch,
                         "dense feature payload has " + std::to_string(values.size()) +
                             " values, expected " + std::to_string(count) + "x" + std::to_string(dim));
    Features f;
    f.categorical = false;
    f.count = count;
    f.dim = dim;
    f.dense = std::move(values);
    return f;
}

Features Features::from_codes(std::vector<int> codes) {
    Features f;
    f.categorical = true;
    f.count = static_cast<int>(codes.size());
    f.dim = 1;
    f.codes = std::move(codes);
    return f;
}

bool Graph::has_edge(int i, int j) const {
    if (i > j) std::swap(i, j);
    return std::binary_search(edges.begin(), edges.end(), std::make_pair(i, j));
}

Graph build_graph(int num_nodes, std::vector<std::pair<int, int>> edges,
                  Features node_features, Features edge_features, Target target) {
    if (num_nodes < 0)
        throw GraphError(GraphError::Code::IndexOutOfRange, "negative node count");

    for (auto& [a, b] : edges) {
        if (a < 0 || b < 0 || a >= num_nodes || b >= num_nodes)
            throw GraphError(GraphError::Code::IndexOutOfRange,
                             "edge (" + std::to_string(a) + "," + std::to_string(b) +
                                 ") out of range for " + std::to_string(num_nodes) + " nodes");
        if (a == b)
            throw GraphError(GraphError::Code::SelfLoop,
                             "self-loop at node " + std::to_string(a));
        if (a > b) std::swap(a, b);
    }
    std::vector<std::pair<int, int>> sorted = edges;
    std::sort(sorted.begin(), sorted.end());
    for (size_t i = 1; i < sorted.size(); ++i) {
        if (sorted[i] == sorted[i - 1])
            throw GraphError(GraphError::Code::DuplicateEdge,
                             "duplicate edge (" + std::to_string(sorted[i].first) + "," +
                                 std::to_string(sorted[i].second) + ")");
    }

    if (!node_features.empty() && node_features.count != num_nodes)
        throw GraphError(GraphError::Code::FeatureMismatch,
                         "node feature count " + std::to_string(node_features.count) +
                             " != num_nodes " + std::to_string(num_nodes));
    if (!edge_features.empty() && edge_features.count != static_cast<int>(sorted.size()))
        throw GraphError(GraphError::Code::FeatureMismatch,
                         "edge feature count " + std::to_string(edge_features.count) +
                             " != num_edges " + std::to_string(sorted.size()));
    if (target.kind == Target::Kind::NodeClasses &&
        static_cast<int>(target.node_classes.size()) != num_nodes)
        throw GraphError(GraphError::Code::FeatureMismatch,
                         "node class target count " + std::to_string(target.node_classes.size()) +
                             " != num_nodes " + std::to_string(num_nodes));

    // Edge features arrived aligned with the caller's edge order; realign them
    // with the canonical sorted order.
    if (!edge_features.empty()) {
        std::vector<int> perm(edges.size());
        std::iota(perm.begin(), perm.end(), 0);
        std::sort(perm.begin(), perm.end(),
                  [&](int x, int y) { return edges[x] < edges[y]; });
        Features realigned = edge_features;
        for (size_t pos = 0; pos < perm.size(); ++pos) {
            int src = perm[pos];
            if (edge_features.categorical) {
                realigned.codes[pos] = edge_features.codes[src];
            } else {
                for (int d = 0; d < edge_features.dim; ++d)
                    realigned.dense[pos * edge_features.dim + d] =
                        edge_features.dense[static_cast<size_t>(src) * edge_features.dim + d];
            }
        }
        edge_features = std::move(realigned);
    }

    Graph g;
    g.num_nodes = num_nodes;
    g.edges = std::move(sorted);
    g.node_features = std::move(node_features);
    g.edge_features = std::move(edge_features);
    g.target = std::move(target);
    return g;
}

DegreeVector degree_vector(const Graph& g) {
    DegreeVector d;
    d.degrees.assign(g.num_nodes, 0);
    for (auto [a, b] : g.edges) {
        ++d.degrees[a];
        ++d.degrees[b];
    }
    return d;
}

namespace {

std::vector<std::vector<int>> adjacency_lists(const Graph& g) {
    std::vector<std::vector<int>> adj(g.num_nodes);
    for (auto [a, b] : g.edges) {
        adj[a].push_back(b);
        adj[b].push_back(a);
    }
    return adj;
}

} // namespace

std::vector<int> connected_components(const Graph& g) {
    std::vector<int> label(g.num_nodes, -1);
    auto adj = adjacency_lists(g);
    int next = 0;
    for (int start = 0; start < g.num_nodes; ++start) {
        if (label[start] >= 0) continue;
        label[start] = next;
        std::queue<int> q;
        q.push(start);
        while (!q.empty()) {
            int u = q.front();
            q.pop();
            for (int v : adj[u]) {
                if (label[v] < 0) {
                    label[v] = next;
                    q.push(v);
                }
            }
        }
        ++next;
    }
    return label;
}

bool is_connected(const Graph& g) {
    if (g.num_nodes == 0) return true;
    auto labels = connected_components(g);
    return *std::max_element(labels.begin(), labels.end()) == 0;
}

int diameter(const Graph& g) {
    if (g.num_nodes == 0)
        throw GraphError(GraphError::Code::Disconnected, "diameter of empty graph is undefined");
    if (g.num_nodes == 1) return 0;

    auto adj = adjacency_lists(g);
    int best = 0;
    std::vector<int> dist(g.num_nodes);
    for (int start = 0; start < g.num_nodes; ++start) {
        std::fill(dist.begin(), dist.end(), -1);
        dist[start] = 0;
        std::queue<int> q;
        q.push(start);
        while (!q.empty()) {
            int u = q.front();
            q.pop();
            for (int v : adj[u]) {
                if (dist[v] < 0) {
                    dist[v] = dist[u] + 1;
                    q.push(v);
                }
            }
        }
        for (int v = 0; v < g.num_nodes; ++v) {
            if (dist[v] < 0)
                throw GraphError(GraphError::Code::Disconnected,
                                 "diameter undefined: node " + std::to_string(v) +
                                     " unreachable from node " + std::to_string(start));
            best = std::max(best, dist[v]);
        }
    }
    return best;
}

NodePermutation NodePermutation::identity(int n) {
    NodePermutation p;
    p.mapping.resize(n);
    std::iota(p.mapping.begin(), p.mapping.end(), 0);
    return p;
}

NodePermutation NodePermutation::random(int n, uint64_t seed) {
    NodePermutation p = identity(n);
    std::mt19937_64 rng(seed);
    std::shuffle(p.mapping.begin(), p.mapping.end(), rng);
    return p;
}

NodePermutation NodePermutation::inverse() const {
    NodePermutation inv;
    inv.mapping.assign(mapping.size(), -1);
    for (size_t i = 0; i < mapping.size(); ++i) inv.mapping[mapping[i]] = static_cast<int>(i);
    return inv;
}

namespace {

void check_bijection(const NodePermutation& p, int n) {
    if (p.size() != n)
        throw GraphError(GraphError::Code::SizeMismatch,
                         "permutation size " + std::to_string(p.size()) + " != num_nodes " +
                             std::to_string(n));
    std::vector<bool> seen(n, false);
    for (int v : p.mapping) {
        if (v < 0 || v >= n || seen[v])
            throw GraphError(GraphError::Code::SizeMismatch, "mapping is not a bijection");
        seen[v] = true;
    }
}

} // namespace

Graph permute(const Graph& g, const NodePermutation& p) {
    check_bijection(p, g.num_nodes);

    std::vector<std::pair<int, int>> new_edges(g.edges.size());
    for (size_t e = 0; e < g.edges.size(); ++e) {
        int a = p.mapping[g.edges[e].first];
        int b = p.mapping[g.edges[e].second];
        if (a > b) std::swap(a, b);
        new_edges[e] = {a, b};
    }

    Features nf = g.node_features;
    if (!nf.empty()) {
        for (int i = 0; i < g.num_nodes; ++i) {
            int ni = p.mapping[i];
            if (nf.categorical) {
                nf.codes[ni] = g.node_features.codes[i];
            } else {
                for (int d = 0; d < nf.dim; ++d)
                    nf.dense[static_cast<size_t>(ni) * nf.dim + d] =
                        g.node_features.dense[static_cast<size_t>(i) * nf.dim + d];
            }
        }
    }

    // Edge features follow their edge; build_graph re-sorts both together.
    Target t = g.target;
    if (t.kind == Target::Kind::NodeClasses) {
        for (int i = 0; i < g.num_nodes; ++i)
            t.node_classes[p.mapping[i]] = g.target.node_classes[i];
    }

    return build_graph(g.num_nodes, std::move(new_edges), std::move(nf), g.edge_features,
                       std::move(t));
}

} // namespace eigenformer
