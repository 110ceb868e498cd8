#include "eigenformer/data_io.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include <json.hpp>

#include "eigenformer/util.hpp"

namespace eigenformer {

using nlohmann::json;

namespace {

[[noreturn]] void line_error(const std::string& path, size_t line, const std::string& what) {
    throw IoError(path + ":" + std::to_string(line) + ": " + what);
}

Features parse_features(const json& x, const char* what) {
    if (!x.is_array()) throw IoError(std::string(what) + " must be an array");
    if (x.empty()) return Features::none();
    if (x[0].is_number_integer() && !x[0].is_number_float()) {
        std::vector<int> codes;
        for (const auto& v : x) {
            if (!v.is_number_integer()) throw IoError(std::string(what) + " mixes codes and vectors");
            codes.push_back(v.get<int>());
        }
        return Features::from_codes(std::move(codes));
    }
    if (!x[0].is_array()) throw IoError(std::string(what) + " entries must be vectors or int codes");
    const int dim = static_cast<int>(x[0].size());
    std::vector<double> dense;
    dense.reserve(x.size() * dim);
    for (const auto& row : x) {
        if (!row.is_array() || static_cast<int>(row.size()) != dim)
            throw IoError(std::string(what) + " rows have inconsistent widths");
        for (const auto& v : row) dense.push_back(v.get<double>());
    }
    return Features::from_dense(static_cast<int>(x.size()), dim, std::move(dense));
}

Target parse_target(const json& y) {
    if (y.is_null()) return Target::none();
    if (y.is_number()) return Target::scalar(y.get<double>());
    if (y.is_array()) {
        bool all_int = !y.empty();
        for (const auto& v : y)
            all_int = all_int && v.is_number_integer() && !v.is_number_float();
        if (all_int) {
            std::vector<int> classes;
            for (const auto& v : y) classes.push_back(v.get<int>());
            return Target::classes(std::move(classes));
        }
        std::vector<double> vals;
        for (const auto& v : y) vals.push_back(v.get<double>());
        return Target::vector(std::move(vals));
    }
    throw IoError("y must be a number, an array, or null");
}

json features_to_json(const Features& f) {
    json out = json::array();
    if (f.categorical) {
        for (int c : f.codes) out.push_back(c);
    } else {
        for (int i = 0; i < f.count; ++i) {
            json row = json::array();
            for (int d = 0; d < f.dim; ++d) row.push_back(f.dense[static_cast<size_t>(i) * f.dim + d]);
            out.push_back(row);
        }
    }
    return out;
}

json target_to_json(const Target& t) {
    switch (t.kind) {
        case Target::Kind::None: return nullptr;
        case Target::Kind::GraphScalar: return t.values[0];
        case Target::Kind::GraphVector: return json(t.values);
        case Target::Kind::NodeClasses: return json(t.node_classes);
    }
    return nullptr;
}

void update_manifest(DatasetManifest& m, const Graph& g, const std::string& path, size_t line) {
    const char* payload = "none";
    switch (g.target.kind) {
        case Target::Kind::None: payload = "none"; break;
        case Target::Kind::GraphScalar: payload = "scalar"; break;
        case Target::Kind::GraphVector: payload = "vector"; break;
        case Target::Kind::NodeClasses: payload = "node_classes"; break;
    }
    const int tw = g.target.kind == Target::Kind::GraphVector
                       ? static_cast<int>(g.target.values.size())
                       : 0;
    if (m.count == 0) {
        m.target_payload = payload;
        m.target_width = tw;
        m.node_categorical = g.node_features.categorical;
        m.node_feat_dim = g.node_features.categorical ? 0 : g.node_features.dim;
        m.has_edge_features = !g.edge_features.empty();
        m.edge_categorical = g.edge_features.categorical;
        m.edge_feat_dim = g.edge_features.categorical ? 0 : g.edge_features.dim;
    } else {
        if (m.target_payload != payload)
            line_error(path, line, "target payload kind changed from " + m.target_payload);
        if (m.target_width != tw) line_error(path, line, "target width changed");
        if (m.node_categorical != g.node_features.categorical ||
            (!m.node_categorical && m.node_feat_dim != g.node_features.dim))
            line_error(path, line, "node feature schema changed");
        if (m.has_edge_features != !g.edge_features.empty() ||
            (m.has_edge_features &&
             (m.edge_categorical != g.edge_features.categorical ||
              (!m.edge_categorical && m.edge_feat_dim != g.edge_features.dim))))
            line_error(path, line, "edge feature schema changed");
    }
    if (g.node_features.categorical)
        for (int c : g.node_features.codes) m.node_vocab = std::max(m.node_vocab, c + 1);
    if (g.edge_features.categorical)
        for (int c : g.edge_features.codes) m.edge_vocab = std::max(m.edge_vocab, c + 1);
    if (g.target.kind == Target::Kind::NodeClasses)
        for (int c : g.target.node_classes) m.num_classes = std::max(m.num_classes, c + 1);
    ++m.count;
}

} // namespace

Dataset parse_graph_lines(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open graph file: " + path);

    Dataset ds;
    std::string line;
    size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::parse_error& e) {
            line_error(path, line_no, std::string("malformed JSON: ") + e.what());
        }
        try {
            if (!j.contains("n") || !j.contains("edges") || !j.contains("x"))
                throw IoError("record needs fields n, edges, x");
            const int n = j.at("n").get<int>();
            std::vector<std::pair<int, int>> edges;
            for (const auto& e : j.at("edges")) {
                if (!e.is_array() || e.size() != 2) throw IoError("edges must be [i,j] pairs");
                edges.emplace_back(e[0].get<int>(), e[1].get<int>());
            }
            Features x = parse_features(j.at("x"), "x");
            Features ef = j.contains("e") && !j.at("e").is_null()
                              ? parse_features(j.at("e"), "e")
                              : Features::none();
            Target y = j.contains("y") ? parse_target(j.at("y")) : Target::none();

            Graph g = build_graph(n, std::move(edges), std::move(x), std::move(ef), std::move(y));
            if (!is_connected(g))
                throw GraphError(GraphError::Code::Disconnected, "graph is not connected");
            update_manifest(ds.manifest, g, path, line_no);
            ds.graphs.push_back(std::move(g));
        } catch (const IoError& e) {
            line_error(path, line_no, e.what());
        } catch (const GraphError& e) {
            line_error(path, line_no, e.what());
        } catch (const json::exception& e) {
            line_error(path, line_no, std::string("bad field: ") + e.what());
        }
    }
    return ds;
}

void write_graph_lines(const std::string& path, const std::vector<Graph>& graphs) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot open for writing: " + path);
    for (const Graph& g : graphs) {
        json j;
        j["n"] = g.num_nodes;
        json edges = json::array();
        for (auto [a, b] : g.edges) edges.push_back(json::array({a, b}));
        j["edges"] = std::move(edges);
        j["x"] = features_to_json(g.node_features);
        if (!g.edge_features.empty()) j["e"] = features_to_json(g.edge_features);
        j["y"] = target_to_json(g.target);
        out << j.dump() << "\n";
    }
}

Dataset make_dataset(std::vector<Graph> graphs) {
    Dataset ds;
    for (size_t i = 0; i < graphs.size(); ++i)
        update_manifest(ds.manifest, graphs[i], "<memory>", i + 1);
    ds.graphs = std::move(graphs);
    return ds;
}

// ---- generators ---------------------------------------------------------------

GeneratorSpec GeneratorSpec::parse(const std::string& text) {
    GeneratorSpec spec;
    const auto colon = text.find(':');
    spec.kind = text.substr(0, colon);
    if (spec.kind != "er" && spec.kind != "sbm" && spec.kind != "tree")
        throw IoError("unknown generator kind: " + spec.kind);
    if (colon == std::string::npos) return spec;

    std::stringstream ss(text.substr(colon + 1));
    std::string item;
    while (std::getline(ss, item, ',')) {
        const auto eq = item.find('=');
        if (eq == std::string::npos) throw IoError("generator spec expects key=value: " + item);
        const std::string key = item.substr(0, eq);
        const std::string val = item.substr(eq + 1);
        try {
            if (key == "count") spec.count = std::stoi(val);
            else if (key == "n") spec.n_min = spec.n_max = std::stoi(val);
            else if (key == "n_min") spec.n_min = std::stoi(val);
            else if (key == "n_max") spec.n_max = std::stoi(val);
            else if (key == "p") spec.p = std::stod(val);
            else if (key == "p_in") spec.p_in = std::stod(val);
            else if (key == "p_out") spec.p_out = std::stod(val);
            else if (key == "reveal") spec.reveal_fraction = std::stod(val);
            else if (key == "task") spec.task = val;
            else if (key == "seed") spec.seed = std::stoull(val);
            else throw IoError("unknown generator key: " + key);
        } catch (const std::invalid_argument&) {
            throw IoError("bad generator value for " + key + ": " + val);
        }
    }
    return spec;
}

namespace {

constexpr int kConnectRetryCap = 1000;

std::vector<std::pair<int, int>> er_edges(int n, double p, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> dist(0.0, 1.0);
    std::vector<std::pair<int, int>> edges;
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j)
            if (dist(rng) < p) edges.emplace_back(i, j);
    return edges;
}

std::vector<std::pair<int, int>> sbm_edges(int n, double p_in, double p_out,
                                           const std::vector<int>& block, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> dist(0.0, 1.0);
    std::vector<std::pair<int, int>> edges;
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j) {
            const double p = (block[i] == block[j]) ? p_in : p_out;
            if (dist(rng) < p) edges.emplace_back(i, j);
        }
    return edges;
}

/// Uniform labeled tree from a random Pruefer sequence.
std::vector<std::pair<int, int>> tree_edges(int n, std::mt19937_64& rng) {
    if (n == 1) return {};
    if (n == 2) return {{0, 1}};
    std::uniform_int_distribution<int> dist(0, n - 1);
    std::vector<int> pruefer(n - 2);
    for (int& v : pruefer) v = dist(rng);

    std::vector<int> degree(n, 1);
    for (int v : pruefer) ++degree[v];

    std::vector<std::pair<int, int>> edges;
    // Smallest-leaf elimination.
    std::vector<bool> used(n, false);
    for (int v : pruefer) {
        int leaf = -1;
        for (int u = 0; u < n; ++u)
            if (degree[u] == 1 && !used[u]) {
                leaf = u;
                break;
            }
        edges.emplace_back(std::min(leaf, v), std::max(leaf, v));
        used[leaf] = true;
        --degree[leaf];
        --degree[v];
    }
    int a = -1, b = -1;
    for (int u = 0; u < n; ++u)
        if (degree[u] == 1 && !used[u]) (a < 0 ? a : b) = u;
    edges.emplace_back(std::min(a, b), std::max(a, b));
    return edges;
}

bool edges_connected(int n, const std::vector<std::pair<int, int>>& edges) {
    if (n == 0) return true;
    std::vector<std::vector<int>> adj(n);
    for (auto [a, b] : edges) {
        adj[a].push_back(b);
        adj[b].push_back(a);
    }
    std::vector<bool> seen(n, false);
    std::vector<int> stack{0};
    seen[0] = true;
    int visited = 1;
    while (!stack.empty()) {
        const int u = stack.back();
        stack.pop_back();
        for (int v : adj[u])
            if (!seen[v]) {
                seen[v] = true;
                ++visited;
                stack.push_back(v);
            }
    }
    return visited == n;
}

/// Mean of the three smallest nonzero Laplacian eigenvalues.
double spectral_regression_target(const Graph& g) {
    Spectrum s = eigendecompose(laplacian(g));
    std::vector<double> nonzero;
    for (double l : s.eigenvalues)
        if (l > kZeroEigenvalueTol) nonzero.push_back(l);
    if (nonzero.size() < 3)
        throw IoError("spectral_regression needs >= 4 nodes (3 nonzero eigenvalues)");
    return (nonzero[0] + nonzero[1] + nonzero[2]) / 3.0;
}

Features structural_node_features(const Graph& g) {
    // {1, degree/n}: constant channel plus normalized degree.
    auto deg = degree_vector(g);
    std::vector<double> dense;
    dense.reserve(static_cast<size_t>(g.num_nodes) * 2);
    for (int i = 0; i < g.num_nodes; ++i) {
        dense.push_back(1.0);
        dense.push_back(static_cast<double>(deg.degrees[i]) / static_cast<double>(g.num_nodes));
    }
    return Features::from_dense(g.num_nodes, 2, std::move(dense));
}

} // namespace

std::vector<Graph> generate_synthetic(const GeneratorSpec& spec) {
    if (spec.count < 1) throw IoError("generator count must be >= 1");
    if (spec.n_min < 1 || spec.n_max < spec.n_min) throw IoError("bad generator node range");
    if (spec.task == "block_labels" && spec.kind != "sbm")
        throw IoError("block_labels task requires the sbm generator");

    std::vector<Graph> out;
    out.reserve(spec.count);
    for (int gi = 0; gi < spec.count; ++gi) {
        // Independent deterministic stream per graph index.
        std::mt19937_64 rng(fnv1a64_u32(static_cast<uint32_t>(gi),
                                        fnv1a64(&spec.seed, sizeof(spec.seed))));
        std::uniform_int_distribution<int> ndist(spec.n_min, spec.n_max);
        const int n = ndist(rng);

        std::vector<int> block(n, 0);
        std::vector<std::pair<int, int>> edges;
        if (spec.kind == "tree") {
            edges = tree_edges(n, rng);
        } else {
            if (spec.kind == "sbm")
                for (int i = 0; i < n; ++i) block[i] = (i < n / 2) ? 0 : 1;
            int attempt = 0;
            for (;; ++attempt) {
                if (attempt >= kConnectRetryCap)
                    throw IoError("generator failed to produce a connected graph after " +
                                  std::to_string(kConnectRetryCap) + " attempts (p too small?)");
                edges = (spec.kind == "er") ? er_edges(n, spec.p, rng)
                                            : sbm_edges(n, spec.p_in, spec.p_out, block, rng);
                if (edges_connected(n, edges)) break;
            }
        }

        Features node_features;
        Target target = Target::none();
        if (spec.task == "block_labels") {
            // CLUSTER-style: a fraction of nodes reveal their block as a
            // categorical feature (code block+1); the rest carry code 0.
            std::vector<int> codes(n, 0);
            std::uniform_real_distribution<double> u(0.0, 1.0);
            for (int i = 0; i < n; ++i)
                if (u(rng) < spec.reveal_fraction) codes[i] = block[i] + 1;
            node_features = Features::from_codes(std::move(codes));
            target = Target::classes(block);
        }

        Graph g = build_graph(n, std::move(edges), std::move(node_features), Features::none(),
                              std::move(target));
        if (spec.task != "block_labels") {
            Features f = structural_node_features(g);
            Target t = (spec.task == "spectral_regression")
                           ? Target::scalar(spectral_regression_target(g))
                           : Target::none();
            g = build_graph(g.num_nodes, g.edges, std::move(f), Features::none(), std::move(t));
        }
        out.push_back(std::move(g));
    }
    return out;
}

// ---- cache ---------------------------------------------------------------------

uint64_t graph_digest(const Graph& g) {
    uint64_t h = kFnvOffset;
    h = fnv1a64_u32(static_cast<uint32_t>(g.num_nodes), h);
    for (auto [a, b] : g.edges) {
        h = fnv1a64_u32(static_cast<uint32_t>(a), h);
        h = fnv1a64_u32(static_cast<uint32_t>(b), h);
    }
    return h;
}

SpectraRecord make_record(const Graph& g, const SpectralDistances& sd, double residual) {
    SpectraRecord r;
    r.digest = graph_digest(g);
    r.num_nodes = static_cast<uint32_t>(sd.num_nodes);
    r.k_active = static_cast<uint32_t>(sd.num_active());
    r.diameter = static_cast<uint32_t>(sd.diameter);
    r.residual = residual;
    r.eigenvalues = sd.lambdas;
    r.sigma = sd.sigma;
    return r;
}

SpectralDistances to_spectral_distances(const SpectraRecord& r) {
    SpectralDistances sd;
    sd.num_nodes = static_cast<int>(r.num_nodes);
    sd.diameter = static_cast<int>(r.diameter);
    sd.lambdas = r.eigenvalues;
    sd.sigma = r.sigma;
    // A connected graph skips exactly the single zero eigenpair (index 0).
    sd.active_frequencies.resize(r.k_active);
    std::iota(sd.active_frequencies.begin(), sd.active_frequencies.end(), 1);
    return sd;
}

namespace {

constexpr char kCacheMagic[4] = {'E', 'I', 'G', 'S'};
constexpr uint32_t kCacheVersion = 1;

template <typename T>
void put(std::ostream& out, T v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(v)); // little-endian host
}

template <typename T>
bool get(std::istream& in, T& v) {
    in.read(reinterpret_cast<char*>(&v), sizeof(v));
    return in.gcount() == sizeof(v);
}

} // namespace

void write_cache(const std::string& path, const std::vector<SpectraRecord>& records) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open cache for writing: " + path);
    out.write(kCacheMagic, 4);
    put(out, kCacheVersion);
    for (const SpectraRecord& r : records) {
        put(out, r.digest);
        put(out, r.num_nodes);
        put(out, r.k_active);
        put(out, r.diameter);
        put(out, r.residual);
        out.write(reinterpret_cast<const char*>(r.eigenvalues.data()),
                  static_cast<std::streamsize>(r.eigenvalues.size() * sizeof(double)));
        out.write(reinterpret_cast<const char*>(r.sigma.data()),
                  static_cast<std::streamsize>(r.sigma.size() * sizeof(double)));
    }
    if (!out) throw IoError("write failed: " + path);
}

CacheReadResult read_cache(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open cache: " + path);
    char magic[4];
    in.read(magic, 4);
    if (in.gcount() != 4 || std::memcmp(magic, kCacheMagic, 4) != 0)
        throw IoError("not a spectra cache (bad magic): " + path);
    uint32_t version = 0;
    if (!get(in, version)) throw IoError("truncated cache header: " + path);
    if (version != kCacheVersion)
        throw IoError("cache version " + std::to_string(version) + " unsupported (want " +
                      std::to_string(kCacheVersion) + "): " + path);

    CacheReadResult result;
    for (size_t index = 0;; ++index) {
        SpectraRecord r;
        if (!get(in, r.digest)) {
            if (in.gcount() == 0) break; // clean EOF
            result.truncated = true;
            result.truncation_error = "record " + std::to_string(index) + " truncated mid-header";
            break;
        }
        bool ok = get(in, r.num_nodes) && get(in, r.k_active) && get(in, r.diameter) &&
                  get(in, r.residual);
        if (ok) {
            const size_t n = r.num_nodes;
            r.eigenvalues.resize(r.k_active);
            r.sigma.resize(static_cast<size_t>(r.k_active) * n * n);
            in.read(reinterpret_cast<char*>(r.eigenvalues.data()),
                    static_cast<std::streamsize>(r.eigenvalues.size() * sizeof(double)));
            ok = ok && in.gcount() ==
                           static_cast<std::streamsize>(r.eigenvalues.size() * sizeof(double));
            in.read(reinterpret_cast<char*>(r.sigma.data()),
                    static_cast<std::streamsize>(r.sigma.size() * sizeof(double)));
            ok = ok &&
                 in.gcount() == static_cast<std::streamsize>(r.sigma.size() * sizeof(double));
        }
        if (!ok) {
            result.truncated = true;
            result.truncation_error = "record " + std::to_string(index) + " truncated";
            break;
        }
        result.records.push_back(std::move(r));
    }
    return result;
}

void attach_spectra(Dataset& ds, const std::vector<SpectraRecord>& records) {
    std::unordered_map<uint64_t, const SpectraRecord*> by_digest;
    for (const SpectraRecord& r : records) by_digest[r.digest] = &r;

    ds.spectra.clear();
    ds.spectra.reserve(ds.graphs.size());
    for (size_t i = 0; i < ds.graphs.size(); ++i) {
        const uint64_t d = graph_digest(ds.graphs[i]);
        auto it = by_digest.find(d);
        if (it == by_digest.end()) {
            char buf[24];
            std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(d));
            throw IoError("cache has no record for graph " + std::to_string(i) + " (digest " +
                          buf + ")");
        }
        if (static_cast<int>(it->second->num_nodes) != ds.graphs[i].num_nodes)
            throw IoError("cache record for graph " + std::to_string(i) +
                          " has wrong node count (digest collision?)");
        ds.spectra.push_back(to_spectral_distances(*it->second));
    }
}

} // namespace eigenformer
