#include "eigenformer/inspect.hpp"

#include <fstream>

#include "eigenformer/util.hpp"

namespace eigenformer {

std::vector<SigmaProfileRow> sigma_adjacency_profile(const Dataset& ds) {
    if (!ds.has_spectra()) throw IoError("sigma_adjacency_profile: dataset has no spectra");
    std::vector<SigmaProfileRow> rows;
    for (size_t gi = 0; gi < ds.graphs.size(); ++gi) {
        const Graph& g = ds.graphs[gi];
        const SpectralDistances& sd = ds.spectra[gi];
        const int n = g.num_nodes;
        for (int k = 0; k < sd.num_active(); ++k) {
            double adj_sum = 0.0, nonadj_sum = 0.0;
            long adj_cnt = 0, nonadj_cnt = 0;
            for (int i = 0; i < n; ++i)
                for (int j = i + 1; j < n; ++j) {
                    if (g.has_edge(i, j)) {
                        adj_sum += sd.at(k, i, j);
                        ++adj_cnt;
                    } else {
                        nonadj_sum += sd.at(k, i, j);
                        ++nonadj_cnt;
                    }
                }
            SigmaProfileRow row;
            row.graph = static_cast<int>(gi);
            row.freq = k;
            row.lambda = sd.lambdas[k];
            row.adjacent_mean = adj_cnt ? adj_sum / adj_cnt : 0.0;
            row.nonadjacent_mean = nonadj_cnt ? nonadj_sum / nonadj_cnt : 0.0;
            rows.push_back(row);
        }
    }
    return rows;
}

std::pair<double, double> lowest_frequency_adjacency_means(const Dataset& ds) {
    if (!ds.has_spectra()) throw IoError("dataset has no spectra");
    double adj_sum = 0.0, nonadj_sum = 0.0;
    long adj_cnt = 0, nonadj_cnt = 0;
    for (size_t gi = 0; gi < ds.graphs.size(); ++gi) {
        const Graph& g = ds.graphs[gi];
        const SpectralDistances& sd = ds.spectra[gi];
        if (sd.num_active() == 0) continue;
        const int n = g.num_nodes;
        for (int i = 0; i < n; ++i)
            for (int j = i + 1; j < n; ++j) {
                if (g.has_edge(i, j)) {
                    adj_sum += sd.at(0, i, j);
                    ++adj_cnt;
                } else {
                    nonadj_sum += sd.at(0, i, j);
                    ++nonadj_cnt;
                }
            }
    }
    return {adj_cnt ? adj_sum / adj_cnt : 0.0, nonadj_cnt ? nonadj_sum / nonadj_cnt : 0.0};
}

void write_phi_curves_csv(EigenformerModel& model, const SpectralDistances& sd,
                          const std::string& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot write " + path);
    NoGradGuard ng;
    out << "layer,lambda,head,phi\n";
    for (size_t l = 0; l < model.layers.size(); ++l) {
        Tensor imp = phi_eval(model.layers[l].phi, sd.lambdas);
        const int h_out = imp.dim(1);
        for (int k = 0; k < sd.num_active(); ++k)
            for (int h = 0; h < h_out; ++h)
                out << l << ',' << format_double(sd.lambdas[k]) << ',' << h << ','
                    << format_double(imp.at(static_cast<size_t>(k) * h_out + h)) << "\n";
    }
}

void write_attention_csv(EigenformerModel& model, const SpectralDistances& sd, int layer,
                         int head, const std::string& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot write " + path);
    NoGradGuard ng;
    std::mt19937_64 rng(0);
    EigenformerLayer& lay = model.layers[layer];
    Tensor imp = phi_eval(lay.phi, sd.lambdas);
    Tensor alpha3 = saa_attention(sd, imp, 0.0, /*train=*/false, rng);
    const int n = sd.num_nodes;
    const int plane = (lay.head_mode == HeadMode::PerHead) ? head : 0;
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) {
            if (j) out << ',';
            out << format_double(alpha3.at((static_cast<size_t>(plane) * n + i) * n + j));
        }
        out << "\n";
    }
}

void write_sigma_profile_csv(const Dataset& ds, const std::string& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot write " + path);
    out << "graph,freq,lambda,adjacent_mean,nonadjacent_mean\n";
    for (const SigmaProfileRow& r : sigma_adjacency_profile(ds))
        out << r.graph << ',' << r.freq << ',' << format_double(r.lambda) << ','
            << format_double(r.adjacent_mean) << ',' << format_double(r.nonadjacent_mean) << "\n";
}

} // namespace eigenformer
