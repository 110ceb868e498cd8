#pragma once

#include <string>
#include <utility>
#include <vector>

#include "eigenformer/data_io.hpp"
#include "eigenformer/model.hpp"

namespace eigenformer {

/// Mean relative distance split by adjacency, per graph and active frequency.
struct SigmaProfileRow {
    int graph = 0;
    int freq = 0; // position among the graph's active frequencies
    double lambda = 0.0;
    double adjacent_mean = 0.0;
    double nonadjacent_mean = 0.0;
};

std::vector<SigmaProfileRow> sigma_adjacency_profile(const Dataset& ds);

/// Pooled over every graph's lowest active frequency: (adjacent mean,
/// non-adjacent mean) of sigma across the whole corpus.
std::pair<double, double> lowest_frequency_adjacency_means(const Dataset& ds);

/// CSV emitters used by the inspect subcommand; all output is byte-stable.
void write_phi_curves_csv(EigenformerModel& model, const SpectralDistances& sd,
                          const std::string& path);
void write_attention_csv(EigenformerModel& model, const SpectralDistances& sd, int layer,
                         int head, const std::string& path);
void write_sigma_profile_csv(const Dataset& ds, const std::string& path);

} // namespace eigenformer
