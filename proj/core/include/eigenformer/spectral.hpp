#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

#include "eigenformer/graph.hpp"

namespace eigenformer {

/// Raised when the eigensolver fails to reach its tolerance.
class SolverError : public std::runtime_error {
public:
    SolverError(const std::string& what, double achieved_off_norm)
        : std::runtime_error(what), achieved_off_norm_(achieved_off_norm) {}

    double achieved_off_norm() const noexcept { return achieved_off_norm_; }

private:
    double achieved_off_norm_;
};

/// Dense symmetric matrix, row-major doubles. Symmetry is enforced by
/// construction: `set` writes both (i,j) and (j,i).
class SymmetricMatrix {
public:
    SymmetricMatrix() = default;
    explicit SymmetricMatrix(int order) : order_(order), entries_(static_cast<size_t>(order) * order, 0.0) {}

    int order() const { return order_; }
    double at(int i, int j) const { return entries_[static_cast<size_t>(i) * order_ + j]; }
    void set(int i, int j, double v) {
        entries_[static_cast<size_t>(i) * order_ + j] = v;
        entries_[static_cast<size_t>(j) * order_ + i] = v;
    }
    const std::vector<double>& entries() const { return entries_; }
    double frobenius_norm() const;

private:
    int order_ = 0;
    std::vector<double> entries_;
};

/// Eigenpairs of a symmetric matrix, ascending by eigenvalue. Eigenvector k
/// is stored contiguously at `vectors[k*n .. k*n+n)` and is unit-norm; the
/// set is orthonormal to solver precision.
struct Spectrum {
    int order = 0;
    std::vector<double> eigenvalues;
    std::vector<double> vectors; // column k contiguous, length order each
    double residual_bound = 0.0; // max_k ||M u_k - lambda_k u_k||_2

    const double* eigenvector(int k) const { return vectors.data() + static_cast<size_t>(k) * order; }
};

/// Precomputed relative spectral distances: sigma[k][i][j] for each active
/// frequency k (eigenvalues above the zero tolerance). This is the offline
/// artifact attention consumes; it depends only on the graph adjacency.
struct SpectralDistances {
    int num_nodes = 0;
    std::vector<int> active_frequencies; // indices into the source spectrum
    std::vector<double> lambdas;         // eigenvalues of those frequencies
    std::vector<double> sigma;           // k_active * n * n, row-major per frequency
    int diameter = 0;

    int num_active() const { return static_cast<int>(active_frequencies.size()); }
    double at(int k, int i, int j) const {
        return sigma[(static_cast<size_t>(k) * num_nodes + i) * num_nodes + j];
    }
    double max_sigma() const;
};

/// Per-eigenpair verification of the smoothness identity
/// lambda_k = sum over edges of squared eigenvector differences,
/// plus eigenvector residual and basis orthonormality.
struct SpectrumReport {
    struct PairCheck {
        double eigenvalue = 0.0;
        double identity_error = 0.0; // |lambda_k - edge sum|
        double residual = 0.0;       // ||L u_k - lambda_k u_k||_2
    };
    std::vector<PairCheck> pairs;
    double max_identity_error = 0.0;
    double max_residual = 0.0;
    double max_orthonormality_error = 0.0;
    double laplacian_frobenius = 0.0;
    bool pass = false;
};

SymmetricMatrix laplacian(const Graph& g);

/// Cyclic Jacobi eigendecomposition. Sweeps rotations until the off-diagonal
/// Frobenius norm drops below tol * ||m||_F; throws SolverError if the sweep
/// cap is hit first.
Spectrum eigendecompose(const SymmetricMatrix& m, double tol = 1e-12, int max_sweeps = 100);

constexpr double kZeroEigenvalueTol = 1e-8;

/// Relative-distance tensor. For (i,j) in E: (u_k[i]-u_k[j])^2 / lambda_k;
/// for non-adjacent i != j the same with an extra diameter divisor; zero on
/// the diagonal. Active frequencies are those with lambda_k > zero_tol;
/// a connected graph excludes exactly one eigenpair.
SpectralDistances sigma_tensor(const Graph& g, const Spectrum& s,
                               double zero_tol = kZeroEigenvalueTol);

SpectrumReport verify_spectrum(const Graph& g, const Spectrum& s);

} // namespace eigenformer
