#include "eigenformer/spectral.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace eigenformer {

double SymmetricMatrix::frobenius_norm() const {
    double s = 0.0;
    for (double v : entries_) s += v * v;
    return std::sqrt(s);
}

double SpectralDistances::max_sigma() const {
    double m = 0.0;
    for (double v : sigma) m = std::max(m, v);
    return m;
}

SymmetricMatrix laplacian(const Graph& g) {
    SymmetricMatrix L(g.num_nodes);
    auto deg = degree_vector(g);
    for (int i = 0; i < g.num_nodes; ++i) L.set(i, i, static_cast<double>(deg.degrees[i]));
    for (auto [a, b] : g.edges) L.set(a, b, -1.0);
    return L;
}

namespace {

double off_diagonal_norm(const std::vector<double>& a, int n) {
    double s = 0.0;
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            if (i != j) s += a[static_cast<size_t>(i) * n + j] * a[static_cast<size_t>(i) * n + j];
    return std::sqrt(s);
}

} // namespace

Spectrum eigendecompose(const SymmetricMatrix& m, double tol, int max_sweeps) {
    const int n = m.order();
    Spectrum out;
    out.order = n;
    if (n == 0) return out;

    std::vector<double> a = m.entries();
    std::vector<double> v(static_cast<size_t>(n) * n, 0.0);
    for (int i = 0; i < n; ++i) v[static_cast<size_t>(i) * n + i] = 1.0;

    auto A = [&](int i, int j) -> double& { return a[static_cast<size_t>(i) * n + j]; };
    auto V = [&](int i, int j) -> double& { return v[static_cast<size_t>(i) * n + j]; };

    const double threshold = tol * m.frobenius_norm();
    double off = off_diagonal_norm(a, n);

    int sweep = 0;
    while (off > threshold) {
        if (sweep++ >= max_sweeps)
            throw SolverError("jacobi eigensolver did not converge after " +
                                  std::to_string(max_sweeps) + " sweeps (off-diagonal norm " +
                                  std::to_string(off) + ", threshold " + std::to_string(threshold) + ")",
                              off);
        for (int p = 0; p < n - 1; ++p) {
            for (int q = p + 1; q < n; ++q) {
                const double apq = A(p, q);
                if (std::abs(apq) < 1e-300) continue;
                const double theta = (A(q, q) - A(p, p)) / (2.0 * apq);
                double t;
                if (std::abs(theta) > 1e150) {
                    t = 1.0 / (2.0 * theta);
                } else {
                    t = 1.0 / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                    if (theta < 0.0) t = -t;
                }
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;
                const double tau = s / (1.0 + c);

                const double app = A(p, p), aqq = A(q, q);
                A(p, p) = app - t * apq;
                A(q, q) = aqq + t * apq;
                A(p, q) = 0.0;
                A(q, p) = 0.0;
                for (int i = 0; i < n; ++i) {
                    if (i == p || i == q) continue;
                    const double aip = A(i, p), aiq = A(i, q);
                    A(i, p) = aip - s * (aiq + tau * aip);
                    A(p, i) = A(i, p);
                    A(i, q) = aiq + s * (aip - tau * aiq);
                    A(q, i) = A(i, q);
                }
                for (int i = 0; i < n; ++i) {
                    const double vip = V(i, p), viq = V(i, q);
                    V(i, p) = vip - s * (viq + tau * vip);
                    V(i, q) = viq + s * (vip - tau * viq);
                }
            }
        }
        off = off_diagonal_norm(a, n);
    }

    // Sort ascending, carrying eigenvector columns along.
    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](int x, int y) { return A(x, x) < A(y, y); });

    out.eigenvalues.resize(n);
    out.vectors.resize(static_cast<size_t>(n) * n);
    for (int k = 0; k < n; ++k) {
        const int col = order[k];
        out.eigenvalues[k] = A(col, col);
        for (int i = 0; i < n; ++i)
            out.vectors[static_cast<size_t>(k) * n + i] = V(i, col);
    }

    // Residuals against the original matrix.
    double worst = 0.0;
    std::vector<double> r(n);
    for (int k = 0; k < n; ++k) {
        const double* u = out.eigenvector(k);
        const double lambda = out.eigenvalues[k];
        double norm2 = 0.0;
        for (int i = 0; i < n; ++i) {
            double mu = 0.0;
            for (int j = 0; j < n; ++j) mu += m.at(i, j) * u[j];
            const double ri = mu - lambda * u[i];
            norm2 += ri * ri;
        }
        worst = std::max(worst, std::sqrt(norm2));
    }
    out.residual_bound = worst;
    return out;
}

SpectralDistances sigma_tensor(const Graph& g, const Spectrum& s, double zero_tol) {
    const int n = g.num_nodes;
    if (s.order != n)
        throw std::invalid_argument("sigma_tensor: spectrum order " + std::to_string(s.order) +
                                    " != num_nodes " + std::to_string(n));

    SpectralDistances sd;
    sd.num_nodes = n;
    int near_zero = 0;
    for (int k = 0; k < n; ++k) {
        if (s.eigenvalues[k] > zero_tol) {
            sd.active_frequencies.push_back(k);
            sd.lambdas.push_back(s.eigenvalues[k]);
        } else {
            ++near_zero;
        }
    }
    if (near_zero != 1)
        throw GraphError(GraphError::Code::Disconnected,
                         "sigma_tensor: found " + std::to_string(near_zero) +
                             " near-zero eigenvalues; expected exactly 1 (connected graph)");

    sd.diameter = diameter(g);
    const int ka = sd.num_active();
    sd.sigma.assign(static_cast<size_t>(ka) * n * n, 0.0);

    for (int k = 0; k < ka; ++k) {
        const double* u = s.eigenvector(sd.active_frequencies[k]);
        const double lambda = sd.lambdas[k];
        double* plane = sd.sigma.data() + static_cast<size_t>(k) * n * n;
        for (int i = 0; i < n; ++i) {
            for (int j = i + 1; j < n; ++j) {
                const double d = u[i] - u[j];
                double val = d * d / lambda;
                if (!g.has_edge(i, j)) val /= static_cast<double>(sd.diameter);
                plane[static_cast<size_t>(i) * n + j] = val;
                plane[static_cast<size_t>(j) * n + i] = val;
            }
        }
    }
    return sd;
}

SpectrumReport verify_spectrum(const Graph& g, const Spectrum& s) {
    const int n = g.num_nodes;
    SpectrumReport rep;
    const SymmetricMatrix L = laplacian(g);
    rep.laplacian_frobenius = L.frobenius_norm();

    rep.pairs.resize(n);
    for (int k = 0; k < n; ++k) {
        const double* u = s.eigenvector(k);
        const double lambda = s.eigenvalues[k];

        double edge_sum = 0.0;
        for (auto [a, b] : g.edges) {
            const double d = u[a] - u[b];
            edge_sum += d * d;
        }

        double res2 = 0.0;
        for (int i = 0; i < n; ++i) {
            double lu = 0.0;
            for (int j = 0; j < n; ++j) lu += L.at(i, j) * u[j];
            const double ri = lu - lambda * u[i];
            res2 += ri * ri;
        }

        rep.pairs[k].eigenvalue = lambda;
        rep.pairs[k].identity_error = std::abs(lambda - edge_sum);
        rep.pairs[k].residual = std::sqrt(res2);
        rep.max_identity_error = std::max(rep.max_identity_error, rep.pairs[k].identity_error);
        rep.max_residual = std::max(rep.max_residual, rep.pairs[k].residual);
    }

    for (int k = 0; k < n; ++k) {
        const double* uk = s.eigenvector(k);
        for (int m2 = k; m2 < n; ++m2) {
            const double* um = s.eigenvector(m2);
            double dot = 0.0;
            for (int i = 0; i < n; ++i) dot += uk[i] * um[i];
            const double target = (k == m2) ? 1.0 : 0.0;
            rep.max_orthonormality_error =
                std::max(rep.max_orthonormality_error, std::abs(dot - target));
        }
    }

    rep.pass = rep.max_identity_error <= 1e-8 &&
               rep.max_residual <= 1e-8 * std::max(rep.laplacian_frobenius, 1.0) &&
               rep.max_orthonormality_error <= 1e-8;
    return rep;
}

} // namespace eigenformer
