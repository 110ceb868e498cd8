#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "eigenformer/graph.hpp"
#include "eigenformer/spectral.hpp"

using namespace eigenformer;

namespace {

Graph edge_graph() { return build_graph(2, {{0, 1}}); }
Graph path3() { return build_graph(3, {{0, 1}, {1, 2}}); }

/// Independent oracle: closed-form eigenvalues of a symmetric 2x2 [[a,b],[b,c]].
std::pair<double, double> eig2x2(double a, double b, double c) {
    const double tr = a + c;
    const double disc = std::sqrt((a - c) * (a - c) + 4.0 * b * b);
    return {(tr - disc) / 2.0, (tr + disc) / 2.0};
}

/// Independent oracle: characteristic polynomial of the path-3 Laplacian.
double path3_charpoly(double l) {
    // det([[1-l,-1,0],[-1,2-l,-1],[0,-1,1-l]])
    return (1 - l) * ((2 - l) * (1 - l) - 1.0) - (-1.0) * (-(1 - l));
}

Graph random_connected(int n, double p, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> dist(0.0, 1.0);
    for (;;) {
        std::vector<std::pair<int, int>> edges;
        for (int i = 0; i < n; ++i)
            for (int j = i + 1; j < n; ++j)
                if (dist(rng) < p) edges.emplace_back(i, j);
        Graph g = build_graph(n, std::move(edges));
        if (is_connected(g)) return g;
    }
}

} // namespace

TEST_CASE("laplacian entries and row sums") {
    SymmetricMatrix L = laplacian(edge_graph());
    CHECK(L.at(0, 0) == 1.0);
    CHECK(L.at(0, 1) == -1.0);
    CHECK(L.at(1, 0) == -1.0);
    CHECK(L.at(1, 1) == 1.0);

    SymmetricMatrix L3 = laplacian(path3());
    const double expect[3][3] = {{1, -1, 0}, {-1, 2, -1}, {0, -1, 1}};
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) CHECK(L3.at(i, j) == expect[i][j]);

    CHECK(laplacian(build_graph(1, {})).at(0, 0) == 0.0);

    std::mt19937_64 rng(3);
    for (int t = 0; t < 10; ++t) {
        Graph g = random_connected(9, 0.4, rng);
        SymmetricMatrix L9 = laplacian(g);
        for (int i = 0; i < 9; ++i) {
            double row = 0.0;
            for (int j = 0; j < 9; ++j) row += L9.at(i, j);
            CHECK(row == 0.0); // exact: integers
        }
    }
}

TEST_CASE("eigendecompose matches the 2x2 closed form") {
    Spectrum s = eigendecompose(laplacian(edge_graph()));
    auto [lo, hi] = eig2x2(1, -1, 1);
    CHECK(lo == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(hi == doctest::Approx(2.0).epsilon(1e-12));
    CHECK(s.eigenvalues[0] == doctest::Approx(lo).epsilon(1e-12));
    CHECK(s.eigenvalues[1] == doctest::Approx(hi).epsilon(1e-12));

    // Eigenvectors (1,1)/sqrt2 and (1,-1)/sqrt2 up to sign.
    const double r = 1.0 / std::sqrt(2.0);
    const double* u0 = s.eigenvector(0);
    const double* u1 = s.eigenvector(1);
    CHECK(std::abs(u0[0] * u0[1]) == doctest::Approx(r * r).epsilon(1e-10)); // same sign
    CHECK(u1[0] * u1[1] == doctest::Approx(-r * r).epsilon(1e-10));          // opposite sign
    CHECK(s.residual_bound <= 1e-12);
}

TEST_CASE("eigendecompose path-3 eigenvalues (0,1,3)") {
    // Oracle first: 0, 1, 3 are the roots of the characteristic polynomial.
    CHECK(path3_charpoly(0.0) == doctest::Approx(0.0).epsilon(1e-14));
    CHECK(path3_charpoly(1.0) == doctest::Approx(0.0).epsilon(1e-14));
    CHECK(path3_charpoly(3.0) == doctest::Approx(0.0).epsilon(1e-14));

    Spectrum s = eigendecompose(laplacian(path3()));
    CHECK(s.eigenvalues[0] == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(s.eigenvalues[1] == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(s.eigenvalues[2] == doctest::Approx(3.0).epsilon(1e-12));
}

TEST_CASE("eigendecompose zero matrix") {
    SymmetricMatrix z(3);
    Spectrum s = eigendecompose(z);
    for (double l : s.eigenvalues) CHECK(l == 0.0);
    // Any orthonormal basis is fine; the identity qualifies.
    for (int k = 0; k < 3; ++k) {
        double norm = 0.0;
        for (int i = 0; i < 3; ++i) norm += s.eigenvector(k)[i] * s.eigenvector(k)[i];
        CHECK(norm == doctest::Approx(1.0).epsilon(1e-14));
    }
}

TEST_CASE("eigendecompose orthonormality on random graphs") {
    std::mt19937_64 rng(7);
    for (int t = 0; t < 20; ++t) {
        Graph g = random_connected(12, 0.35, rng);
        Spectrum s = eigendecompose(laplacian(g));
        CHECK(s.eigenvalues[0] <= 1e-10);
        CHECK(s.eigenvalues[0] >= -1e-10);
        for (int a = 0; a < 12; ++a)
            for (int b = a; b < 12; ++b) {
                double dot = 0.0;
                for (int i = 0; i < 12; ++i) dot += s.eigenvector(a)[i] * s.eigenvector(b)[i];
                CHECK(std::abs(dot - (a == b ? 1.0 : 0.0)) < 1e-10);
            }
        for (int k = 1; k < 12; ++k) CHECK(s.eigenvalues[k] >= s.eigenvalues[k - 1]);
    }
}

TEST_CASE("sigma closed forms: path-2") {
    Graph g = edge_graph();
    SpectralDistances sd = sigma_tensor(g, eigendecompose(laplacian(g)));
    REQUIRE(sd.num_active() == 1);
    CHECK(sd.lambdas[0] == doctest::Approx(2.0).epsilon(1e-12));
    // ((1/sqrt2) - (-1/sqrt2))^2 / 2 = 1, an edge pair.
    CHECK(sd.at(0, 0, 1) == doctest::Approx(1.0).epsilon(1e-10));
    CHECK(sd.at(0, 0, 0) == 0.0);
    CHECK(sd.at(0, 1, 1) == 0.0);
}

TEST_CASE("sigma closed forms: path-3") {
    // Oracle: lambda=1 eigenvector (1,0,-1)/sqrt2; lambda=3 eigenvector
    // (1,-2,1)/sqrt6; diameter 2. Expected sigma per pair:
    //   k(l=1): (0,1)->0.5 edge, (1,2)->0.5 edge, (0,2)->2/(2*1)=1 non-edge
    //   k(l=3): (0,1)->1.5/3=0.5, (1,2)->0.5, (0,2)->0
    const double s1 = 0.5, s2 = 1.0, s3 = 0.0;
    {
        const double u[3] = {1.0 / std::sqrt(2.0), 0.0, -1.0 / std::sqrt(2.0)};
        CHECK((u[0] - u[1]) * (u[0] - u[1]) / 1.0 == doctest::Approx(s1).epsilon(1e-12));
        CHECK((u[0] - u[2]) * (u[0] - u[2]) / (2.0 * 1.0) == doctest::Approx(s2).epsilon(1e-12));
    }
    {
        const double u[3] = {1.0 / std::sqrt(6.0), -2.0 / std::sqrt(6.0), 1.0 / std::sqrt(6.0)};
        CHECK((u[0] - u[1]) * (u[0] - u[1]) / 3.0 == doctest::Approx(s1).epsilon(1e-12));
        CHECK((u[0] - u[2]) * (u[0] - u[2]) == doctest::Approx(s3).epsilon(1e-12));
    }

    Graph g = path3();
    SpectralDistances sd = sigma_tensor(g, eigendecompose(laplacian(g)));
    REQUIRE(sd.num_active() == 2);
    CHECK(sd.diameter == 2);
    CHECK(sd.at(0, 0, 1) == doctest::Approx(0.5).epsilon(1e-10));
    CHECK(sd.at(0, 1, 2) == doctest::Approx(0.5).epsilon(1e-10));
    CHECK(sd.at(0, 0, 2) == doctest::Approx(1.0).epsilon(1e-10));
    CHECK(sd.at(1, 0, 1) == doctest::Approx(0.5).epsilon(1e-10));
    CHECK(sd.at(1, 1, 2) == doctest::Approx(0.5).epsilon(1e-10));
    CHECK(sd.at(1, 0, 2) == doctest::Approx(0.0).epsilon(1e-10));
}

TEST_CASE("sigma_tensor rejects disconnected spectra") {
    Graph g = build_graph(4, {{0, 1}, {2, 3}});
    Spectrum s = eigendecompose(laplacian(g));
    CHECK_THROWS_AS(sigma_tensor(g, s), GraphError);
}

TEST_CASE("sigma symmetry, zero diagonal, bound on random graphs") {
    std::mt19937_64 rng(17);
    for (int t = 0; t < 30; ++t) {
        const int n = 4 + static_cast<int>(rng() % 12);
        Graph g = random_connected(n, 0.35, rng);
        SpectralDistances sd = sigma_tensor(g, eigendecompose(laplacian(g)));
        CHECK(sd.num_active() == n - 1);
        for (int k = 0; k < sd.num_active(); ++k)
            for (int i = 0; i < n; ++i) {
                CHECK(sd.at(k, i, i) == 0.0);
                for (int j = 0; j < n; ++j) {
                    CHECK(sd.at(k, i, j) == sd.at(k, j, i));
                    CHECK(sd.at(k, i, j) >= 0.0);
                    CHECK(sd.at(k, i, j) <= 1.0 + 1e-9);
                }
            }
    }
}

TEST_CASE("sigma is bitwise invariant under eigenvector sign flips") {
    std::mt19937_64 rng(23);
    Graph g = random_connected(10, 0.4, rng);
    Spectrum s = eigendecompose(laplacian(g));
    SpectralDistances base = sigma_tensor(g, s);

    Spectrum flipped = s;
    for (int k = 0; k < 10; k += 2)
        for (int i = 0; i < 10; ++i) flipped.vectors[static_cast<size_t>(k) * 10 + i] *= -1.0;
    SpectralDistances after = sigma_tensor(g, flipped);
    CHECK(base.sigma == after.sigma); // bit-for-bit
}

TEST_CASE("verify_spectrum on closed forms and random graphs") {
    {
        Graph g = edge_graph();
        SpectrumReport rep = verify_spectrum(g, eigendecompose(laplacian(g)));
        CHECK(rep.pass);
        // lambda=2 pair: single-edge sum (sqrt2)^2 = 2 exactly.
        CHECK(rep.pairs[1].identity_error <= 1e-12);
        // lambda~0 pair: constant eigenvector makes the edge sum 0.
        CHECK(rep.pairs[0].identity_error <= 1e-10);
    }
    std::mt19937_64 rng(29);
    for (int t = 0; t < 10; ++t) {
        Graph g = random_connected(10, 0.4, rng);
        SpectrumReport rep = verify_spectrum(g, eigendecompose(laplacian(g)));
        CHECK(rep.pass);
        CHECK(rep.max_identity_error < 1e-8);
    }
}

TEST_CASE("sigma permutation consistency on simple spectra") {
    std::mt19937_64 rng(31);
    int done = 0;
    while (done < 8) {
        const int n = 6 + static_cast<int>(rng() % 6);
        Graph g = random_connected(n, 0.45, rng);
        Spectrum s = eigendecompose(laplacian(g));
        double min_gap = 1e9;
        for (int k = 1; k < n; ++k)
            min_gap = std::min(min_gap, s.eigenvalues[k] - s.eigenvalues[k - 1]);
        if (min_gap < 1e-3) continue; // restrict to simple spectra
        ++done;

        SpectralDistances sd = sigma_tensor(g, s);
        NodePermutation p = NodePermutation::random(n, rng());
        Graph pg = permute(g, p);
        SpectralDistances psd = sigma_tensor(pg, eigendecompose(laplacian(pg)));
        for (int k = 0; k < sd.num_active(); ++k)
            for (int i = 0; i < n; ++i)
                for (int j = 0; j < n; ++j)
                    CHECK(psd.at(k, p.mapping[i], p.mapping[j]) ==
                          doctest::Approx(sd.at(k, i, j)).epsilon(1e-8));
    }
}

TEST_CASE("solver error reports the achieved off-norm") {
    SymmetricMatrix m(6);
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> dist(-1.0, 1.0);
    for (int i = 0; i < 6; ++i)
        for (int j = i; j < 6; ++j) m.set(i, j, dist(rng));
    // Zero sweeps allowed: must throw rather than return garbage.
    CHECK_THROWS_AS(eigendecompose(m, 1e-12, 0), SolverError);
    try {
        eigendecompose(m, 1e-12, 0);
    } catch (const SolverError& e) {
        CHECK(e.achieved_off_norm() > 0.0);
    }
}
