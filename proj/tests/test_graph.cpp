#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <numeric>

#include "eigenformer/graph.hpp"

using namespace eigenformer;

namespace {

Graph path3() { return build_graph(3, {{0, 1}, {1, 2}}); }

} // namespace

TEST_CASE("build_graph canonicalizes and validates") {
    Graph g = build_graph(2, {{1, 0}});
    CHECK(g.num_edges() == 1);
    CHECK(g.edges[0] == std::make_pair(0, 1));

    CHECK_THROWS_WITH_AS(build_graph(3, {{0, 1}, {1, 1}}), doctest::Contains("self-loop"),
                         GraphError);
    CHECK_THROWS_WITH_AS(build_graph(3, {{0, 1}, {1, 0}}), doctest::Contains("duplicate"),
                         GraphError);
    CHECK_THROWS_WITH_AS(build_graph(3, {{0, 3}}), doctest::Contains("out of range"), GraphError);

    try {
        build_graph(3, {{0, 1}, {1, 1}});
        FAIL("expected throw");
    } catch (const GraphError& e) {
        CHECK(e.code() == GraphError::Code::SelfLoop);
    }
}

TEST_CASE("build_graph checks feature lengths") {
    Features f = Features::from_dense(2, 1, {1.0, 2.0});
    CHECK_THROWS_AS(build_graph(3, {{0, 1}}, f), GraphError);
    CHECK_NOTHROW(build_graph(2, {{0, 1}}, f));

    Features ef = Features::from_codes({7});
    CHECK_NOTHROW(build_graph(2, {{0, 1}}, Features::none(), ef));
    CHECK_THROWS_AS(build_graph(3, {{0, 1}, {1, 2}}, Features::none(), ef), GraphError);
}

TEST_CASE("edge features follow canonical edge order") {
    // Caller order (2,1),(0,1); canonical order is (0,1),(1,2).
    Features ef = Features::from_dense(2, 1, {21.0, 1.0});
    Graph g = build_graph(3, {{2, 1}, {0, 1}}, Features::none(), ef);
    CHECK(g.edges[0] == std::make_pair(0, 1));
    CHECK(g.edge_features.dense[0] == 1.0);
    CHECK(g.edge_features.dense[1] == 21.0);
}

TEST_CASE("degree_vector") {
    CHECK(degree_vector(path3()).degrees == std::vector<int>{1, 2, 1});
    CHECK(degree_vector(build_graph(1, {})).degrees == std::vector<int>{0});
    Graph k4 = build_graph(4, {{0, 1}, {0, 2}, {0, 3}, {1, 2}, {1, 3}, {2, 3}});
    CHECK(degree_vector(k4).degrees == std::vector<int>{3, 3, 3, 3});

    auto deg = degree_vector(k4).degrees;
    CHECK(std::accumulate(deg.begin(), deg.end(), 0) == 2 * k4.num_edges());
}

TEST_CASE("connected_components") {
    CHECK(connected_components(path3()) == std::vector<int>{0, 0, 0});
    CHECK(connected_components(build_graph(4, {{0, 1}})) == std::vector<int>{0, 0, 1, 2});
    CHECK(connected_components(build_graph(0, {})).empty());
}

TEST_CASE("diameter") {
    CHECK(diameter(path3()) == 2);
    Graph k4 = build_graph(4, {{0, 1}, {0, 2}, {0, 3}, {1, 2}, {1, 3}, {2, 3}});
    CHECK(diameter(k4) == 1);
    CHECK(diameter(build_graph(1, {})) == 0);
    CHECK_THROWS_AS(diameter(build_graph(4, {{0, 1}})), GraphError);
    // Path graphs meet the n-1 bound with equality.
    Graph p6 = build_graph(6, {{0, 1}, {1, 2}, {2, 3}, {3, 4}, {4, 5}});
    CHECK(diameter(p6) == 5);
}

TEST_CASE("permute relabels consistently") {
    Graph g = path3();
    NodePermutation rev{{2, 1, 0}};
    Graph pg = permute(g, rev);
    auto dg = degree_vector(g).degrees;
    auto dpg = degree_vector(pg).degrees;
    for (int i = 0; i < 3; ++i) CHECK(dpg[rev.mapping[i]] == dg[i]);

    CHECK(permute(g, NodePermutation::identity(3)) == g);

    Graph k4 = build_graph(4, {{0, 1}, {0, 2}, {0, 3}, {1, 2}, {1, 3}, {2, 3}});
    CHECK(permute(k4, NodePermutation::random(4, 99)).edges == k4.edges);

    CHECK_THROWS_AS(permute(g, NodePermutation::identity(4)), GraphError);
}

TEST_CASE("permute round-trips through the inverse") {
    std::vector<std::pair<int, int>> edges = {{0, 1}, {1, 2}, {2, 3}, {0, 3}, {1, 3}};
    Features nf = Features::from_dense(4, 2, {0, 1, 2, 3, 4, 5, 6, 7});
    Graph g = build_graph(4, edges, nf, Features::none(), Target::classes({0, 1, 0, 1}));
    for (uint64_t seed = 0; seed < 8; ++seed) {
        NodePermutation p = NodePermutation::random(4, seed);
        CHECK(permute(permute(g, p), p.inverse()) == g);
    }
}

TEST_CASE("permute carries node features and class targets") {
    Features nf = Features::from_codes({5, 6, 7});
    Graph g = build_graph(3, {{0, 1}, {1, 2}}, nf, Features::none(),
                          Target::classes({0, 1, 0}));
    NodePermutation p{{1, 2, 0}};
    Graph pg = permute(g, p);
    CHECK(pg.node_features.codes == std::vector<int>{7, 5, 6});
    CHECK(pg.target.node_classes == std::vector<int>{0, 0, 1});
}
