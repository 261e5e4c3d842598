#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "csnn/verify.hpp"
#include "helpers.hpp"

using namespace csnn;

TEST_CASE("listen gating on a star graph") {
    // center 0 with three leaves; T_0 = 0 silences the center completely
    std::vector<std::pair<int, int>> edges{{0, 1}, {0, 2}, {0, 3}};
    const auto g = DirectedGraph::from_undirected_edges(edges, 4);
    Rng rng(1);
    auto sheaf = testutil::random_sheaf(4, 2, rng);
    sheaf.maps[0].target.scale = 0.0;
    sheaf.maps[2].source.scale = 0.0;  // leaf 2 stops broadcasting too
    const Eigen::MatrixXd x = gaussian_matrix(8, 3, 1.0, rng);
    const Prop1Report rep = check_prop1(g, sheaf, x, 0, rng);
    CHECK(rep.listen_gated);
    CHECK(rep.max_residual < kStructuralZeroTol);
    CHECK(rep.ignored_neighbors == std::vector<int>{2});
}

TEST_CASE("standard nodes are not gated") {
    std::vector<std::pair<int, int>> edges{{0, 1}, {1, 2}};
    const auto g = DirectedGraph::from_undirected_edges(edges, 3);
    Rng rng(2);
    const auto sheaf = testutil::random_sheaf(3, 2, rng);
    const Eigen::MatrixXd x = gaussian_matrix(6, 2, 1.0, rng);
    const Prop1Report rep = check_prop1(g, sheaf, x, 1, rng);
    CHECK_FALSE(rep.listen_gated);
    CHECK(rep.ignored_neighbors.empty());
}

TEST_CASE("receptive field stays inside the 2t-hop ball on a path") {
    std::vector<std::pair<int, int>> edges;
    for (int i = 0; i < 7; ++i) edges.emplace_back(i, i + 1);
    const auto g = DirectedGraph::from_undirected_edges(edges, 8);
    Rng rng(3);
    Model model;
    model.cfg.stalk_dim = 2;
    model.cfg.hidden_channels = 3;
    model.cfg.num_layers = 1;  // t = 1 -> 2-hop field
    model.cfg.input_dim = 4;
    model.cfg.num_classes = 2;
    ParameterStore store;
    model.init_params(store, g.num_nodes, 5);
    const Eigen::MatrixXd raw = gaussian_matrix(g.num_nodes, 4, 1.0, rng);
    const auto field =
        receptive_field(model, store, g, raw, 0, kStructuralZeroTol, rng);
    CHECK(field.count(0) == 1);
    for (int j : field) CHECK(j <= 2);
    // generic random parameters reach the full 2-hop ball
    CHECK(field.count(2) == 1);
}

TEST_CASE("relay coefficients match the degree products") {
    // unit conformal scales make the per-hop factor -(deg_recv + deg_carrier):
    // [DERIVED] t=2: (-3)(-3) -> |J| = 9; t=3: (-3)(-4)(-3) -> 36
    const RelayReport r2 = check_relay(2, 1, 11);
    CHECK(r2.target_sensitive);
    CHECK(r2.intermediates_ignored);
    CHECK(std::abs(std::abs(r2.constant) - 9.0) < 1e-9);
    CHECK(r2.oracle_error < 1e-10);

    const RelayReport r3 = check_relay(3, 2, 12);
    CHECK(r3.target_sensitive);
    CHECK(r3.intermediates_ignored);
    CHECK(r3.max_intermediate < kStructuralZeroTol);
    CHECK(std::abs(r3.constant - 36.0) < 1e-8);  // magnitude for d = 2
    CHECK(r3.oracle_error < 1e-10);
}

TEST_CASE("aggregate report passes and is well formed") {
    const auto report = verify_props_report(1);
    CHECK(report.at("all_passed").get<bool>());
    CHECK(report.at("prop1").at("cases").get<int>() == 100);
    CHECK(report.at("prop1").at("failures").get<int>() == 0);
    CHECK(report.at("prop2").at("violations").get<int>() == 0);
    CHECK(report.at("prop2").at("two_hop_sensitive").get<bool>());
    CHECK(report.at("relay").size() == 8);
    for (const auto& r : report.at("relay")) CHECK(r.at("passed").get<bool>());
}
