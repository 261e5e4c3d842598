#pragma once

#include <Eigen/Dense>
#include <utility>
#include <vector>

#include "csnn/block_operator.hpp"
#include "csnn/graph.hpp"
#include "csnn/rng.hpp"
#include "csnn/sheaf.hpp"

namespace testutil {

/// Erdos-Renyi doubled graph; isolated nodes allowed.
inline csnn::DirectedGraph random_graph(int num_nodes, double edge_prob,
                                        csnn::Rng& rng) {
    std::vector<std::pair<int, int>> edges;
    for (int i = 0; i < num_nodes; ++i)
        for (int j = i + 1; j < num_nodes; ++j)
            if (rng.uniform() < edge_prob) edges.emplace_back(i, j);
    return csnn::DirectedGraph::from_undirected_edges(edges, num_nodes);
}

inline csnn::DirectedSheaf random_sheaf(int num_nodes, int d, csnn::Rng& rng,
                                        double freeze_prob = 0.0) {
    csnn::DirectedSheaf sheaf;
    sheaf.dimension = d;
    sheaf.maps.resize(num_nodes);
    auto draw = [&] {
        Eigen::MatrixXd refl(d, d);
        for (int i = 0; i < d; ++i)
            for (int j = 0; j < d; ++j) refl(i, j) = rng.normal();
        csnn::ConformalMap m{csnn::softplus(rng.normal()),
                             csnn::householder_orthogonal(refl)};
        if (rng.uniform() < freeze_prob) m.scale = 0.0;
        return m;
    };
    for (auto& pair : sheaf.maps) {
        pair.source = draw();
        pair.target = draw();
    }
    return sheaf;
}

/// Dense out-degree Laplacian assembled arc by arc, independently of
/// BlockOperator: arc (u,v) adds S_u^T S_u at (u,u) and -T_v^T S_u at (v,u).
inline Eigen::MatrixXd dense_out_oracle(const csnn::DirectedSheaf& sheaf,
                                        const csnn::DirectedGraph& g) {
    const int d = sheaf.dimension;
    Eigen::MatrixXd m = Eigen::MatrixXd::Zero(g.num_nodes * d, g.num_nodes * d);
    for (const auto& [u, v] : g.arcs) {
        const Eigen::MatrixXd su = sheaf.maps[u].source.matrix();
        const Eigen::MatrixXd tv = sheaf.maps[v].target.matrix();
        m.block(u * d, u * d, d, d) += su.transpose() * su;
        m.block(v * d, u * d, d, d) -= tv.transpose() * su;
    }
    return m;
}

/// Dense in-degree Laplacian, arc (u,v) adds T_v^T T_v at (v,v) and
/// -S_u^T T_v at (u,v); the transpose is the oracle for build_in_transpose.
inline Eigen::MatrixXd dense_in_transpose_oracle(const csnn::DirectedSheaf& sheaf,
                                                 const csnn::DirectedGraph& g) {
    const int d = sheaf.dimension;
    Eigen::MatrixXd m = Eigen::MatrixXd::Zero(g.num_nodes * d, g.num_nodes * d);
    for (const auto& [u, v] : g.arcs) {
        const Eigen::MatrixXd su = sheaf.maps[u].source.matrix();
        const Eigen::MatrixXd tv = sheaf.maps[v].target.matrix();
        m.block(v * d, v * d, d, d) += tv.transpose() * tv;
        m.block(u * d, v * d, d, d) -= su.transpose() * tv;
    }
    return m.transpose();
}

inline double max_abs(const Eigen::MatrixXd& m) {
    return m.size() == 0 ? 0.0 : m.cwiseAbs().maxCoeff();
}

}  // namespace testutil
