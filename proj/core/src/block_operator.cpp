#include "csnn/block_operator.hpp"

#include <cmath>
#include <stdexcept>

namespace csnn {

BlockOperator BlockOperator::pattern(const DirectedGraph& g, int dim) {
    BlockOperator op;
    op.num_nodes = g.num_nodes;
    op.dim = dim;
    op.diag.assign(g.num_nodes, Eigen::MatrixXd::Zero(dim, dim));
    op.row_ptr.assign(g.num_nodes + 1, 0);
    op.col.reserve(g.arcs.size());
    op.off.reserve(g.arcs.size());
    // arcs are sorted by (source, target), which is exactly CSR order
    for (const auto& [i, j] : g.arcs) {
        op.col.push_back(j);
        op.off.emplace_back(Eigen::MatrixXd::Zero(dim, dim));
        ++op.row_ptr[i + 1];
    }
    for (int i = 0; i < g.num_nodes; ++i) op.row_ptr[i + 1] += op.row_ptr[i];
    return op;
}

Eigen::MatrixXd BlockOperator::apply(const Eigen::MatrixXd& x) const {
    const int d = dim;
    if (x.rows() != static_cast<Eigen::Index>(num_nodes) * d)
        throw std::invalid_argument("block apply: row count mismatch");
    Eigen::MatrixXd y = Eigen::MatrixXd::Zero(x.rows(), x.cols());
    for (int i = 0; i < num_nodes; ++i) {
        auto yi = y.middleRows(i * d, d);
        yi = diag[i] * x.middleRows(i * d, d);
        for (int p = row_ptr[i]; p < row_ptr[i + 1]; ++p)
            yi += off[p] * x.middleRows(col[p] * d, d);
    }
    return y;
}

Eigen::MatrixXd BlockOperator::dense() const {
    const int d = dim;
    Eigen::MatrixXd m = Eigen::MatrixXd::Zero(num_nodes * d, num_nodes * d);
    for (int i = 0; i < num_nodes; ++i) {
        m.block(i * d, i * d, d, d) = diag[i];
        for (int p = row_ptr[i]; p < row_ptr[i + 1]; ++p)
            m.block(i * d, col[p] * d, d, d) = off[p];
    }
    return m;
}

namespace {

void check_sheaf(const DirectedSheaf& sheaf, const DirectedGraph& g) {
    if (sheaf.num_nodes() != g.num_nodes)
        throw std::invalid_argument("sheaf/graph node count mismatch");
    for (const auto& pair : sheaf.maps)
        if (pair.source.dim() != sheaf.dimension || pair.target.dim() != sheaf.dimension)
            throw std::invalid_argument("sheaf map dimension mismatch");
}

// Shared off-diagonal fill: block (i,j) = -T_i^T S_j for both Laplacians.
void fill_offdiag(BlockOperator& op, const DirectedSheaf& sheaf,
                  const DirectedGraph& g) {
    for (int i = 0; i < g.num_nodes; ++i) {
        const Eigen::MatrixXd ti_t = sheaf.maps[i].target.matrix().transpose();
        for (int p = op.row_ptr[i]; p < op.row_ptr[i + 1]; ++p)
            op.off[p] = -ti_t * sheaf.maps[op.col[p]].source.matrix();
    }
}

}  // namespace

BlockOperator build_out(const DirectedSheaf& sheaf, const DirectedGraph& g) {
    check_sheaf(sheaf, g);
    BlockOperator op = BlockOperator::pattern(g, sheaf.dimension);
    const int d = sheaf.dimension;
    for (int i = 0; i < g.num_nodes; ++i) {
        const auto& s = sheaf.maps[i].source;
        // S^T S = C^2 I for a conformal map
        op.diag[i] = g.degree(i) * s.scale * s.scale *
                     (s.orthogonal.transpose() * s.orthogonal);
        (void)d;
    }
    fill_offdiag(op, sheaf, g);
    return op;
}

BlockOperator build_in_transpose(const DirectedSheaf& sheaf, const DirectedGraph& g) {
    check_sheaf(sheaf, g);
    BlockOperator op = BlockOperator::pattern(g, sheaf.dimension);
    for (int i = 0; i < g.num_nodes; ++i) {
        const auto& t = sheaf.maps[i].target;
        op.diag[i] = g.degree(i) * t.scale * t.scale *
                     (t.orthogonal.transpose() * t.orthogonal);
    }
    fill_offdiag(op, sheaf, g);
    return op;
}

BlockOperator normalize(const BlockOperator& op) {
    const int d = op.dim;
    // Per-node scaling factors c_i with D_ii = s_i I and c_i = s_i^{-1/2},
    // c_i = 0 for zero blocks.
    std::vector<double> inv_sqrt(op.num_nodes);
    for (int i = 0; i < op.num_nodes; ++i) {
        const double s = op.diag[i](0, 0);
        const Eigen::MatrixXd residual =
            op.diag[i] - s * Eigen::MatrixXd::Identity(d, d);
        if (residual.cwiseAbs().maxCoeff() > 1e-8 || s < -1e-8)
            throw std::invalid_argument(
                "normalize: diagonal block is not a nonnegative scalar multiple of I");
        inv_sqrt[i] = (s <= 0.0) ? 0.0 : 1.0 / std::sqrt(s);
    }
    BlockOperator out = op;
    for (int i = 0; i < op.num_nodes; ++i) {
        out.diag[i] = (inv_sqrt[i] * inv_sqrt[i]) * op.diag[i];
        for (int p = op.row_ptr[i]; p < op.row_ptr[i + 1]; ++p)
            out.off[p] = (inv_sqrt[i] * inv_sqrt[op.col[p]]) * op.off[p];
    }
    return out;
}

Eigen::MatrixXd compose_apply(const BlockOperator& in_t, const BlockOperator& out,
                              const Eigen::MatrixXd& x) {
    return in_t.apply(out.apply(x));
}

BlockOperator build_undirected_flat(const std::vector<Eigen::MatrixXd>& maps,
                                    const DirectedGraph& g) {
    if (static_cast<int>(maps.size()) != g.num_nodes)
        throw std::invalid_argument("map count mismatch");
    const int d = maps.empty() ? 0 : static_cast<int>(maps[0].rows());
    BlockOperator op = BlockOperator::pattern(g, d);
    for (int i = 0; i < g.num_nodes; ++i) {
        op.diag[i] = g.degree(i) * Eigen::MatrixXd::Identity(d, d);
        for (int p = op.row_ptr[i]; p < op.row_ptr[i + 1]; ++p)
            op.off[p] = -maps[i].transpose() * maps[op.col[p]];
    }
    return op;
}

}  // namespace csnn
