#pragma once

#include <Eigen/Dense>
#include <vector>

#include "csnn/graph.hpp"
#include "csnn/sheaf.hpp"

namespace csnn {

/// Block-sparse square operator on (n*d)-dimensional 0-cochains: one dense
/// d x d diagonal block per node plus one d x d block per arc, laid out in
/// block-CSR order (row-major over sorted arcs).
struct BlockOperator {
    int num_nodes = 0;
    int dim = 0;
    std::vector<Eigen::MatrixXd> diag;     // per node, d x d
    std::vector<int> row_ptr;              // size num_nodes + 1
    std::vector<int> col;                  // per off-diagonal block
    std::vector<Eigen::MatrixXd> off;      // per off-diagonal block, d x d

    /// Block-sparse product with a (n*d) x h matrix. Fixed summation order
    /// (CSR order), so results are bit-reproducible.
    Eigen::MatrixXd apply(const Eigen::MatrixXd& x) const;

    /// Dense (n*d) x (n*d) materialization, for small n and oracles.
    Eigen::MatrixXd dense() const;

    /// Empty sparsity pattern from a graph (all blocks zero-initialized).
    static BlockOperator pattern(const DirectedGraph& g, int dim);
};

/// Out-degree sheaf Laplacian of a conformal directed sheaf: diagonal block
/// |N(i)| S_i^T S_i, off-diagonal block (i,j) = -T_i^T S_j.
BlockOperator build_out(const DirectedSheaf& sheaf, const DirectedGraph& g);

/// Transposed in-degree sheaf Laplacian: diagonal block |N(i)| T_i^T T_i,
/// off-diagonal blocks identical to build_out.
BlockOperator build_in_transpose(const DirectedSheaf& sheaf, const DirectedGraph& g);

/// D^{-1/2} L D^{-1/2} with D the block diagonal of `op`. Requires every
/// diagonal block to be a scalar multiple of the identity (conformality);
/// zero blocks normalize to zero (pseudo-inverse convention 0^{-1/2} := 0).
/// Throws std::invalid_argument on a non-conformal diagonal block.
BlockOperator normalize(const BlockOperator& op);

/// in_t * (out * x) without materializing the product operator.
Eigen::MatrixXd compose_apply(const BlockOperator& in_t, const BlockOperator& out,
                              const Eigen::MatrixXd& x);

/// Undirected flat-bundle Laplacian: diagonal |N(i)| I, off-diagonal
/// -O_i^T O_j. Contrast fixture showing that a single per-node map cannot
/// separate listening from broadcasting.
BlockOperator build_undirected_flat(const std::vector<Eigen::MatrixXd>& maps,
                                    const DirectedGraph& g);

}  // namespace csnn
