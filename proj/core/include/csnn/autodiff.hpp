#pragma once

#include <Eigen/Dense>
#include <functional>
#include <vector>

#include "csnn/graph.hpp"

namespace csnn::ad {

enum class Cwise { Identity, Relu, Gelu, Tanh, Softplus };

struct Var {
    int id = -1;
    bool valid() const { return id >= 0; }
};

/// Reverse-mode tape over dense matrices. Every operation appends a node
/// holding its value and a closure that scatters the node's adjoint into
/// its parents. Forward evaluation is eager; backward() runs the reverse
/// sweep from a 1x1 output. Summation order is fixed, so repeated runs on
/// identical inputs are bit-identical.
class Tape {
public:
    Var leaf(Eigen::MatrixXd value, bool requires_grad = true);
    Var constant(Eigen::MatrixXd value) { return leaf(std::move(value), false); }

    const Eigen::MatrixXd& value(Var v) const { return nodes_[v.id].value; }
    /// Gradient of the last backward() target w.r.t. v. Zero-sized until
    /// backward has touched it.
    const Eigen::MatrixXd& grad(Var v) const { return nodes_[v.id].grad; }

    /// Reverse sweep from a scalar (1x1) output. Frees interior values and
    /// adjoints as soon as they are consumed; leaf gradients survive.
    void backward(Var output);

    int size() const { return static_cast<int>(nodes_.size()); }

    // -- primitives -------------------------------------------------------

    Var matmul(Var a, Var b);
    Var add(Var a, Var b);
    Var sub(Var a, Var b);
    Var scale(Var a, double c);
    /// Y = A + 1 * bias, bias is 1 x cols broadcast over rows.
    Var add_bias(Var a, Var bias);
    Var cwise(Var a, Cwise fn);
    Var hadamard(Var a, Var b);
    Var cwise_div(Var a, Var b);
    /// Elementwise product with a constant matrix (dropout masks etc.).
    Var const_mul(Var a, const Eigen::MatrixXd& m);

    /// Row-wise layer normalization (zero mean, unit variance, no affine).
    Var layer_norm(Var a, double eps = 1e-5);

    /// Y_i = s_i * X_i per node block; s is (rows/d) x 1, X is rows x h.
    Var block_scale(Var s, Var x, int d);
    /// Same with a constant per-node factor.
    Var const_block_scale(Var x, const Eigen::VectorXd& s, int d);

    /// Y_i = Q_i X_i (or Q_i^T X_i) with Q stacked (n*d) x d, X (n*d) x h.
    Var per_node_map(Var q, Var x, int d, bool transpose_q);

    /// Y_i = sum_{j in N(i)} X_j over node blocks of height d.
    Var neighbor_sum(const DirectedGraph& g, Var x, int d);

    /// Y_i = W X_i with one shared d x d W (the I (x) W_1 factor).
    Var kron_left(Var w, Var x, int n, int d);

    /// (n*d) x h -> n x (d*h), node block flattened row-major.
    Var blocks_to_rows(Var x, int n, int d, int h);
    /// Inverse reshape: n x (d*h) -> (n*d) x h.
    Var rows_to_blocks(Var x, int n, int d, int h);

    /// Orthogonal stack from Householder reflection parameters. V is
    /// n x (k*d), row i holding k reflection vectors of length d; output is
    /// (n*d) x d, one orthogonal matrix per node. Near-zero reflection
    /// vectors contribute identity factors with zero gradient.
    Var householder_stack(Var v, int n, int d, int k);

    /// Mean negative log-softmax over the masked rows; returns 1x1.
    Var cross_entropy(Var logits, const std::vector<int>& labels,
                      const std::vector<int>& mask_rows);

    Var sum_all(Var a);

private:
    struct Node {
        Eigen::MatrixXd value;
        Eigen::MatrixXd grad;
        bool requires_grad = true;
        std::function<void(Tape&)> back;  // null for leaves
    };

    Var push(Eigen::MatrixXd value, std::function<void(Tape&)> back);
    void accum(int id, const Eigen::MatrixXd& g);
    Eigen::MatrixXd& grad_ref(int id) { return nodes_[id].grad; }

    std::vector<Node> nodes_;
};

Eigen::MatrixXd cwise_forward(const Eigen::MatrixXd& x, Cwise fn);
Eigen::MatrixXd cwise_backward(const Eigen::MatrixXd& x, const Eigen::MatrixXd& g,
                               Cwise fn);

}  // namespace csnn::ad
