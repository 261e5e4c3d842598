#pragma once

#include <Eigen/Dense>
#include <vector>

namespace csnn {

/// A conformal map C*Q: a nonnegative scale times an orthogonal matrix.
/// Satisfies M^T M = C^2 I, which is what makes the Laplacian block
/// diagonals scalar multiples of the identity.
struct ConformalMap {
    double scale = 1.0;
    Eigen::MatrixXd orthogonal;  // d x d

    int dim() const { return static_cast<int>(orthogonal.rows()); }
    Eigen::MatrixXd matrix() const { return scale * orthogonal; }

    static ConformalMap identity(int d) {
        return {1.0, Eigen::MatrixXd::Identity(d, d)};
    }
    static ConformalMap zero(int d) {
        return {0.0, Eigen::MatrixXd::Identity(d, d)};
    }
};

/// Node i's source map S_i (used on every arc leaving i) and target map T_i
/// (used on every arc entering i).
struct ConformalMapPair {
    ConformalMap source;
    ConformalMap target;
};

/// A cellular sheaf over a doubled directed graph with all stalks R^d,
/// flat over incident arcs: one (S_i, T_i) pair per node.
struct DirectedSheaf {
    int dimension = 0;
    std::vector<ConformalMapPair> maps;

    int num_nodes() const { return static_cast<int>(maps.size()); }

    static DirectedSheaf trivial(int num_nodes) {
        DirectedSheaf s;
        s.dimension = 1;
        s.maps.assign(num_nodes, {ConformalMap::identity(1), ConformalMap::identity(1)});
        return s;
    }
    static DirectedSheaf constant(int num_nodes, int d) {
        DirectedSheaf s;
        s.dimension = d;
        s.maps.assign(num_nodes, {ConformalMap::identity(d), ConformalMap::identity(d)});
        return s;
    }
};

enum class Role { Standard, Listen, Broadcast, Isolate };

/// Reflection vectors with norm below this degrade to identity factors.
inline constexpr double kHouseholderDegenerateNorm = 1e-8;

double softplus(double x);

/// Product of Householder reflections I - 2 v v^T / ||v||^2, one per column
/// of `reflections` (d x k). Always orthogonal; near-zero columns contribute
/// identity factors.
Eigen::MatrixXd householder_orthogonal(const Eigen::MatrixXd& reflections);

/// Materializes C*Q with C = softplus(scale_param), or the exact zero map
/// when frozen_zero is set (used by fixtures and proposition harnesses).
ConformalMap conformal_from_params(double scale_param,
                                   const Eigen::MatrixXd& reflections,
                                   bool frozen_zero = false);

Role role_of(const ConformalMapPair& pair, double tol = 1e-3);

const char* role_name(Role r);

}  // namespace csnn
