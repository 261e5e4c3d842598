#pragma once

#include <Eigen/Dense>
#include <set>
#include <vector>

#include <json.hpp>

#include "csnn/block_operator.hpp"
#include "csnn/datasets.hpp"
#include "csnn/graph.hpp"
#include "csnn/model.hpp"
#include "csnn/rng.hpp"
#include "csnn/sheaf.hpp"

namespace csnn {

inline constexpr double kStructuralZeroTol = 1e-12;

struct Prop1Report {
    bool listen_gated = false;           // T_i = 0 and composed output at i vanishes
    std::vector<int> ignored_neighbors;  // neighbors k with S_k = 0 whose features
                                         // provably do not reach i
    double max_residual = 0.0;
};

/// Checks the listen-gating statement at node i: with T_i = 0 the composed
/// (L_in)^T L_out output at i is zero, and perturbing x_k for any
/// non-broadcasting neighbor k (S_k = 0) leaves the output at i unchanged
/// (20 random perturbations per neighbor).
Prop1Report check_prop1(const DirectedGraph& g, const DirectedSheaf& sheaf,
                        const Eigen::MatrixXd& x, int node, Rng& rng);

/// Nodes j whose input features influence logits at `node`, measured by
/// feature perturbation. Structural zeros are exact, so any threshold
/// above round-off separates them.
std::set<int> receptive_field(const Model& model, const ParameterStore& store,
                              const DirectedGraph& g, const Eigen::MatrixXd& raw,
                              int node, double threshold, Rng& rng);

struct RelayReport {
    bool target_sensitive = false;
    bool intermediates_ignored = false;
    double constant = 0.0;          // signed for d = 1, magnitude otherwise
    double max_intermediate = 0.0;  // largest |J| over intermediate nodes
    double oracle_error = 0.0;      // measured vs dense composition chain
};

/// Runs the t-layer relay schedule (identity activation, no weights,
/// epsilon = -1 at the receiving node each layer, unnormalized Laplacian
/// composition) and measures the endpoint Jacobian against the far node,
/// every intermediate node, and the dense composition oracle.
RelayReport check_relay(int length, int stalk_dim, std::uint64_t seed);

/// Aggregate pass/fail report over the proposition harnesses; the CLI
/// serializes this for `verify props`.
nlohmann::json verify_props_report(std::uint64_t seed);

}  // namespace csnn
