#pragma once

#include <cstdint>
#include <span>
#include <utility>
#include <vector>

namespace csnn {

/// Directed graph obtained by doubling an undirected edge set: every
/// undirected edge {i,j} contributes the two arcs (i,j) and (j,i).
/// Immutable after construction.
struct DirectedGraph {
    int num_nodes = 0;
    std::vector<std::pair<int, int>> arcs;      // sorted lexicographically
    std::vector<std::vector<int>> neighbors;    // N(i), sorted

    int degree(int i) const { return static_cast<int>(neighbors[i].size()); }
    // On a doubled graph the two coincide with |N(i)|.
    int in_degree(int i) const { return degree(i); }
    int out_degree(int i) const { return degree(i); }
    int num_arcs() const { return static_cast<int>(arcs.size()); }

    /// Doubles an undirected edge list. Duplicate and reversed duplicate
    /// pairs collapse to one undirected edge. Throws std::invalid_argument
    /// on out-of-range indices or self-loops.
    static DirectedGraph from_undirected_edges(
        std::span<const std::pair<int, int>> edges, int num_nodes);
};

inline constexpr int kUnreachable = -1;

/// Hop distances from source along arcs; kUnreachable for nodes not reached.
std::vector<int> bfs_distances(const DirectedGraph& g, int source);

/// Nodes within `hops` arcs of `center` (including center itself).
std::vector<int> hop_ball(const DirectedGraph& g, int center, int hops);

}  // namespace csnn
