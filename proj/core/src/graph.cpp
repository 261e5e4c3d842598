#include "csnn/graph.hpp"

#include <algorithm>
#include <queue>
#include <set>
#include <stdexcept>
#include <string>

namespace csnn {

DirectedGraph DirectedGraph::from_undirected_edges(
    std::span<const std::pair<int, int>> edges, int num_nodes) {
    if (num_nodes < 0) throw std::invalid_argument("negative node count");
    std::set<std::pair<int, int>> undirected;
    for (const auto& [a, b] : edges) {
        if (a < 0 || b < 0 || a >= num_nodes || b >= num_nodes)
            throw std::invalid_argument("edge (" + std::to_string(a) + "," +
                                        std::to_string(b) + ") out of range for " +
                                        std::to_string(num_nodes) + " nodes");
        if (a == b)
            throw std::invalid_argument("self-loop at node " + std::to_string(a));
        undirected.insert({std::min(a, b), std::max(a, b)});
    }
    DirectedGraph g;
    g.num_nodes = num_nodes;
    g.neighbors.resize(num_nodes);
    for (const auto& [a, b] : undirected) {
        g.arcs.emplace_back(a, b);
        g.arcs.emplace_back(b, a);
        g.neighbors[a].push_back(b);
        g.neighbors[b].push_back(a);
    }
    std::sort(g.arcs.begin(), g.arcs.end());
    for (auto& ns : g.neighbors) std::sort(ns.begin(), ns.end());
    return g;
}

std::vector<int> bfs_distances(const DirectedGraph& g, int source) {
    if (source < 0 || source >= g.num_nodes)
        throw std::invalid_argument("bfs source out of range");
    std::vector<int> dist(g.num_nodes, kUnreachable);
    std::queue<int> frontier;
    dist[source] = 0;
    frontier.push(source);
    while (!frontier.empty()) {
        int u = frontier.front();
        frontier.pop();
        for (int v : g.neighbors[u]) {
            if (dist[v] == kUnreachable) {
                dist[v] = dist[u] + 1;
                frontier.push(v);
            }
        }
    }
    return dist;
}

std::vector<int> hop_ball(const DirectedGraph& g, int center, int hops) {
    auto dist = bfs_distances(g, center);
    std::vector<int> ball;
    for (int i = 0; i < g.num_nodes; ++i)
        if (dist[i] != kUnreachable && dist[i] <= hops) ball.push_back(i);
    return ball;
}

}  // namespace csnn
