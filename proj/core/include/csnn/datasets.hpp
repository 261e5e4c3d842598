#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "csnn/graph.hpp"
#include "csnn/sheaf.hpp"

namespace csnn {

enum class MetricKind { Accuracy, RocAuc };

struct SplitMasks {
    std::vector<int> train;
    std::vector<int> val;
    std::vector<int> test;
};

inline constexpr int kUnlabeled = -1;

struct NodeDataset {
    DirectedGraph graph;
    Eigen::MatrixXd features;       // n x s
    std::vector<int> labels;        // kUnlabeled for unlabeled nodes
    std::vector<SplitMasks> splits;
    MetricKind metric = MetricKind::Accuracy;

    int num_nodes() const { return graph.num_nodes; }
    int num_features() const { return static_cast<int>(features.cols()); }
    int num_classes() const;
    void validate() const;  // throws std::invalid_argument
};

/// Root-classification trees for the bottleneck benchmark. Each example is
/// a complete binary tree of depth r; leaves carry one-hot (class, count)
/// attributes, the root carries the count of exactly one leaf and that
/// leaf's class as its label. Trees are batched into one disjoint-union
/// graph; the train mask selects the roots.
NodeDataset gen_neighborsmatch(int depth, int num_examples, std::uint64_t seed);

/// Per-layer frozen sheaves realizing the relay construction: on a doubled
/// path of t+1 nodes, layer l keeps exactly one nonzero source map (at the
/// current carrier) and one nonzero target map (at the next receiver); all
/// other maps are frozen zero. Node t is the far source, node 0 the
/// endpoint.
struct RelaySchedule {
    DirectedGraph graph;
    int stalk_dim = 1;
    std::vector<DirectedSheaf> layers;  // t entries
};

RelaySchedule gen_relay_path(int length, int stalk_dim, std::uint64_t seed);

/// JSON schema: {num_nodes, edges: [[i,j],...], features: [[...],...],
/// labels: [...], splits: [{train,val,test},...], metric}. Edges are
/// undirected and doubled on load.
NodeDataset load_graph_json(const std::string& path);
void save_graph_json(const NodeDataset& data, const std::string& path);

}  // namespace csnn
