#include "csnn/datasets.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <set>
#include <stdexcept>

#include <json.hpp>

#include "csnn/rng.hpp"

namespace csnn {

using nlohmann::json;

int NodeDataset::num_classes() const {
    int c = 0;
    for (int l : labels)
        if (l != kUnlabeled) c = std::max(c, l + 1);
    return c;
}

void NodeDataset::validate() const {
    const int n = graph.num_nodes;
    if (features.rows() != n) throw std::invalid_argument("feature row count != n");
    if (static_cast<int>(labels.size()) != n)
        throw std::invalid_argument("label count != n");
    const int c = num_classes();
    for (int l : labels)
        if (l != kUnlabeled && (l < 0 || l >= c))
            throw std::invalid_argument("label out of range");
    for (const auto& s : splits) {
        std::set<int> seen;
        for (const auto* part : {&s.train, &s.val, &s.test})
            for (int i : *part) {
                if (i < 0 || i >= n) throw std::invalid_argument("mask index out of range");
                if (!seen.insert(i).second)
                    throw std::invalid_argument("masks overlap within a split");
            }
        if (s.train.empty()) throw std::invalid_argument("empty train mask");
    }
}

NodeDataset gen_neighborsmatch(int depth, int num_examples, std::uint64_t seed) {
    if (depth < 1) throw std::invalid_argument("neighborsmatch depth must be >= 1");
    if (num_examples < 1) throw std::invalid_argument("num_examples must be >= 1");
    Rng rng(seed);
    const int m = 1 << depth;              // leaves = classes
    const int per_tree = 2 * m - 1;        // complete binary tree
    const int s = 2 * (m + 1);
    const int n = per_tree * num_examples;

    NodeDataset data;
    data.features = Eigen::MatrixXd::Zero(n, s);
    data.labels.assign(n, kUnlabeled);
    data.metric = MetricKind::Accuracy;
    std::vector<std::pair<int, int>> edges;
    edges.reserve(static_cast<size_t>(num_examples) * (per_tree - 1));
    SplitMasks split;

    std::vector<int> class_of(m), count_of(m);
    for (int e = 0; e < num_examples; ++e) {
        const int base = e * per_tree;
        for (int v = 0; v < per_tree; ++v) {
            if (2 * v + 1 < per_tree) edges.emplace_back(base + v, base + 2 * v + 1);
            if (2 * v + 2 < per_tree) edges.emplace_back(base + v, base + 2 * v + 2);
        }
        std::iota(class_of.begin(), class_of.end(), 0);
        std::iota(count_of.begin(), count_of.end(), 0);
        for (int i = m - 1; i > 0; --i)
            std::swap(class_of[i], class_of[rng.below(i + 1)]);
        for (int i = m - 1; i > 0; --i)
            std::swap(count_of[i], count_of[rng.below(i + 1)]);
        const int target_count = static_cast<int>(rng.below(m));

        // leaves occupy indices m-1 .. 2m-2 in heap order
        int target_class = -1;
        for (int leaf = 0; leaf < m; ++leaf) {
            const int node = base + (m - 1) + leaf;
            data.features(node, class_of[leaf]) = 1.0;
            data.features(node, (m + 1) + count_of[leaf]) = 1.0;
            if (count_of[leaf] == target_count) target_class = class_of[leaf];
        }
        // internal nodes carry the blank markers
        for (int v = 0; v < m - 1; ++v) {
            data.features(base + v, m) = 1.0;
            data.features(base + v, (m + 1) + m) = 1.0;
        }
        // root: blank class, the target count
        data.features(base, (m + 1) + m) = 0.0;
        data.features(base, (m + 1) + target_count) = 1.0;
        data.labels[base] = target_class;
        split.train.push_back(base);
    }
    data.graph = DirectedGraph::from_undirected_edges(edges, n);
    data.splits.push_back(std::move(split));
    data.validate();
    return data;
}

namespace {

ConformalMap random_unit_conformal(int d, Rng& rng) {
    Eigen::MatrixXd refl(d, d);
    for (int i = 0; i < d; ++i)
        for (int j = 0; j < d; ++j) refl(i, j) = rng.normal();
    return {1.0, householder_orthogonal(refl)};
}

}  // namespace

RelaySchedule gen_relay_path(int length, int stalk_dim, std::uint64_t seed) {
    if (length < 1) throw std::invalid_argument("relay length must be >= 1");
    if (stalk_dim < 1) throw std::invalid_argument("stalk_dim must be >= 1");
    Rng rng(seed);
    RelaySchedule sched;
    sched.stalk_dim = stalk_dim;
    std::vector<std::pair<int, int>> edges;
    for (int i = 0; i < length; ++i) edges.emplace_back(i, i + 1);
    sched.graph = DirectedGraph::from_undirected_edges(edges, length + 1);

    for (int l = 1; l <= length; ++l) {
        DirectedSheaf sheaf;
        sheaf.dimension = stalk_dim;
        sheaf.maps.assign(length + 1, {ConformalMap::zero(stalk_dim),
                                       ConformalMap::zero(stalk_dim)});
        const int receiver = length - l;   // gets the message this layer
        const int carrier = length - l + 1;
        sheaf.maps[carrier].source = random_unit_conformal(stalk_dim, rng);
        sheaf.maps[receiver].target = random_unit_conformal(stalk_dim, rng);
        sched.layers.push_back(std::move(sheaf));
    }
    return sched;
}

namespace {

MetricKind parse_metric(const std::string& s) {
    if (s == "accuracy") return MetricKind::Accuracy;
    if (s == "roc_auc") return MetricKind::RocAuc;
    throw std::invalid_argument("unknown metric kind: " + s);
}

}  // namespace

NodeDataset load_graph_json(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);
    json j;
    try {
        in >> j;
    } catch (const json::parse_error& e) {
        throw std::runtime_error("parse error in " + path + ": " + e.what());
    }
    auto require = [&](const char* key) -> const json& {
        if (!j.contains(key))
            throw std::runtime_error(path + ": missing field '" + key + "'");
        return j.at(key);
    };
    NodeDataset data;
    const int n = require("num_nodes").get<int>();
    std::vector<std::pair<int, int>> edges;
    for (const auto& e : require("edges")) {
        if (!e.is_array() || e.size() != 2)
            throw std::runtime_error(path + ": edge entries must be [i,j] pairs");
        edges.emplace_back(e[0].get<int>(), e[1].get<int>());
    }
    try {
        data.graph = DirectedGraph::from_undirected_edges(edges, n);
    } catch (const std::invalid_argument& e) {
        throw std::runtime_error(path + ": " + e.what());
    }
    const auto& feats = require("features");
    if (static_cast<int>(feats.size()) != n)
        throw std::runtime_error(path + ": features must have num_nodes rows");
    const int s = feats.empty() ? 0 : static_cast<int>(feats[0].size());
    data.features.resize(n, s);
    for (int i = 0; i < n; ++i) {
        if (static_cast<int>(feats[i].size()) != s)
            throw std::runtime_error(path + ": ragged feature row " + std::to_string(i));
        for (int c = 0; c < s; ++c) data.features(i, c) = feats[i][c].get<double>();
    }
    for (const auto& l : require("labels")) data.labels.push_back(l.get<int>());
    for (const auto& sp : require("splits")) {
        SplitMasks masks;
        for (const auto& i : sp.at("train")) masks.train.push_back(i.get<int>());
        for (const auto& i : sp.at("val")) masks.val.push_back(i.get<int>());
        for (const auto& i : sp.at("test")) masks.test.push_back(i.get<int>());
        data.splits.push_back(std::move(masks));
    }
    data.metric = parse_metric(require("metric").get<std::string>());
    try {
        data.validate();
    } catch (const std::invalid_argument& e) {
        throw std::runtime_error(path + ": " + e.what());
    }
    return data;
}

void save_graph_json(const NodeDataset& data, const std::string& path) {
    json j;
    j["num_nodes"] = data.graph.num_nodes;
    json edges = json::array();
    for (const auto& [a, b] : data.graph.arcs)
        if (a < b) edges.push_back({a, b});
    j["edges"] = std::move(edges);
    json feats = json::array();
    for (int i = 0; i < data.features.rows(); ++i) {
        json row = json::array();
        for (int c = 0; c < data.features.cols(); ++c) row.push_back(data.features(i, c));
        feats.push_back(std::move(row));
    }
    j["features"] = std::move(feats);
    j["labels"] = data.labels;
    json splits = json::array();
    for (const auto& s : data.splits)
        splits.push_back({{"train", s.train}, {"val", s.val}, {"test", s.test}});
    j["splits"] = std::move(splits);
    j["metric"] = data.metric == MetricKind::Accuracy ? "accuracy" : "roc_auc";
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << j.dump();
}

}  // namespace csnn
