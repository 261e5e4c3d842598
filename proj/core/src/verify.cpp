#include "csnn/verify.hpp"

#include <algorithm>
#include <cmath>

namespace csnn {

using nlohmann::json;

Prop1Report check_prop1(const DirectedGraph& g, const DirectedSheaf& sheaf,
                        const Eigen::MatrixXd& x, int node, Rng& rng) {
    const int d = sheaf.dimension;
    const BlockOperator out = build_out(sheaf, g);
    const BlockOperator in_t = build_in_transpose(sheaf, g);
    Prop1Report report;

    if (sheaf.maps[node].target.scale == 0.0) {
        const Eigen::MatrixXd y = compose_apply(in_t, out, x);
        report.max_residual = y.middleRows(node * d, d).cwiseAbs().maxCoeff();
        report.listen_gated = report.max_residual < kStructuralZeroTol;
    }

    const Eigen::MatrixXd base =
        compose_apply(in_t, out, x).middleRows(node * d, d);
    for (int k : g.neighbors[node]) {
        if (sheaf.maps[k].source.scale != 0.0) continue;
        double worst = 0.0;
        Eigen::MatrixXd perturbed = x;
        for (int trial = 0; trial < 20; ++trial) {
            for (int a = 0; a < d; ++a)
                for (int c = 0; c < x.cols(); ++c)
                    perturbed(k * d + a, c) = x(k * d + a, c) + rng.normal();
            const Eigen::MatrixXd y = compose_apply(in_t, out, perturbed);
            worst = std::max(worst, (y.middleRows(node * d, d) - base)
                                        .cwiseAbs()
                                        .maxCoeff());
        }
        perturbed.middleRows(k * d, d) = x.middleRows(k * d, d);
        report.max_residual = std::max(report.max_residual, worst);
        if (worst < kStructuralZeroTol) report.ignored_neighbors.push_back(k);
    }
    return report;
}

std::set<int> receptive_field(const Model& model, const ParameterStore& store,
                              const DirectedGraph& g, const Eigen::MatrixXd& raw,
                              int node, double threshold, Rng& rng) {
    const Eigen::MatrixXd base_logits = model.logits(store, g, raw);
    std::set<int> field;
    Eigen::MatrixXd perturbed = raw;
    for (int j = 0; j < g.num_nodes; ++j) {
        double effect = 0.0;
        for (int trial = 0; trial < 2; ++trial) {
            for (int c = 0; c < raw.cols(); ++c)
                perturbed(j, c) = raw(j, c) + rng.normal();
            const Eigen::MatrixXd logits = model.logits(store, g, perturbed);
            effect = std::max(effect, (logits.row(node) - base_logits.row(node))
                                          .cwiseAbs()
                                          .maxCoeff());
        }
        perturbed.row(j) = raw.row(j);
        if (effect > threshold) field.insert(j);
    }
    return field;
}

namespace {

// One relay step: identity activation, no W1/W2, epsilon = -1 at the
// receiving node so its previous feature is replaced outright.
Eigen::MatrixXd relay_step(const Eigen::MatrixXd& x, const DirectedSheaf& sheaf,
                           const DirectedGraph& g, int receiver) {
    ModelConfig cfg;
    cfg.left_weights = false;
    cfg.right_weights = false;
    cfg.activation = Activation::Identity;
    const int d = sheaf.dimension;
    LayerParams lp;
    lp.epsilon = Eigen::VectorXd::Zero(x.rows());
    lp.epsilon.segment(receiver * d, d).setConstant(-1.0);
    return csnn_layer_unnormalized(x, sheaf, g, lp, cfg);
}

}  // namespace

RelayReport check_relay(int length, int stalk_dim, std::uint64_t seed) {
    const RelaySchedule sched = gen_relay_path(length, stalk_dim, seed);
    const int d = stalk_dim;
    const int n = length + 1;

    // identity activation makes the whole chain linear, so unit inputs
    // recover exact Jacobian columns
    auto endpoint_jacobian_wrt = [&](int source_node) {
        Eigen::MatrixXd jac(d, d);
        for (int c = 0; c < d; ++c) {
            Eigen::MatrixXd x = Eigen::MatrixXd::Zero(n * d, 1);
            x(source_node * d + c, 0) = 1.0;
            for (int l = 0; l < length; ++l)
                x = relay_step(x, sched.layers[l], sched.graph, length - 1 - l);
            jac.col(c) = x.topRows(d);
        }
        return jac;
    };

    RelayReport report;
    const Eigen::MatrixXd j_far = endpoint_jacobian_wrt(length);
    report.target_sensitive = j_far.cwiseAbs().maxCoeff() > 1e-8;
    for (int v = 1; v < length; ++v)
        report.max_intermediate = std::max(
            report.max_intermediate, endpoint_jacobian_wrt(v).cwiseAbs().maxCoeff());
    report.intermediates_ignored = report.max_intermediate < kStructuralZeroTol;

    // dense composition oracle: chain the receiver/carrier blocks of
    // (L_in)^T L_out across the schedule
    Eigen::MatrixXd oracle = Eigen::MatrixXd::Identity(d, d);
    for (int l = length - 1; l >= 0; --l) {
        const int receiver = length - 1 - l;
        const int carrier = receiver + 1;
        const Eigen::MatrixXd dense_composed =
            build_in_transpose(sched.layers[l], sched.graph).dense() *
            build_out(sched.layers[l], sched.graph).dense();
        oracle *= -dense_composed.block(receiver * d, carrier * d, d, d);
    }
    report.oracle_error = (j_far - oracle).cwiseAbs().maxCoeff();
    report.constant = d == 1 ? j_far(0, 0) : j_far.norm() / std::sqrt(double(d));
    return report;
}

namespace {

DirectedGraph random_tree(int depth, int max_children, Rng& rng) {
    std::vector<std::pair<int, int>> edges;
    std::vector<int> level{0};
    int next = 1;
    for (int l = 0; l < depth; ++l) {
        std::vector<int> next_level;
        for (int parent : level) {
            const int children = 1 + static_cast<int>(rng.below(max_children));
            for (int c = 0; c < children; ++c) {
                edges.emplace_back(parent, next);
                next_level.push_back(next++);
            }
        }
        level = std::move(next_level);
    }
    return DirectedGraph::from_undirected_edges(edges, next);
}

DirectedGraph random_graph(int num_nodes, double edge_prob, Rng& rng) {
    std::vector<std::pair<int, int>> edges;
    for (int i = 0; i < num_nodes; ++i)
        for (int j = i + 1; j < num_nodes; ++j)
            if (rng.uniform() < edge_prob) edges.emplace_back(i, j);
    return DirectedGraph::from_undirected_edges(edges, num_nodes);
}

DirectedSheaf random_sheaf(int num_nodes, int d, Rng& rng, double freeze_prob) {
    DirectedSheaf sheaf;
    sheaf.dimension = d;
    sheaf.maps.resize(num_nodes);
    auto draw = [&] {
        Eigen::MatrixXd refl(d, d);
        for (int i = 0; i < d; ++i)
            for (int j = 0; j < d; ++j) refl(i, j) = rng.normal();
        ConformalMap m{softplus(rng.normal()), householder_orthogonal(refl)};
        if (rng.uniform() < freeze_prob) m.scale = 0.0;
        return m;
    };
    for (auto& pair : sheaf.maps) {
        pair.source = draw();
        pair.target = draw();
    }
    return sheaf;
}

json run_prop1_suite(std::uint64_t seed, int cases) {
    Rng rng(seed);
    int failures = 0;
    double worst = 0.0;
    for (int c = 0; c < cases; ++c) {
        const int d = 1 + static_cast<int>(rng.below(3));
        DirectedGraph g = random_graph(4 + static_cast<int>(rng.below(9)), 0.4, rng);
        DirectedSheaf sheaf = random_sheaf(g.num_nodes, d, rng, 0.3);
        const int node = static_cast<int>(rng.below(g.num_nodes));
        sheaf.maps[node].target.scale = 0.0;  // force the listen-gated premise
        Eigen::MatrixXd x = gaussian_matrix(g.num_nodes * d, 2, 1.0, rng);
        const Prop1Report rep = check_prop1(g, sheaf, x, node, rng);
        bool ok = rep.listen_gated;
        for (int k : g.neighbors[node])
            if (sheaf.maps[k].source.scale == 0.0 &&
                std::find(rep.ignored_neighbors.begin(), rep.ignored_neighbors.end(),
                          k) == rep.ignored_neighbors.end())
                ok = false;
        if (!ok) ++failures;
        worst = std::max(worst, rep.max_residual);
    }
    return {{"cases", cases}, {"failures", failures}, {"passed", failures == 0}};
}

json run_prop2_suite(std::uint64_t seed) {
    Rng rng(seed);
    int violations = 0;
    bool two_hop_seen = false;
    for (int t : {1, 2}) {
        for (int trial = 0; trial < 3; ++trial) {
            DirectedGraph g = random_tree(6, 2, rng);
            Model model;
            model.cfg.stalk_dim = 2;
            model.cfg.hidden_channels = 4;
            model.cfg.num_layers = t;
            model.cfg.activation = Activation::Gelu;
            model.cfg.input_dim = 3;
            model.cfg.num_classes = 2;
            ParameterStore store;
            model.init_params(store, g.num_nodes, rng.below(1u << 30));
            Eigen::MatrixXd raw = gaussian_matrix(g.num_nodes, 3, 1.0, rng);
            const int node = static_cast<int>(rng.below(g.num_nodes));
            const auto field = receptive_field(model, store, g, raw, node,
                                               kStructuralZeroTol, rng);
            const auto dist = bfs_distances(g, node);
            for (int j : field)
                if (dist[j] == kUnreachable || dist[j] > 2 * t) ++violations;
            if (t == 1)
                for (int j : field)
                    if (dist[j] == 2) two_hop_seen = true;
        }
    }
    return {{"violations", violations},
            {"two_hop_sensitive", two_hop_seen},
            {"passed", violations == 0 && two_hop_seen}};
}

}  // namespace

json verify_props_report(std::uint64_t seed) {
    json report;
    report["prop1"] = run_prop1_suite(seed, 100);
    report["prop2"] = run_prop2_suite(seed + 1);
    json relays = json::array();
    bool relay_ok = true;
    for (int t : {2, 3, 4, 6}) {
        for (int d : {1, 2}) {
            const RelayReport r = check_relay(t, d, seed + 7 * t + d);
            const bool ok =
                r.target_sensitive && r.intermediates_ignored && r.oracle_error < 1e-10;
            relay_ok = relay_ok && ok;
            relays.push_back({{"length", t},
                              {"stalk_dim", d},
                              {"constant", r.constant},
                              {"oracle_error", r.oracle_error},
                              {"passed", ok}});
        }
    }
    report["relay"] = std::move(relays);
    report["all_passed"] = report["prop1"]["passed"].get<bool>() &&
                           report["prop2"]["passed"].get<bool>() && relay_ok;
    return report;
}

}  // namespace csnn
