#include <benchmark/benchmark.h>

#include "csnn/block_operator.hpp"
#include "csnn/model.hpp"
#include "csnn/sheaf.hpp"

namespace {

csnn::DirectedGraph ring_graph(int n, int extra_stride) {
    std::vector<std::pair<int, int>> edges;
    for (int i = 0; i < n; ++i) edges.emplace_back(i, (i + 1) % n);
    for (int i = 0; i < n; ++i) edges.emplace_back(i, (i + extra_stride) % n);
    return csnn::DirectedGraph::from_undirected_edges(edges, n);
}

csnn::DirectedSheaf random_sheaf(int n, int d, csnn::Rng& rng) {
    csnn::DirectedSheaf sheaf;
    sheaf.dimension = d;
    sheaf.maps.resize(n);
    for (auto& pair : sheaf.maps) {
        pair.source = {csnn::softplus(rng.normal()),
                       csnn::householder_orthogonal(
                           csnn::gaussian_matrix(d, d, 1.0, rng))};
        pair.target = {csnn::softplus(rng.normal()),
                       csnn::householder_orthogonal(
                           csnn::gaussian_matrix(d, d, 1.0, rng))};
    }
    return sheaf;
}

void BM_BlockApply(benchmark::State& state) {
    const int n = static_cast<int>(state.range(0));
    const int d = static_cast<int>(state.range(1));
    csnn::Rng rng(1);
    const auto g = ring_graph(n, 7);
    const auto sheaf = random_sheaf(n, d, rng);
    const auto op = csnn::build_out(sheaf, g);
    const Eigen::MatrixXd x = csnn::gaussian_matrix(n * d, 32, 1.0, rng);
    for (auto _ : state) benchmark::DoNotOptimize(op.apply(x));
    state.SetItemsProcessed(state.iterations() * op.num_nodes);
}
BENCHMARK(BM_BlockApply)->Args({256, 2})->Args({1024, 2})->Args({1024, 4});

void BM_ComposeApply(benchmark::State& state) {
    const int n = static_cast<int>(state.range(0));
    csnn::Rng rng(2);
    const auto g = ring_graph(n, 5);
    const auto sheaf = random_sheaf(n, 2, rng);
    const auto out = csnn::build_out(sheaf, g);
    const auto in_t = csnn::build_in_transpose(sheaf, g);
    const Eigen::MatrixXd x = csnn::gaussian_matrix(n * 2, 32, 1.0, rng);
    for (auto _ : state)
        benchmark::DoNotOptimize(csnn::compose_apply(in_t, out, x));
}
BENCHMARK(BM_ComposeApply)->Arg(256)->Arg(1024);

void BM_ModelForward(benchmark::State& state) {
    const int n = static_cast<int>(state.range(0));
    csnn::Rng rng(3);
    const auto g = ring_graph(n, 11);
    csnn::Model model;
    model.cfg.stalk_dim = 2;
    model.cfg.hidden_channels = 32;
    model.cfg.num_layers = 2;
    model.cfg.input_dim = 16;
    model.cfg.num_classes = 5;
    csnn::ParameterStore store;
    model.init_params(store, n, 17);
    const Eigen::MatrixXd raw = csnn::gaussian_matrix(n, 16, 1.0, rng);
    for (auto _ : state) benchmark::DoNotOptimize(model.logits(store, g, raw));
}
BENCHMARK(BM_ModelForward)->Arg(128)->Arg(512);

void BM_TrainStep(benchmark::State& state) {
    const int n = static_cast<int>(state.range(0));
    csnn::Rng rng(4);
    const auto g = ring_graph(n, 3);
    csnn::Model model;
    model.cfg.stalk_dim = 2;
    model.cfg.hidden_channels = 16;
    model.cfg.num_layers = 2;
    model.cfg.input_dim = 8;
    model.cfg.num_classes = 3;
    csnn::ParameterStore store;
    model.init_params(store, n, 19);
    const Eigen::MatrixXd raw = csnn::gaussian_matrix(n, 8, 1.0, rng);
    std::vector<int> labels(n), mask(n);
    for (int i = 0; i < n; ++i) {
        labels[i] = static_cast<int>(rng.below(3));
        mask[i] = i;
    }
    for (auto _ : state) {
        csnn::ad::Tape t;
        std::map<std::string, csnn::ad::Var> vars;
        auto loss = t.cross_entropy(
            model.forward(t, store, g, raw, false, nullptr, &vars), labels, mask);
        t.backward(loss);
        benchmark::DoNotOptimize(t.grad(vars.begin()->second));
    }
}
BENCHMARK(BM_TrainStep)->Arg(128);

}  // namespace

BENCHMARK_MAIN();
