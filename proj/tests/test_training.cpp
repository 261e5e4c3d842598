#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <json.hpp>

#include "csnn/training.hpp"
#include "helpers.hpp"

using namespace csnn;

TEST_CASE("accuracy metric") {
    Eigen::MatrixXd logits(4, 3);
    logits << 2, 0, 1,   // argmax 0
              0, 3, 1,   // argmax 1
              1, 0, 5,   // argmax 2
              9, 1, 0;   // argmax 0
    const std::vector<int> labels{0, 1, 2, 1};
    CHECK(metric(MetricKind::Accuracy, logits, labels, {0, 1, 2, 3}) ==
          doctest::Approx(0.75));
    CHECK(metric(MetricKind::Accuracy, logits, labels, {0, 1, 2}) ==
          doctest::Approx(1.0));
}

TEST_CASE("roc auc with ranks and ties") {
    // [DERIVED] scores 0.9 0.8 0.3 0.1 / labels 1 0 1 0: pairs (pos, neg):
    // (0.9,0.8) win, (0.9,0.1) win, (0.3,0.8) loss, (0.3,0.1) win -> 3/4
    Eigen::MatrixXd logits(4, 2);
    logits << 0.0, 0.9, 0.0, 0.8, 0.0, 0.3, 0.0, 0.1;
    const std::vector<int> labels{1, 0, 1, 0};
    CHECK(metric(MetricKind::RocAuc, logits, labels, {0, 1, 2, 3}) ==
          doctest::Approx(0.75).epsilon(1e-12));
    // ties count 1/2: scores equal everywhere -> auc 0.5
    Eigen::MatrixXd flat = Eigen::MatrixXd::Zero(4, 2);
    CHECK(metric(MetricKind::RocAuc, flat, labels, {0, 1, 2, 3}) ==
          doctest::Approx(0.5).epsilon(1e-12));
    const std::vector<int> one_class{1, 1, 1, 1};
    CHECK_THROWS(metric(MetricKind::RocAuc, logits, one_class, {0, 1, 2, 3}));
}

TEST_CASE("metric names round trip") {
    CHECK(metric_from_string("accuracy") == MetricKind::Accuracy);
    CHECK(metric_from_string("roc_auc") == MetricKind::RocAuc);
    CHECK(std::string(metric_name(MetricKind::Accuracy)) == "accuracy");
    CHECK_THROWS(metric_from_string("f1"));
}

TEST_CASE("adam first step moves by ~lr against the gradient") {
    ParameterStore store;
    store.add("w", Eigen::MatrixXd::Constant(1, 1, 0.5));
    store.at("w").grad(0, 0) = 2.0;
    AdamConfig cfg;
    cfg.lr = 0.1;
    adam_step(store, cfg);
    // bias-corrected first step: mhat = g, vhat = g^2, delta = lr*g/(|g|+eps)
    CHECK(store.at("w").value(0, 0) == doctest::Approx(0.4).epsilon(1e-6));
    CHECK(store.step_count == 1);
}

TEST_CASE("decoupled weight decay shrinks weights without gradients") {
    ParameterStore store;
    store.add("w", Eigen::MatrixXd::Constant(1, 1, 1.0));
    AdamConfig cfg;
    cfg.lr = 0.1;
    cfg.weight_decay = 0.5;
    adam_step(store, cfg);
    CHECK(store.at("w").value(0, 0) == doctest::Approx(1.0 - 0.1 * 0.5).epsilon(1e-9));
}

TEST_CASE("finite_diff_grad on a quadratic") {
    ParameterStore store;
    store.add("w", Eigen::MatrixXd::Constant(2, 1, 1.5));
    auto fn = [&] {
        const auto& w = store.at("w").value;
        return 3.0 * w(0, 0) * w(0, 0) + w(1, 0);
    };
    finite_diff_grad(fn, store, 1e-5);
    CHECK(store.at("w").grad(0, 0) == doctest::Approx(9.0).epsilon(1e-5));
    CHECK(store.at("w").grad(1, 0) == doctest::Approx(1.0).epsilon(1e-5));
}

namespace {

NodeDataset tiny_dataset(csnn::Rng& rng) {
    NodeDataset data;
    data.graph = testutil::random_graph(10, 0.4, rng);
    data.features = gaussian_matrix(10, 4, 1.0, rng);
    data.labels.resize(10);
    for (int i = 0; i < 10; ++i) {
        data.labels[i] = static_cast<int>(rng.below(2));
        data.features(i, data.labels[i]) += 3.0;  // separable signal
    }
    SplitMasks split;
    for (int i = 0; i < 7; ++i) split.train.push_back(i);
    split.val = {7, 8};
    split.test = {9};
    data.splits.push_back(split);
    return data;
}

}  // namespace

TEST_CASE("training reduces loss and fills history") {
    Rng rng(1);
    const NodeDataset data = tiny_dataset(rng);
    Model model;
    model.cfg.stalk_dim = 2;
    model.cfg.hidden_channels = 4;
    model.cfg.num_layers = 1;
    model.cfg.input_dim = data.num_features();
    model.cfg.num_classes = data.num_classes();
    TrainSchedule schedule;
    schedule.epochs = 60;
    schedule.eval_every = 10;
    schedule.seed = 3;
    int callbacks = 0;
    const TrainResult result =
        train(model, data, 0, schedule, [&](const EvalRecord&) { ++callbacks; });
    REQUIRE(result.history.size() >= 2);
    CHECK(callbacks == static_cast<int>(result.history.size()));
    CHECK(result.history.back().train_loss < result.history.front().train_loss);
    CHECK(result.best_val_metric >= 0.0);
    CHECK(result.history.front().epoch == 0);
}

TEST_CASE("gcn training runs and improves") {
    Rng rng(2);
    const NodeDataset data = tiny_dataset(rng);
    GcnModel model;
    model.input_dim = data.num_features();
    model.hidden = 8;
    model.layers = 2;
    model.num_classes = data.num_classes();
    TrainSchedule schedule;
    schedule.epochs = 60;
    schedule.eval_every = 20;
    schedule.seed = 5;
    const TrainResult result = train_gcn(model, data, 0, schedule);
    CHECK(result.history.back().train_loss < result.history.front().train_loss);
}

TEST_CASE("identical seeds give byte-identical histories") {
    Rng rng(3);
    const NodeDataset data = tiny_dataset(rng);
    Model model;
    model.cfg.stalk_dim = 1;
    model.cfg.hidden_channels = 4;
    model.cfg.num_layers = 1;
    model.cfg.dropout = 0.3;  // exercise the dropout rng path too
    model.cfg.input_dim = data.num_features();
    model.cfg.num_classes = data.num_classes();
    TrainSchedule schedule;
    schedule.epochs = 25;
    schedule.eval_every = 5;
    schedule.seed = 17;
    auto lines = [&] {
        std::string all;
        train(model, data, 0, schedule,
              [&](const EvalRecord& r) { all += eval_record_jsonl(r) + "\n"; });
        return all;
    };
    CHECK(lines() == lines());
}

TEST_CASE("early stop at target train metric") {
    Rng rng(4);
    const NodeDataset data = tiny_dataset(rng);
    Model model;
    model.cfg.stalk_dim = 1;
    model.cfg.hidden_channels = 8;
    model.cfg.num_layers = 1;
    model.cfg.input_dim = data.num_features();
    model.cfg.num_classes = data.num_classes();
    TrainSchedule schedule;
    schedule.epochs = 2000;
    schedule.eval_every = 5;
    schedule.seed = 9;
    schedule.stop_at_train_metric = 1.0;
    const TrainResult result = train(model, data, 0, schedule);
    CHECK(result.final_train_metric == doctest::Approx(1.0));
    CHECK(result.history.back().epoch < 2000);
}

TEST_CASE("eval records serialize as one JSON object per line") {
    EvalRecord r;
    r.epoch = 12;
    r.train_loss = 0.5;
    r.train_metric = 0.875;
    r.val_metric = 0.75;
    r.test_metric = -1.0;
    const auto j = nlohmann::json::parse(eval_record_jsonl(r));
    CHECK(j.at("epoch").get<int>() == 12);
    CHECK(j.at("train_metric").get<double>() == doctest::Approx(0.875));
}
