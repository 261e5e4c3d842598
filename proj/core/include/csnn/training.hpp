#pragma once

#include <Eigen/Dense>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "csnn/datasets.hpp"
#include "csnn/model.hpp"

namespace csnn {

MetricKind metric_from_string(const std::string& s);
const char* metric_name(MetricKind k);

/// accuracy: fraction of masked nodes whose argmax matches the label.
/// roc_auc: probability a random positive outranks a random negative,
/// ties counted 1/2; scores are the class-1 logits.
double metric(MetricKind kind, const Eigen::MatrixXd& logits,
              const std::vector<int>& labels, const std::vector<int>& mask_rows);

/// Mean negative log-softmax of the labeled rows (plain evaluation).
double loss_cross_entropy(const Eigen::MatrixXd& logits,
                          const std::vector<int>& labels,
                          const std::vector<int>& mask_rows);

struct AdamConfig {
    double lr = 0.02;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.0;  // decoupled
};

/// One Adam step over every parameter, using the gradients currently in the
/// store. Weight decay is decoupled (applied directly to the weights).
void adam_step(ParameterStore& store, const AdamConfig& cfg);

/// Central finite differences of a scalar function of the store's
/// parameters; writes the result into each entry's grad slot.
void finite_diff_grad(const std::function<double()>& scalar_fn,
                      ParameterStore& store, double step);

struct TrainSchedule {
    int epochs = 2000;
    double lr = 0.02;
    double weight_decay = 0.0;
    std::uint64_t seed = 0;
    int eval_every = 10;
    double grad_clip = 5.0;  // global gradient norm cap; 0 disables
    /// Stop once train accuracy reaches this level, if set.
    std::optional<double> stop_at_train_metric;
};

struct EvalRecord {
    int epoch = 0;
    double train_loss = 0.0;
    double train_metric = 0.0;
    double val_metric = -1.0;   // -1 when the mask is empty
    double test_metric = -1.0;
};

struct TrainResult {
    std::vector<EvalRecord> history;
    ParameterStore best_params;   // best validation metric (or last train eval)
    double best_val_metric = -1.0;
    double final_train_metric = 0.0;
    double test_at_best = -1.0;
};

/// Full-graph training of a CSNN model on one dataset split. Deterministic
/// under a fixed seed. `on_eval`, when given, sees each record as it is
/// produced (the CLI streams these to JSON-lines).
TrainResult train(const Model& model, const NodeDataset& data, int split_index,
                  const TrainSchedule& schedule,
                  const std::function<void(const EvalRecord&)>& on_eval = nullptr);

/// Same loop for the GCN baseline.
TrainResult train_gcn(const GcnModel& model, const NodeDataset& data,
                      int split_index, const TrainSchedule& schedule,
                      const std::function<void(const EvalRecord&)>& on_eval = nullptr);

std::string eval_record_jsonl(const EvalRecord& r);

}  // namespace csnn
