#include "csnn/training.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

namespace csnn {

MetricKind metric_from_string(const std::string& s) {
    if (s == "accuracy") return MetricKind::Accuracy;
    if (s == "roc_auc") return MetricKind::RocAuc;
    throw std::invalid_argument("unknown metric: " + s);
}

const char* metric_name(MetricKind k) {
    return k == MetricKind::Accuracy ? "accuracy" : "roc_auc";
}

double metric(MetricKind kind, const Eigen::MatrixXd& logits,
              const std::vector<int>& labels, const std::vector<int>& mask_rows) {
    if (mask_rows.empty()) throw std::invalid_argument("metric: empty mask");
    if (kind == MetricKind::Accuracy) {
        int correct = 0;
        for (int r : mask_rows) {
            Eigen::Index arg;
            logits.row(r).maxCoeff(&arg);
            if (static_cast<int>(arg) == labels[r]) ++correct;
        }
        return static_cast<double>(correct) / mask_rows.size();
    }
    // ROC AUC via the rank statistic; scores are the positive-class logits
    std::vector<std::pair<double, int>> scored;
    scored.reserve(mask_rows.size());
    long pos = 0, neg = 0;
    for (int r : mask_rows) {
        if (labels[r] != 0 && labels[r] != 1)
            throw std::invalid_argument("roc_auc requires binary labels");
        scored.emplace_back(logits(r, 1), labels[r]);
        (labels[r] == 1 ? pos : neg)++;
    }
    if (pos == 0 || neg == 0)
        throw std::invalid_argument("roc_auc requires both classes in the mask");
    std::sort(scored.begin(), scored.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });
    // midranks over tied scores
    double rank_sum_pos = 0.0;
    size_t i = 0;
    while (i < scored.size()) {
        size_t k = i;
        while (k < scored.size() && scored[k].first == scored[i].first) ++k;
        const double midrank = 0.5 * (static_cast<double>(i + 1) + static_cast<double>(k));
        for (size_t t = i; t < k; ++t)
            if (scored[t].second == 1) rank_sum_pos += midrank;
        i = k;
    }
    return (rank_sum_pos - 0.5 * pos * (pos + 1)) / (static_cast<double>(pos) * neg);
}

double loss_cross_entropy(const Eigen::MatrixXd& logits,
                          const std::vector<int>& labels,
                          const std::vector<int>& mask_rows) {
    if (mask_rows.empty()) throw std::invalid_argument("loss: empty mask");
    double loss = 0.0;
    for (int r : mask_rows) {
        const auto row = logits.row(r);
        const double m = row.maxCoeff();
        loss += m + std::log((row.array() - m).exp().sum()) - row(labels[r]);
    }
    return loss / mask_rows.size();
}

void adam_step(ParameterStore& store, const AdamConfig& cfg) {
    store.step_count += 1;
    const double t = static_cast<double>(store.step_count);
    const double bc1 = 1.0 - std::pow(cfg.beta1, t);
    const double bc2 = 1.0 - std::pow(cfg.beta2, t);
    for (auto& [_, e] : store.entries) {
        e.m = cfg.beta1 * e.m + (1.0 - cfg.beta1) * e.grad;
        e.v = cfg.beta2 * e.v.array().matrix() +
              (1.0 - cfg.beta2) * e.grad.cwiseProduct(e.grad);
        const Eigen::ArrayXXd mhat = e.m.array() / bc1;
        const Eigen::ArrayXXd vhat = e.v.array() / bc2;
        if (cfg.weight_decay > 0.0)
            e.value *= (1.0 - cfg.lr * cfg.weight_decay);
        e.value.array() -= cfg.lr * mhat / (vhat.sqrt() + cfg.eps);
    }
}

void finite_diff_grad(const std::function<double()>& scalar_fn,
                      ParameterStore& store, double step) {
    if (step <= 0.0) throw std::invalid_argument("finite_diff_grad: step must be > 0");
    for (auto& [_, e] : store.entries) {
        for (Eigen::Index i = 0; i < e.value.size(); ++i) {
            double& theta = e.value.data()[i];
            const double saved = theta;
            theta = saved + step;
            const double fp = scalar_fn();
            theta = saved - step;
            const double fm = scalar_fn();
            theta = saved;
            e.grad.data()[i] = (fp - fm) / (2.0 * step);
        }
    }
}

namespace {

void clip_gradients(ParameterStore& store, double max_norm) {
    double sq = 0.0;
    for (const auto& [_, e] : store.entries) sq += e.grad.squaredNorm();
    const double norm = std::sqrt(sq);
    // a reflection vector crossing the degenerate ball can overflow its
    // gradient; drop the update and let momentum carry the parameters past
    if (!std::isfinite(norm)) {
        for (auto& [_, e] : store.entries) e.grad.setZero();
        return;
    }
    if (norm <= max_norm || norm == 0.0) return;
    const double s = max_norm / norm;
    for (auto& [_, e] : store.entries) e.grad *= s;
}

template <typename ForwardFn>
TrainResult train_loop(ParameterStore& store, const NodeDataset& data,
                       int split_index, const TrainSchedule& schedule,
                       ForwardFn&& forward_with_grads,
                       const std::function<Eigen::MatrixXd()>& eval_logits,
                       const std::function<void(const EvalRecord&)>& on_eval) {
    if (schedule.epochs < 0 || schedule.eval_every < 1)
        throw std::invalid_argument("invalid schedule");
    if (split_index < 0 || split_index >= static_cast<int>(data.splits.size()))
        throw std::invalid_argument("split index out of range");
    const SplitMasks& masks = data.splits[split_index];
    AdamConfig adam;
    adam.lr = schedule.lr;
    adam.weight_decay = schedule.weight_decay;

    TrainResult result;
    auto evaluate = [&](int epoch, double train_loss) {
        const Eigen::MatrixXd logits = eval_logits();
        EvalRecord rec;
        rec.epoch = epoch;
        rec.train_loss = train_loss >= 0.0
                             ? train_loss
                             : loss_cross_entropy(logits, data.labels, masks.train);
        rec.train_metric = metric(data.metric, logits, data.labels, masks.train);
        if (!masks.val.empty())
            rec.val_metric = metric(data.metric, logits, data.labels, masks.val);
        if (!masks.test.empty())
            rec.test_metric = metric(data.metric, logits, data.labels, masks.test);
        result.history.push_back(rec);
        if (on_eval) on_eval(rec);
        const double selection = masks.val.empty() ? rec.train_metric : rec.val_metric;
        if (selection > result.best_val_metric) {
            result.best_val_metric = selection;
            result.best_params = store;
            result.test_at_best = rec.test_metric;
        }
        result.final_train_metric = rec.train_metric;
        return rec;
    };

    evaluate(0, -1.0);
    for (int epoch = 1; epoch <= schedule.epochs; ++epoch) {
        const double loss = forward_with_grads();
        if (schedule.grad_clip > 0.0) clip_gradients(store, schedule.grad_clip);
        adam_step(store, adam);
        if (epoch % schedule.eval_every == 0 || epoch == schedule.epochs) {
            const EvalRecord rec = evaluate(epoch, loss);
            if (schedule.stop_at_train_metric &&
                rec.train_metric >= *schedule.stop_at_train_metric)
                break;
        }
    }
    return result;
}

}  // namespace

TrainResult train(const Model& model, const NodeDataset& data, int split_index,
                  const TrainSchedule& schedule,
                  const std::function<void(const EvalRecord&)>& on_eval) {
    ParameterStore store;
    model.init_params(store, data.num_nodes(), schedule.seed);
    Rng dropout_rng(schedule.seed ^ 0x9e3779b97f4a7c15ull);
    const SplitMasks& masks = data.splits.at(split_index);

    auto step = [&]() {
        ad::Tape tape;
        std::map<std::string, ad::Var> vars;
        ad::Var logits = model.forward(tape, store, data.graph, data.features,
                                       /*training=*/true, &dropout_rng, &vars);
        ad::Var loss = tape.cross_entropy(logits, data.labels, masks.train);
        const double value = tape.value(loss)(0, 0);
        tape.backward(loss);
        store.zero_grads();
        for (const auto& [name, var] : vars) {
            const auto& g = tape.grad(var);
            if (g.size() != 0) store.at(name).grad = g;
        }
        return value;
    };
    auto eval = [&]() { return model.logits(store, data.graph, data.features); };
    return train_loop(store, data, split_index, schedule, step, eval, on_eval);
}

TrainResult train_gcn(const GcnModel& model, const NodeDataset& data,
                      int split_index, const TrainSchedule& schedule,
                      const std::function<void(const EvalRecord&)>& on_eval) {
    ParameterStore store;
    model.init_params(store, schedule.seed);
    const SplitMasks& masks = data.splits.at(split_index);

    auto step = [&]() {
        ad::Tape tape;
        std::map<std::string, ad::Var> vars;
        ad::Var logits = model.forward(tape, store, data.graph, data.features, &vars);
        ad::Var loss = tape.cross_entropy(logits, data.labels, masks.train);
        const double value = tape.value(loss)(0, 0);
        tape.backward(loss);
        store.zero_grads();
        for (const auto& [name, var] : vars) {
            const auto& g = tape.grad(var);
            if (g.size() != 0) store.at(name).grad = g;
        }
        return value;
    };
    auto eval = [&]() {
        ad::Tape tape;
        return tape.value(model.forward(tape, store, data.graph, data.features));
    };
    return train_loop(store, data, split_index, schedule, step, eval, on_eval);
}

std::string eval_record_jsonl(const EvalRecord& r) {
    std::ostringstream os;
    os.precision(17);
    os << "{\"epoch\":" << r.epoch << ",\"train_loss\":" << r.train_loss
       << ",\"train_metric\":" << r.train_metric;
    if (r.val_metric >= 0.0) os << ",\"val_metric\":" << r.val_metric;
    if (r.test_metric >= 0.0) os << ",\"test_metric\":" << r.test_metric;
    os << "}";
    return os.str();
}

}  // namespace csnn
