#include "csnn/model.hpp"

#include <cmath>
#include <stdexcept>

namespace csnn {

using ad::Cwise;
using ad::Tape;
using ad::Var;

namespace {

Cwise to_cwise(Activation a) {
    switch (a) {
        case Activation::Identity: return Cwise::Identity;
        case Activation::Relu: return Cwise::Relu;
        case Activation::Gelu: return Cwise::Gelu;
    }
    return Cwise::Identity;
}

Eigen::VectorXd inv_sqrt_degrees(const DirectedGraph& g, int shift = 0) {
    Eigen::VectorXd v(g.num_nodes);
    for (int i = 0; i < g.num_nodes; ++i) {
        const double deg = g.degree(i) + shift;
        v(i) = deg > 0 ? 1.0 / std::sqrt(deg) : 0.0;
    }
    return v;
}

Eigen::VectorXd degree_mask(const DirectedGraph& g) {
    Eigen::VectorXd v(g.num_nodes);
    for (int i = 0; i < g.num_nodes; ++i) v(i) = g.degree(i) > 0 ? 1.0 : 0.0;
    return v;
}

Eigen::MatrixXd dropout_mask(int rows, int cols, double p, Rng& rng) {
    Eigen::MatrixXd m(rows, cols);
    const double keep = 1.0 - p;
    for (int i = 0; i < rows; ++i)
        for (int j = 0; j < cols; ++j)
            m(i, j) = rng.uniform() < p ? 0.0 : 1.0 / keep;
    return m;
}

}  // namespace

Activation activation_from_string(const std::string& s) {
    if (s == "identity" || s == "id") return Activation::Identity;
    if (s == "relu") return Activation::Relu;
    if (s == "gelu") return Activation::Gelu;
    throw std::invalid_argument("unknown activation: " + s);
}

const char* activation_name(Activation a) {
    switch (a) {
        case Activation::Identity: return "identity";
        case Activation::Relu: return "relu";
        case Activation::Gelu: return "gelu";
    }
    return "?";
}

void ModelConfig::validate() const {
    if (stalk_dim < 1) throw std::invalid_argument("stalk_dim must be >= 1");
    if (hidden_channels < 1) throw std::invalid_argument("hidden_channels must be >= 1");
    if (num_layers < 1) throw std::invalid_argument("num_layers must be >= 1");
    if (dropout < 0 || dropout >= 1 || input_dropout < 0 || input_dropout >= 1)
        throw std::invalid_argument("dropout probabilities must lie in [0,1)");
    if (input_dim < 1) throw std::invalid_argument("input_dim must be set");
    if (num_classes < 1) throw std::invalid_argument("num_classes must be set");
}

Eigen::MatrixXd& ParameterStore::add(const std::string& name, Eigen::MatrixXd init) {
    Entry e;
    e.grad = Eigen::MatrixXd::Zero(init.rows(), init.cols());
    e.m = e.grad;
    e.v = e.grad;
    e.value = std::move(init);
    auto [it, fresh] = entries.emplace(name, std::move(e));
    if (!fresh) throw std::invalid_argument("duplicate parameter: " + name);
    return it->second.value;
}

ParameterStore::Entry& ParameterStore::at(const std::string& name) {
    auto it = entries.find(name);
    if (it == entries.end()) throw std::out_of_range("no parameter: " + name);
    return it->second;
}

const ParameterStore::Entry& ParameterStore::at(const std::string& name) const {
    auto it = entries.find(name);
    if (it == entries.end()) throw std::out_of_range("no parameter: " + name);
    return it->second;
}

void ParameterStore::zero_grads() {
    for (auto& [_, e] : entries) e.grad.setZero();
}

long ParameterStore::num_scalars() const {
    long n = 0;
    for (const auto& [_, e] : entries) n += e.value.size();
    return n;
}

Eigen::MatrixXd gaussian_matrix(int rows, int cols, double stddev, Rng& rng) {
    Eigen::MatrixXd m(rows, cols);
    for (int i = 0; i < rows; ++i)
        for (int j = 0; j < cols; ++j) m(i, j) = stddev * rng.normal();
    return m;
}

namespace {

void init_predictor_params(ParameterStore& store, const ModelConfig& cfg,
                           const std::string& prefix, Rng& rng) {
    const int in = cfg.stalk_dim * cfg.hidden_channels;
    const int gdim = cfg.gnn_dim;
    const int kd = cfg.num_reflections() * cfg.stalk_dim;
    if (cfg.map_predictor == MapPredictor::Mlp2) {
        store.add(prefix + "W1", gaussian_matrix(in, gdim, 1.0 / std::sqrt(in), rng));
        store.add(prefix + "b1", Eigen::MatrixXd::Zero(1, gdim));
    } else {
        int width = in;
        for (int r = 0; r < cfg.gnn_layers; ++r) {
            const double sd = 1.0 / std::sqrt(2.0 * width);
            store.add(prefix + "Wself" + std::to_string(r),
                      gaussian_matrix(width, gdim, sd, rng));
            store.add(prefix + "Wnbr" + std::to_string(r),
                      gaussian_matrix(width, gdim, sd, rng));
            store.add(prefix + "b" + std::to_string(r),
                      Eigen::MatrixXd::Zero(1, gdim));
            width = gdim;
        }
    }
    const double sd = 1.0 / std::sqrt(gdim);
    store.add(prefix + "Wrefl", gaussian_matrix(gdim, kd, sd, rng));
    // nonzero reflection vectors at init; zero vectors would degrade to
    // identity factors with no gradient
    store.add(prefix + "brefl", gaussian_matrix(1, kd, 1.0, rng));
    store.add(prefix + "Wscale", gaussian_matrix(gdim, 1, sd, rng));
    store.add(prefix + "bscale", Eigen::MatrixXd::Zero(1, 1));
}

}  // namespace

void Model::init_params(ParameterStore& store, int num_nodes,
                        std::uint64_t seed) const {
    cfg.validate();
    Rng rng(seed);
    const int d = cfg.stalk_dim;
    const int h = cfg.hidden_channels;
    const int dh = d * h;
    store.add("encoder.W",
              gaussian_matrix(cfg.input_dim, dh, 1.0 / std::sqrt(cfg.input_dim), rng));
    store.add("encoder.b", Eigen::MatrixXd::Zero(1, dh));
    for (int l = 0; l < cfg.num_layers; ++l) {
        const std::string p = "layer" + std::to_string(l) + ".";
        init_predictor_params(store, cfg, p + "src.", rng);
        init_predictor_params(store, cfg, p + "tgt.", rng);
        if (cfg.left_weights) {
            Eigen::MatrixXd w1 = Eigen::MatrixXd::Identity(d, d) +
                                 gaussian_matrix(d, d, 0.01, rng);
            store.add(p + "W1", std::move(w1));
        }
        // small W2 keeps the diffusion term subdominant at init; deep
        // identity-activation stacks otherwise amplify geometrically
        if (cfg.right_weights)
            store.add(p + "W2", gaussian_matrix(h, h, 0.1 / std::sqrt(h), rng));
        if (cfg.epsilon_learnable)
            store.add(p + "eps_raw", Eigen::MatrixXd::Zero(num_nodes * d, 1));
    }
    store.add("readout.W", gaussian_matrix(dh, cfg.num_classes, 1.0 / std::sqrt(dh), rng));
    store.add("readout.b", Eigen::MatrixXd::Zero(1, cfg.num_classes));
}

namespace {

struct ParamLookup {
    Tape& tape;
    const ParameterStore& store;
    std::map<std::string, Var>* out;
    std::map<std::string, Var> cache;

    Var operator()(const std::string& name) {
        auto it = cache.find(name);
        if (it != cache.end()) return it->second;
        Var v = tape.leaf(store.at(name).value);
        cache[name] = v;
        if (out) (*out)[name] = v;
        return v;
    }
};

struct PredictedMaps {
    Var orthogonal;  // (n*d) x d stack
    Var scales;      // n x 1
};

PredictedMaps build_predictor(Tape& t, const ModelConfig& cfg, ParamLookup& param,
                              const std::string& prefix, Var rows,
                              const DirectedGraph& g) {
    const int n = g.num_nodes;
    const int d = cfg.stalk_dim;
    const int k = cfg.num_reflections();
    Var h = rows;
    if (cfg.map_predictor == MapPredictor::Mlp2) {
        h = t.cwise(t.add_bias(t.matmul(h, param(prefix + "W1")), param(prefix + "b1")),
                    Cwise::Gelu);
    } else {
        const Eigen::VectorXd inv_deg = [&] {
            Eigen::VectorXd v(n);
            for (int i = 0; i < n; ++i)
                v(i) = g.degree(i) > 0 ? 1.0 / g.degree(i) : 0.0;
            return v;
        }();
        for (int r = 0; r < cfg.gnn_layers; ++r) {
            const std::string rs = std::to_string(r);
            Var mean = t.const_block_scale(t.neighbor_sum(g, h, 1), inv_deg, 1);
            h = t.cwise(t.add_bias(t.add(t.matmul(h, param(prefix + "Wself" + rs)),
                                         t.matmul(mean, param(prefix + "Wnbr" + rs))),
                                   param(prefix + "b" + rs)),
                        Cwise::Gelu);
        }
    }
    Var refl = t.add_bias(t.matmul(h, param(prefix + "Wrefl")), param(prefix + "brefl"));
    PredictedMaps out;
    out.orthogonal = t.householder_stack(refl, n, d, k);
    if (cfg.dsn_mode) {
        out.scales = t.constant(Eigen::MatrixXd::Ones(n, 1));
    } else {
        Var raw = t.add_bias(t.matmul(h, param(prefix + "Wscale")),
                             param(prefix + "bscale"));
        // Bound the scale logit smoothly: the normalized operator divides by
        // c_S (resp. c_T), so an unbounded logit lets the c_T/c_S ratio
        // overflow and poison the forward pass with non-finite values.
        constexpr double kScaleLogitBound = 4.0;
        raw = t.scale(t.cwise(t.scale(raw, 1.0 / kScaleLogitBound), Cwise::Tanh),
                      kScaleLogitBound);
        out.scales = t.cwise(raw, Cwise::Softplus);
    }
    return out;
}

/// Normalized composed diffusion (Delta_in)^T Delta_out applied to z.
/// Exploits conformality: diagonal blocks of the normalized operators are
/// exactly the identity on nonzero-degree nodes, and the per-arc coupling
/// reduces to scalar coefficients times R_i^T Q_j.
Var build_diffusion(Tape& t, const ModelConfig& cfg, const DirectedGraph& g,
                    const PredictedMaps& src, const PredictedMaps& tgt, Var z) {
    const int d = cfg.stalk_dim;
    const Eigen::VectorXd isd = inv_sqrt_degrees(g);
    const Eigen::VectorXd mask = degree_mask(g);
    Var isd_col = t.constant(isd);

    // Delta_out: row coefficient cT_i / (cS_i sqrt(deg_i)), column 1/sqrt(deg_j)
    Var u = t.hadamard(t.cwise_div(tgt.scales, src.scales), isd_col);
    Var a = t.per_node_map(src.orthogonal, z, d, false);
    a = t.const_block_scale(a, isd, d);
    a = t.neighbor_sum(g, a, d);
    a = t.per_node_map(tgt.orthogonal, a, d, true);
    a = t.block_scale(u, a, d);
    Var y = t.sub(t.const_block_scale(z, mask, d), a);

    // (Delta_in)^T: row coefficient 1/sqrt(deg_i), column cS_j / (cT_j sqrt(deg_j))
    Var w = t.hadamard(t.cwise_div(src.scales, tgt.scales), isd_col);
    Var b = t.per_node_map(src.orthogonal, y, d, false);
    b = t.block_scale(w, b, d);
    b = t.neighbor_sum(g, b, d);
    b = t.per_node_map(tgt.orthogonal, b, d, true);
    b = t.const_block_scale(b, isd, d);
    return t.sub(t.const_block_scale(y, mask, d), b);
}

}  // namespace

Var Model::forward(Tape& t, const ParameterStore& store, const DirectedGraph& g,
                   const Eigen::MatrixXd& raw, bool training, Rng* dropout_rng,
                   std::map<std::string, Var>* param_vars) const {
    cfg.validate();
    const int n = g.num_nodes;
    const int d = cfg.stalk_dim;
    const int h = cfg.hidden_channels;
    if (raw.rows() != n || raw.cols() != cfg.input_dim)
        throw std::invalid_argument("forward: raw feature shape mismatch");
    ParamLookup param{t, store, param_vars, {}};

    Var x = t.constant(raw);
    if (training && cfg.input_dropout > 0.0) {
        if (!dropout_rng) throw std::invalid_argument("dropout requires an rng");
        x = t.const_mul(x, dropout_mask(n, cfg.input_dim, cfg.input_dropout,
                                        *dropout_rng));
    }
    x = t.cwise(t.add_bias(t.matmul(x, param("encoder.W")), param("encoder.b")),
                to_cwise(cfg.activation));
    x = t.rows_to_blocks(x, n, d, h);

    const Cwise act = to_cwise(cfg.activation);
    for (int l = 0; l < cfg.num_layers; ++l) {
        const std::string p = "layer" + std::to_string(l) + ".";
        if (training && cfg.dropout > 0.0)
            x = t.const_mul(x, dropout_mask(n * d, h, cfg.dropout, *dropout_rng));
        Var rows = t.blocks_to_rows(x, n, d, h);
        PredictedMaps src = build_predictor(t, cfg, param, p + "src.", rows, g);
        PredictedMaps tgt = build_predictor(t, cfg, param, p + "tgt.", rows, g);
        Var z = x;
        if (cfg.left_weights) z = t.kron_left(param(p + "W1"), z, n, d);
        if (cfg.right_weights) z = t.matmul(z, param(p + "W2"));
        Var diff = t.cwise(build_diffusion(t, cfg, g, src, tgt, z), act);
        if (cfg.epsilon_learnable) {
            Var eps = t.cwise(param(p + "eps_raw"), Cwise::Tanh);
            x = t.sub(t.add(x, t.block_scale(eps, x, 1)), diff);
        } else {
            x = t.sub(x, diff);
        }
        if (cfg.layer_norm)
            x = t.rows_to_blocks(t.layer_norm(t.blocks_to_rows(x, n, d, h)),
                                 n, d, h);
    }
    Var rows = t.blocks_to_rows(x, n, d, h);
    return t.add_bias(t.matmul(rows, param("readout.W")), param("readout.b"));
}

Eigen::MatrixXd Model::logits(const ParameterStore& store, const DirectedGraph& g,
                              const Eigen::MatrixXd& raw) const {
    Tape t;
    Var out = forward(t, store, g, raw);
    return t.value(out);
}

DirectedSheaf Model::predict_maps(const ParameterStore& store, int layer,
                                  const Eigen::MatrixXd& x,
                                  const DirectedGraph& g) const {
    Tape t;
    ParamLookup param{t, store, nullptr, {}};
    const int n = g.num_nodes;
    const int d = cfg.stalk_dim;
    Var xv = t.constant(x);
    Var rows = t.blocks_to_rows(xv, n, d, cfg.hidden_channels);
    const std::string p = "layer" + std::to_string(layer) + ".";
    PredictedMaps src = build_predictor(t, cfg, param, p + "src.", rows, g);
    PredictedMaps tgt = build_predictor(t, cfg, param, p + "tgt.", rows, g);
    DirectedSheaf sheaf;
    sheaf.dimension = d;
    sheaf.maps.resize(n);
    const auto& qs = t.value(src.orthogonal);
    const auto& qt = t.value(tgt.orthogonal);
    const auto& cs = t.value(src.scales);
    const auto& ct = t.value(tgt.scales);
    for (int i = 0; i < n; ++i) {
        sheaf.maps[i].source = {cs(i, 0), qs.middleRows(i * d, d)};
        sheaf.maps[i].target = {ct(i, 0), qt.middleRows(i * d, d)};
    }
    return sheaf;
}

Eigen::MatrixXd Model::encode_input(const ParameterStore& store,
                                    const Eigen::MatrixXd& raw) const {
    Tape t;
    ParamLookup param{t, store, nullptr, {}};
    const int n = static_cast<int>(raw.rows());
    Var x = t.cwise(
        t.add_bias(t.matmul(t.constant(raw), param("encoder.W")), param("encoder.b")),
        to_cwise(cfg.activation));
    return t.value(t.rows_to_blocks(x, n, cfg.stalk_dim, cfg.hidden_channels));
}

Eigen::MatrixXd Model::readout(const ParameterStore& store,
                               const Eigen::MatrixXd& x_final) const {
    Tape t;
    ParamLookup param{t, store, nullptr, {}};
    const int n = static_cast<int>(x_final.rows()) / cfg.stalk_dim;
    Var rows = t.blocks_to_rows(t.constant(x_final), n, cfg.stalk_dim,
                                cfg.hidden_channels);
    return t.value(t.add_bias(t.matmul(rows, param("readout.W")), param("readout.b")));
}

namespace {

Eigen::MatrixXd csnn_layer_impl(const Eigen::MatrixXd& x, const DirectedSheaf& sheaf,
                                const DirectedGraph& g, const LayerParams& lp,
                                const ModelConfig& cfg, bool normalized) {
    const int d = sheaf.dimension;
    const int n = g.num_nodes;
    Eigen::MatrixXd z = x;
    if (cfg.left_weights) {
        for (int i = 0; i < n; ++i)
            z.middleRows(i * d, d) = lp.w1 * z.middleRows(i * d, d);
    }
    if (cfg.right_weights) z = z * lp.w2;
    BlockOperator out = build_out(sheaf, g);
    BlockOperator in_t = build_in_transpose(sheaf, g);
    if (normalized) {
        out = normalize(out);
        in_t = normalize(in_t);
    }
    Eigen::MatrixXd diff =
        ad::cwise_forward(compose_apply(in_t, out, z), to_cwise(cfg.activation));
    Eigen::MatrixXd next = x - diff;
    for (int r = 0; r < next.rows(); ++r) next.row(r) += lp.epsilon(r) * x.row(r);
    if (cfg.layer_norm) {
        for (int i = 0; i < n; ++i) {
            auto block = next.middleRows(i * d, d);
            const double mu = block.mean();
            const double var = (block.array() - mu).square().mean();
            block = ((block.array() - mu) / std::sqrt(var + 1e-5)).matrix();
        }
    }
    return next;
}

}  // namespace

Eigen::MatrixXd csnn_layer(const Eigen::MatrixXd& x, const DirectedSheaf& sheaf,
                           const DirectedGraph& g, const LayerParams& lp,
                           const ModelConfig& cfg) {
    return csnn_layer_impl(x, sheaf, g, lp, cfg, true);
}

Eigen::MatrixXd csnn_layer_unnormalized(const Eigen::MatrixXd& x,
                                        const DirectedSheaf& sheaf,
                                        const DirectedGraph& g,
                                        const LayerParams& lp,
                                        const ModelConfig& cfg) {
    return csnn_layer_impl(x, sheaf, g, lp, cfg, false);
}

Eigen::MatrixXd gcn_layer(const Eigen::MatrixXd& x, const DirectedGraph& g,
                          const Eigen::MatrixXd& w, Activation act) {
    const Eigen::VectorXd isd = inv_sqrt_degrees(g, 1);
    Eigen::MatrixXd scaled = isd.asDiagonal() * x;
    Eigen::MatrixXd agg = scaled;
    for (int i = 0; i < g.num_nodes; ++i)
        for (int j : g.neighbors[i]) agg.row(i) += scaled.row(j);
    agg = isd.asDiagonal() * agg;
    return ad::cwise_forward(agg * w, to_cwise(act));
}

void GcnModel::init_params(ParameterStore& store, std::uint64_t seed) const {
    Rng rng(seed);
    store.add("gcn.W0", gaussian_matrix(input_dim, hidden,
                                        std::sqrt(2.0 / input_dim), rng));
    store.add("gcn.b0", Eigen::MatrixXd::Zero(1, hidden));
    for (int l = 1; l < layers; ++l) {
        store.add("gcn.W" + std::to_string(l),
                  gaussian_matrix(hidden, hidden, std::sqrt(2.0 / hidden), rng));
        store.add("gcn.b" + std::to_string(l), Eigen::MatrixXd::Zero(1, hidden));
    }
    store.add("gcn.Wout", gaussian_matrix(hidden, num_classes,
                                          1.0 / std::sqrt(hidden), rng));
    store.add("gcn.bout", Eigen::MatrixXd::Zero(1, num_classes));
}

Var GcnModel::forward(Tape& t, const ParameterStore& store, const DirectedGraph& g,
                      const Eigen::MatrixXd& raw,
                      std::map<std::string, Var>* param_vars) const {
    ParamLookup param{t, store, param_vars, {}};
    const Eigen::VectorXd isd = inv_sqrt_degrees(g, 1);
    Var x = t.constant(raw);
    for (int l = 0; l < layers; ++l) {
        const std::string ls = std::to_string(l);
        Var scaled = t.const_block_scale(x, isd, 1);
        Var agg = t.const_block_scale(t.add(t.neighbor_sum(g, scaled, 1), scaled),
                                      isd, 1);
        x = t.cwise(t.add_bias(t.matmul(agg, param("gcn.W" + ls)),
                               param("gcn.b" + ls)),
                    Cwise::Relu);
    }
    return t.add_bias(t.matmul(x, param("gcn.Wout")), param("gcn.bout"));
}

}  // namespace csnn
