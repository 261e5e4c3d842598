#pragma once

#include <Eigen/Dense>
#include <map>
#include <string>

#include "csnn/autodiff.hpp"
#include "csnn/block_operator.hpp"
#include "csnn/graph.hpp"
#include "csnn/rng.hpp"
#include "csnn/sheaf.hpp"

namespace csnn {

enum class Activation { Identity, Relu, Gelu };
enum class MapPredictor { Mlp2, MeanAgg };

Activation activation_from_string(const std::string& s);
const char* activation_name(Activation a);

struct ModelConfig {
    int stalk_dim = 2;        // d
    int hidden_channels = 32; // h
    int num_layers = 2;       // L
    Activation activation = Activation::Gelu;
    bool left_weights = true;   // W1
    bool right_weights = true;  // W2
    MapPredictor map_predictor = MapPredictor::Mlp2;
    int gnn_layers = 0;   // mean-aggregation rounds for MeanAgg
    int gnn_dim = 32;     // predictor hidden width
    bool dsn_mode = false;  // freeze all conformal scales to 1
    double dropout = 0.0;
    double input_dropout = 0.0;
    bool epsilon_learnable = true;
    bool layer_norm = false;  // per-node feature normalization after each layer
    int reflections = 0;  // Householder factors per map; 0 means stalk_dim

    int input_dim = 0;    // s, set from the dataset
    int num_classes = 0;  // C, set from the dataset

    int num_reflections() const { return reflections > 0 ? reflections : stalk_dim; }
    void validate() const;  // throws std::invalid_argument
};

/// Named parameter tensors with matching gradient slots and Adam state.
struct ParameterStore {
    struct Entry {
        Eigen::MatrixXd value;
        Eigen::MatrixXd grad;
        Eigen::MatrixXd m;  // Adam first moment
        Eigen::MatrixXd v;  // Adam second moment
    };
    std::map<std::string, Entry> entries;  // ordered, deterministic
    long step_count = 0;

    Eigen::MatrixXd& add(const std::string& name, Eigen::MatrixXd init);
    Entry& at(const std::string& name);
    const Entry& at(const std::string& name) const;
    void zero_grads();
    long num_scalars() const;
};

/// Per-layer diffusion parameters in materialized form, used by the plain
/// (operator-based) layer evaluation and by fixtures.
struct LayerParams {
    Eigen::MatrixXd w1;        // d x d
    Eigen::MatrixXd w2;        // h x h
    Eigen::VectorXd epsilon;   // n*d, entries in [-1, 1]
};

struct Model {
    ModelConfig cfg;

    /// Creates every parameter tensor for a graph with num_nodes nodes.
    void init_params(ParameterStore& store, int num_nodes, std::uint64_t seed) const;

    /// Builds the full forward computation on the tape and returns the
    /// n x C logits variable. param_vars (optional) receives the leaf Var
    /// for every parameter so gradients can be read back after backward().
    ad::Var forward(ad::Tape& tape, const ParameterStore& store,
                    const DirectedGraph& g, const Eigen::MatrixXd& raw,
                    bool training = false, Rng* dropout_rng = nullptr,
                    std::map<std::string, ad::Var>* param_vars = nullptr) const;

    /// Plain logits evaluation (no gradients, dropout off).
    Eigen::MatrixXd logits(const ParameterStore& store, const DirectedGraph& g,
                           const Eigen::MatrixXd& raw) const;

    /// Materializes the sheaf the layer-`layer` predictors emit for
    /// features x ((n*d) x h).
    DirectedSheaf predict_maps(const ParameterStore& store, int layer,
                               const Eigen::MatrixXd& x,
                               const DirectedGraph& g) const;

    /// Encoder output for raw inputs, as a (n*d) x h feature matrix.
    Eigen::MatrixXd encode_input(const ParameterStore& store,
                                 const Eigen::MatrixXd& raw) const;

    /// Readout logits from final features.
    Eigen::MatrixXd readout(const ParameterStore& store,
                            const Eigen::MatrixXd& x_final) const;
};

/// One diffusion step through the block-operator route: X' = (1+eps).X -
/// act((norm in)^T (norm out) (I (x) W1) X W2). Independent of the batched
/// tape implementation; the two are cross-checked in tests.
Eigen::MatrixXd csnn_layer(const Eigen::MatrixXd& x, const DirectedSheaf& sheaf,
                           const DirectedGraph& g, const LayerParams& lp,
                           const ModelConfig& cfg);

/// Same step with the unnormalized Eq. (L_in)^T L_out composition; used by
/// the relay harnesses where exact zero maps make normalization degenerate.
Eigen::MatrixXd csnn_layer_unnormalized(const Eigen::MatrixXd& x,
                                        const DirectedSheaf& sheaf,
                                        const DirectedGraph& g,
                                        const LayerParams& lp,
                                        const ModelConfig& cfg);

/// GCN baseline configuration: `layers` symmetric-normalized convolutions
/// with self-loops, ReLU between layers, linear head to num_classes.
struct GcnModel {
    int input_dim = 0;
    int hidden = 32;
    int layers = 2;
    int num_classes = 0;

    void init_params(ParameterStore& store, std::uint64_t seed) const;
    ad::Var forward(ad::Tape& tape, const ParameterStore& store,
                    const DirectedGraph& g, const Eigen::MatrixXd& raw,
                    std::map<std::string, ad::Var>* param_vars = nullptr) const;
};

/// Single GCN propagation: act(Ahat X W), Ahat the self-loop
/// symmetric-normalized adjacency.
Eigen::MatrixXd gcn_layer(const Eigen::MatrixXd& x, const DirectedGraph& g,
                          const Eigen::MatrixXd& w, Activation act);

Eigen::MatrixXd gaussian_matrix(int rows, int cols, double stddev, Rng& rng);

}  // namespace csnn
