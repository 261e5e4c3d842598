#include "csnn/serialize.hpp"

#include <fstream>
#include <stdexcept>

namespace csnn {

using nlohmann::json;

json model_config_to_json(const ModelConfig& cfg) {
    json j;
    j["stalk_dim"] = cfg.stalk_dim;
    j["hidden_channels"] = cfg.hidden_channels;
    j["num_layers"] = cfg.num_layers;
    j["activation"] = activation_name(cfg.activation);
    j["left_weights"] = cfg.left_weights;
    j["right_weights"] = cfg.right_weights;
    j["map_predictor"] = cfg.map_predictor == MapPredictor::Mlp2 ? "mlp2" : "meanagg";
    j["gnn_layers"] = cfg.gnn_layers;
    j["gnn_dim"] = cfg.gnn_dim;
    j["dsn_mode"] = cfg.dsn_mode;
    j["dropout"] = cfg.dropout;
    j["input_dropout"] = cfg.input_dropout;
    j["epsilon_learnable"] = cfg.epsilon_learnable;
    j["layer_norm"] = cfg.layer_norm;
    j["reflections"] = cfg.reflections;
    j["input_dim"] = cfg.input_dim;
    j["num_classes"] = cfg.num_classes;
    return j;
}

ModelConfig model_config_from_json(const json& j) {
    ModelConfig cfg;
    auto get = [&](const char* key, auto& field) {
        if (j.contains(key)) field = j.at(key).template get<std::decay_t<decltype(field)>>();
    };
    get("stalk_dim", cfg.stalk_dim);
    get("hidden_channels", cfg.hidden_channels);
    get("num_layers", cfg.num_layers);
    if (j.contains("activation"))
        cfg.activation = activation_from_string(j.at("activation").get<std::string>());
    get("left_weights", cfg.left_weights);
    get("right_weights", cfg.right_weights);
    if (j.contains("map_predictor")) {
        const std::string p = j.at("map_predictor").get<std::string>();
        if (p == "mlp2")
            cfg.map_predictor = MapPredictor::Mlp2;
        else if (p == "meanagg")
            cfg.map_predictor = MapPredictor::MeanAgg;
        else
            throw std::invalid_argument("unknown map_predictor: " + p);
    }
    get("gnn_layers", cfg.gnn_layers);
    get("gnn_dim", cfg.gnn_dim);
    get("dsn_mode", cfg.dsn_mode);
    get("dropout", cfg.dropout);
    get("input_dropout", cfg.input_dropout);
    get("epsilon_learnable", cfg.epsilon_learnable);
    get("layer_norm", cfg.layer_norm);
    get("reflections", cfg.reflections);
    get("input_dim", cfg.input_dim);
    get("num_classes", cfg.num_classes);
    return cfg;
}

void save_checkpoint(const std::string& path, const ModelConfig& cfg,
                     const ParameterStore& store) {
    json j;
    j["format"] = "csnn-checkpoint";
    j["version"] = 1;
    j["config"] = model_config_to_json(cfg);
    json params = json::object();
    for (const auto& [name, e] : store.entries) {
        json t;
        t["rows"] = e.value.rows();
        t["cols"] = e.value.cols();
        json data = json::array();
        for (Eigen::Index r = 0; r < e.value.rows(); ++r)
            for (Eigen::Index c = 0; c < e.value.cols(); ++c)
                data.push_back(e.value(r, c));
        t["data"] = std::move(data);
        params[name] = std::move(t);
    }
    j["params"] = std::move(params);
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << j.dump();
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);
    json j;
    in >> j;
    if (j.value("format", "") != "csnn-checkpoint")
        throw std::runtime_error(path + ": not a checkpoint file");
    if (j.value("version", 0) != 1)
        throw std::runtime_error(path + ": unsupported checkpoint version");
    Checkpoint ck;
    ck.config = model_config_from_json(j.at("config"));
    for (const auto& [name, t] : j.at("params").items()) {
        const int rows = t.at("rows").get<int>();
        const int cols = t.at("cols").get<int>();
        const auto& data = t.at("data");
        if (static_cast<int>(data.size()) != rows * cols)
            throw std::runtime_error(path + ": tensor size mismatch for " + name);
        Eigen::MatrixXd m(rows, cols);
        int idx = 0;
        for (int r = 0; r < rows; ++r)
            for (int c = 0; c < cols; ++c) m(r, c) = data[idx++].get<double>();
        ck.params.add(name, std::move(m));
    }
    return ck;
}

}  // namespace csnn
