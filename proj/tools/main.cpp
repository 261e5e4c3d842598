#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "csnn/block_operator.hpp"
#include "csnn/datasets.hpp"
#include "csnn/model.hpp"
#include "csnn/serialize.hpp"
#include "csnn/training.hpp"
#include "csnn/verify.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitVerify = 3;

json load_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);
    json j;
    in >> j;
    return j;
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << text;
}

void write_matrix_json(const fs::path& path, const Eigen::MatrixXd& m,
                       const json& meta) {
    json j = meta;
    j["rows"] = m.rows();
    j["cols"] = m.cols();
    json data = json::array();
    for (Eigen::Index r = 0; r < m.rows(); ++r)
        for (Eigen::Index c = 0; c < m.cols(); ++c) data.push_back(m(r, c));
    j["data"] = std::move(data);
    write_text(path, j.dump());
}

csnn::TrainSchedule schedule_from_json(const json& j) {
    csnn::TrainSchedule s;
    if (j.contains("epochs")) s.epochs = j.at("epochs").get<int>();
    if (j.contains("lr")) s.lr = j.at("lr").get<double>();
    if (j.contains("weight_decay")) s.weight_decay = j.at("weight_decay").get<double>();
    if (j.contains("grad_clip")) s.grad_clip = j.at("grad_clip").get<double>();
    if (j.contains("eval_every")) s.eval_every = j.at("eval_every").get<int>();
    if (j.contains("stop_at_train_metric"))
        s.stop_at_train_metric = j.at("stop_at_train_metric").get<double>();
    return s;
}

json schedule_to_json(const csnn::TrainSchedule& s) {
    json j;
    j["epochs"] = s.epochs;
    j["lr"] = s.lr;
    j["weight_decay"] = s.weight_decay;
    j["grad_clip"] = s.grad_clip;
    j["eval_every"] = s.eval_every;
    j["seed"] = s.seed;
    if (s.stop_at_train_metric) j["stop_at_train_metric"] = *s.stop_at_train_metric;
    return j;
}

json result_summary(const csnn::TrainResult& result) {
    json j;
    j["final_train_metric"] = result.final_train_metric;
    j["best_val_metric"] = result.best_val_metric;
    j["test_at_best"] = result.test_at_best;
    j["epochs_recorded"] = result.history.size();
    return j;
}

int run_train(const std::string& config_path, const std::string& data_path,
              int split, std::uint64_t seed, const std::string& out_dir) {
    const json cfg_json = config_path.empty() ? json::object() : load_json_file(config_path);
    csnn::NodeDataset data = csnn::load_graph_json(data_path);
    data.validate();
    if (split < 0 || split >= static_cast<int>(data.splits.size()))
        throw std::runtime_error("split index out of range: " + std::to_string(split));

    csnn::TrainSchedule schedule = schedule_from_json(cfg_json);
    schedule.seed = seed;

    fs::create_directories(out_dir);
    std::ofstream metrics(fs::path(out_dir) / "metrics.jsonl");
    auto on_eval = [&](const csnn::EvalRecord& r) {
        metrics << csnn::eval_record_jsonl(r) << "\n";
    };

    const std::string kind = cfg_json.value("model", "csnn");
    json effective;
    csnn::TrainResult result;
    if (kind == "gcn") {
        csnn::GcnModel model;
        model.input_dim = data.num_features();
        model.num_classes = data.num_classes();
        if (cfg_json.contains("hidden_channels"))
            model.hidden = cfg_json.at("hidden_channels").get<int>();
        if (cfg_json.contains("num_layers"))
            model.layers = cfg_json.at("num_layers").get<int>();
        result = csnn::train_gcn(model, data, split, schedule, on_eval);
        effective = {{"model", "gcn"},
                     {"hidden_channels", model.hidden},
                     {"num_layers", model.layers},
                     {"input_dim", model.input_dim},
                     {"num_classes", model.num_classes}};
    } else if (kind == "csnn") {
        csnn::Model model;
        model.cfg = csnn::model_config_from_json(cfg_json);
        model.cfg.input_dim = data.num_features();
        model.cfg.num_classes = data.num_classes();
        model.cfg.validate();
        result = csnn::train(model, data, split, schedule, on_eval);
        effective = csnn::model_config_to_json(model.cfg);
        effective["model"] = "csnn";
        csnn::save_checkpoint((fs::path(out_dir) / "checkpoint.json").string(),
                              model.cfg, result.best_params);
    } else {
        throw std::runtime_error("unknown model kind: " + kind);
    }
    effective["schedule"] = schedule_to_json(schedule);
    effective["data"] = data_path;
    effective["split"] = split;
    write_text(fs::path(out_dir) / "config.json", effective.dump(2));
    write_text(fs::path(out_dir) / "result.json", result_summary(result).dump(2));
    std::cout << result_summary(result).dump() << "\n";
    return 0;
}

int run_laplacian_dump(const std::string& data_path, const std::string& sheaf_arg,
                       const std::string& which, const std::string& out_path) {
    csnn::NodeDataset data = csnn::load_graph_json(data_path);
    const csnn::DirectedGraph& g = data.graph;

    csnn::DirectedSheaf sheaf;
    json meta{{"which", which}, {"data", data_path}, {"sheaf", sheaf_arg}};
    if (sheaf_arg == "trivial") {
        sheaf = csnn::DirectedSheaf::trivial(g.num_nodes);
    } else {
        const csnn::Checkpoint ck = csnn::load_checkpoint(sheaf_arg);
        csnn::Model model;
        model.cfg = ck.config;
        if (model.cfg.input_dim != data.num_features())
            throw std::runtime_error("checkpoint input_dim does not match dataset");
        const Eigen::MatrixXd x = model.encode_input(ck.params, data.features);
        sheaf = model.predict_maps(ck.params, 0, x, g);
    }
    meta["stalk_dim"] = sheaf.dimension;

    Eigen::MatrixXd m;
    if (which == "out") {
        m = csnn::build_out(sheaf, g).dense();
    } else if (which == "in_t") {
        m = csnn::build_in_transpose(sheaf, g).dense();
    } else if (which == "composed") {
        m = csnn::build_in_transpose(sheaf, g).dense() *
            csnn::build_out(sheaf, g).dense();
    } else {
        throw CLI::ValidationError("--which must be one of out, in_t, composed");
    }
    write_matrix_json(out_path, m, meta);
    return 0;
}

std::vector<int> parse_depths(const std::string& spec) {
    std::vector<int> depths;
    const auto dots = spec.find("..");
    if (dots != std::string::npos) {
        const int lo = std::stoi(spec.substr(0, dots));
        const int hi = std::stoi(spec.substr(dots + 2));
        for (int d = lo; d <= hi; ++d) depths.push_back(d);
    } else {
        std::stringstream ss(spec);
        std::string tok;
        while (std::getline(ss, tok, ',')) depths.push_back(std::stoi(tok));
    }
    if (depths.empty()) throw std::runtime_error("empty depth list: " + spec);
    return depths;
}

int run_sweep(const std::string& depths_spec, const std::string& models_spec,
              const std::string& out_dir, std::uint64_t seed, int num_examples,
              int epochs) {
    const std::vector<int> depths = parse_depths(depths_spec);
    std::vector<std::string> models;
    {
        std::stringstream ss(models_spec);
        std::string tok;
        while (std::getline(ss, tok, ',')) models.push_back(tok);
    }
    fs::create_directories(out_dir);

    json curves = json::object();
    for (const std::string& kind : models) {
        json curve = json::array();
        for (int depth : depths) {
            const csnn::NodeDataset data =
                csnn::gen_neighborsmatch(depth, num_examples, seed + depth);
            csnn::TrainSchedule schedule;
            schedule.epochs = epochs;
            schedule.lr = kind == "csnn" ? 0.04 : 0.02;
            schedule.seed = seed + depth;
            schedule.eval_every = 10;
            schedule.stop_at_train_metric = 1.0;

            const fs::path run_dir = fs::path(out_dir) / (kind + "_r" + std::to_string(depth));
            fs::create_directories(run_dir);
            std::ofstream metrics(run_dir / "metrics.jsonl");
            auto on_eval = [&](const csnn::EvalRecord& r) {
                metrics << csnn::eval_record_jsonl(r) << "\n";
            };

            csnn::TrainResult result;
            if (kind == "csnn") {
                csnn::Model model;
                model.cfg.stalk_dim = 2;
                model.cfg.num_layers = depth + 1;
                model.cfg.hidden_channels = 32;
                model.cfg.activation = csnn::Activation::Identity;
                model.cfg.dropout = 0.0;
                model.cfg.input_dropout = 0.0;
                model.cfg.map_predictor = csnn::MapPredictor::MeanAgg;
                model.cfg.gnn_layers = depth + 1;
                model.cfg.gnn_dim = 32;
                model.cfg.layer_norm = true;
                model.cfg.input_dim = data.num_features();
                model.cfg.num_classes = data.num_classes();
                result = csnn::train(model, data, 0, schedule, on_eval);
            } else if (kind == "gcn") {
                csnn::GcnModel model;
                model.input_dim = data.num_features();
                model.num_classes = data.num_classes();
                model.hidden = 32;
                model.layers = depth + 1;
                result = csnn::train_gcn(model, data, 0, schedule, on_eval);
            } else {
                throw std::runtime_error("unknown model kind: " + kind);
            }
            json point = result_summary(result);
            point["depth"] = depth;
            curve.push_back(point);
            std::cout << kind << " r=" << depth
                      << " train_acc=" << result.final_train_metric << "\n";
        }
        curves[kind] = std::move(curve);
    }
    json report{{"depths", depths_spec},
                {"num_examples", num_examples},
                {"epochs", epochs},
                {"seed", seed},
                {"curves", std::move(curves)}};
    write_text(fs::path(out_dir) / "sweep.json", report.dump(2));
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"cooperative sheaf network toolkit"};
    app.require_subcommand(1);

    std::string config_path, data_path, out_path, sheaf_arg = "trivial";
    std::string which = "composed", depths_spec = "2..6", models_spec = "csnn,gcn";
    int split = 0, depth = 3, num_examples = 1000, epochs = 2000;
    std::uint64_t seed = 0;

    auto* train = app.add_subcommand("train", "train a model on a graph dataset");
    train->add_option("--config", config_path, "JSON config (model + schedule)");
    train->add_option("--data", data_path, "graph dataset JSON")->required();
    train->add_option("--split", split, "split index");
    train->add_option("--seed", seed, "rng seed");
    train->add_option("--out", out_path, "output directory")->required();

    auto* dataset = app.add_subcommand("dataset", "dataset generation");
    auto* gen_nm = dataset->add_subcommand("gen-neighborsmatch",
                                           "binary-tree root classification");
    gen_nm->add_option("--depth", depth, "tree depth r")->required();
    gen_nm->add_option("--num-examples", num_examples, "number of trees");
    gen_nm->add_option("--seed", seed, "rng seed");
    gen_nm->add_option("--out", out_path, "output JSON file")->required();

    auto* laplacian = app.add_subcommand("laplacian", "operator dumps");
    auto* dump = laplacian->add_subcommand("dump", "write a dense operator as JSON");
    dump->add_option("--data", data_path, "graph dataset JSON")->required();
    dump->add_option("--sheaf", sheaf_arg, "checkpoint path or 'trivial'");
    dump->add_option("--which", which, "out | in_t | composed");
    dump->add_option("--out", out_path, "output JSON file")->required();

    auto* verify = app.add_subcommand("verify", "verification harnesses");
    auto* props = verify->add_subcommand("props", "proposition property suites");
    props->add_option("--seed", seed, "rng seed");

    auto* sweep = app.add_subcommand("neighborsmatch-sweep",
                                     "depth sweep over the bottleneck task");
    sweep->add_option("--depths", depths_spec, "range a..b or comma list");
    sweep->add_option("--models", models_spec, "comma list of csnn,gcn");
    sweep->add_option("--out", out_path, "output directory")->required();
    sweep->add_option("--seed", seed, "rng seed");
    sweep->add_option("--num-examples", num_examples, "trees per depth");
    sweep->add_option("--epochs", epochs, "max epochs per run");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : kExitUsage;
    }

    try {
        if (train->parsed())
            return run_train(config_path, data_path, split, seed, out_path);
        if (gen_nm->parsed()) {
            const csnn::NodeDataset data =
                csnn::gen_neighborsmatch(depth, num_examples, seed);
            csnn::save_graph_json(data, out_path);
            std::cout << "wrote " << out_path << " (" << data.num_nodes()
                      << " nodes)\n";
            return 0;
        }
        if (dump->parsed())
            return run_laplacian_dump(data_path, sheaf_arg, which, out_path);
        if (props->parsed()) {
            const json report = csnn::verify_props_report(seed);
            std::cout << report.dump(2) << "\n";
            return report.at("all_passed").get<bool>() ? 0 : kExitVerify;
        }
        if (sweep->parsed())
            return run_sweep(depths_spec, models_spec, out_path, seed,
                             num_examples, epochs);
    } catch (const CLI::ValidationError& e) {
        std::cerr << e.what() << "\n";
        return kExitUsage;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitData;
    }
    std::cerr << app.help();
    return kExitUsage;
}
