// ppap: train and evaluate probabilistic-prompt pose estimation on synthetic
// or COCO-format keypoint data.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "ppap/runner.hpp"

using namespace ppap;
namespace fs = std::filesystem;

namespace {

std::string annotations_path(const std::string& data_dir) {
    const fs::path p(data_dir);
    if (fs::is_directory(p)) return (p / "annotations.json").string();
    return data_dir;
}

std::vector<InstanceRecord> load_records(const std::string& data_dir, int expected_k) {
    CocoData coco = load_coco(annotations_path(data_dir), expected_k);
    return std::move(coco.records);
}

void split_species(const std::string& arg, std::vector<std::string>& out) {
    std::string cur;
    for (char c : arg) {
        if (c == ',') {
            if (!cur.empty()) out.push_back(cur);
            cur.clear();
        } else {
            cur += c;
        }
    }
    if (!cur.empty()) out.push_back(cur);
}

int cmd_synth_data(const std::string& config_path, const std::string& out_dir) {
    TrainConfig cfg = TrainConfig::from_json_file(config_path);
    Dataset ds = make_dataset(cfg);
    write_dataset(out_dir, ds.records, ds.vocab, ds.skeleton, cfg.data.image_size);
    std::printf("wrote %zu instances (%d keypoints each) to %s\n", ds.records.size(),
                ds.vocab.size(), out_dir.c_str());
    return 0;
}

int cmd_train(const std::string& config_path, const std::string& out_dir, bool paper_scale) {
    TrainConfig cfg = TrainConfig::from_json_file(config_path);
    if (paper_scale) cfg.apply_paper_scale();
    cfg.validate();
    Dataset ds = make_dataset(cfg);
    std::printf("training on %zu instances (%d keypoints), fusion=%s, input=%d\n",
                ds.records.size(), ds.vocab.size(), cfg.fusion.strategy.c_str(),
                cfg.data.input_size);
    TrainResult result = train(cfg, ds, out_dir);
    std::printf("ran %d steps over %zu epochs\n", result.steps_run, result.epochs.size());
    if (!result.epochs.empty())
        std::printf("final loss %.6f (pred %.6f spatial %.6f feature %.6f prompt %.6f)\n",
                    result.epochs.back().mean_loss.total, result.epochs.back().mean_loss.pred,
                    result.epochs.back().mean_loss.spatial,
                    result.epochs.back().mean_loss.feature,
                    result.epochs.back().mean_loss.prompt);
    std::printf("best train PCK@%.2f %.4f\n", cfg.eval.alpha, result.best_pck);
    std::printf("checkpoints: %s, %s\n", result.final_checkpoint.c_str(),
                result.best_checkpoint.c_str());
    return 0;
}

int cmd_eval(const std::string& ckpt_path, const std::string& data_dir, double alpha,
             int stochastic) {
    LoadedCheckpoint lc = load_checkpoint(ckpt_path);
    lc.config.eval.alpha = alpha;
    lc.config.eval.stochastic_samples = stochastic;

    std::vector<InstanceRecord> records;
    if (!data_dir.empty()) {
        records = load_records(data_dir, lc.model.vocab.size());
    } else {
        Dataset ds = make_dataset(lc.config);
        if (ds.vocab.size() != lc.model.vocab.size())
            throw std::invalid_argument("eval: dataset vocabulary does not match checkpoint");
        records = std::move(ds.records);
    }
    EvalResult res = evaluate(lc.model, records, lc.config);
    std::printf("%s\n", res.to_json().c_str());
    return 0;
}

int cmd_zero_shot(const std::string& config_path, const std::string& train_arg,
                  const std::string& test_arg, const std::string& out_dir) {
    TrainConfig cfg = TrainConfig::from_json_file(config_path);
    Dataset ds = make_dataset(cfg);
    std::vector<std::string> train_species, test_species;
    split_species(train_arg, train_species);
    split_species(test_arg, test_species);
    ZeroShotReport rep = zero_shot_protocol(cfg, ds, train_species, test_species, out_dir);
    std::printf("%s\n", rep.to_json().c_str());
    return 0;
}

int cmd_plot(const std::string& ckpt_path, long instance_id, const std::string& out_dir,
             const std::string& data_dir) {
    LoadedCheckpoint lc = load_checkpoint(ckpt_path);
    std::vector<InstanceRecord> records;
    std::vector<std::pair<int, int>> skeleton;
    if (!data_dir.empty()) {
        CocoData coco = load_coco(annotations_path(data_dir), lc.model.vocab.size());
        records = std::move(coco.records);
        skeleton = coco.skeleton;
    } else {
        Dataset ds = make_dataset(lc.config);
        records = std::move(ds.records);
        skeleton = ds.skeleton;
    }
    for (const auto& rec : records) {
        if (rec.id != instance_id) continue;
        auto files = plot_outputs(lc.model, rec, skeleton, lc.config, out_dir);
        std::printf("wrote %zu files to %s\n", files.size(), out_dir.c_str());
        return 0;
    }
    std::fprintf(stderr, "instance %ld not found\n", instance_id);
    return 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"probabilistic prompt distributions for multi-species keypoint estimation"};
    app.require_subcommand(1);

    std::string config_path, out_dir, ckpt_path, data_dir, train_arg, test_arg;
    bool paper_scale = false;
    double alpha = 0.05;
    int stochastic = 0;
    long instance_id = 0;

    auto* synth = app.add_subcommand("synth-data", "generate a synthetic dataset on disk");
    synth->add_option("--config", config_path, "config JSON")->required();
    synth->add_option("--out", out_dir, "output directory")->required();

    auto* train_cmd = app.add_subcommand("train", "train a model");
    train_cmd->add_option("--config", config_path, "config JSON")->required();
    train_cmd->add_option("--out", out_dir, "output directory")->required();
    train_cmd->add_flag("--paper-scale", paper_scale,
                        "restore the full-scale schedule (256 input, batch 64, 210 epochs)");

    auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint");
    eval_cmd->add_option("--ckpt", ckpt_path, "checkpoint file")->required();
    eval_cmd->add_option("--data", data_dir, "dataset directory or annotations.json");
    eval_cmd->add_option("--alpha", alpha, "PCK threshold fraction")->default_val(0.05);
    eval_cmd->add_option("--stochastic-eval", stochastic,
                         "average this many sampled inference rounds instead of using means");

    auto* zs = app.add_subcommand("zero-shot", "train on one species set, test on another");
    zs->add_option("--config", config_path, "config JSON")->required();
    zs->add_option("--train-species", train_arg, "comma-separated species")->required();
    zs->add_option("--test-species", test_arg, "comma-separated species")->required();
    zs->add_option("--out", out_dir, "output directory")->default_val("zero_shot_out");

    auto* plot = app.add_subcommand("plot", "render prediction overlays and score maps");
    plot->add_option("--ckpt", ckpt_path, "checkpoint file")->required();
    plot->add_option("--instance", instance_id, "instance id")->required();
    plot->add_option("--out", out_dir, "output directory")->required();
    plot->add_option("--data", data_dir, "dataset directory (defaults to the checkpoint config)");

    CLI11_PARSE(app, argc, argv);

    try {
        if (synth->parsed()) return cmd_synth_data(config_path, out_dir);
        if (train_cmd->parsed()) return cmd_train(config_path, out_dir, paper_scale);
        if (eval_cmd->parsed()) return cmd_eval(ckpt_path, data_dir, alpha, stochastic);
        if (zs->parsed()) return cmd_zero_shot(config_path, train_arg, test_arg, out_dir);
        if (plot->parsed()) return cmd_plot(ckpt_path, instance_id, out_dir, data_dir);
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
