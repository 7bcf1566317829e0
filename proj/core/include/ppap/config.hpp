#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace ppap {

/// Everything tunable, grouped the way the JSON config file is. Desk-scale
/// defaults; paper_scale() restores the full-size schedule.
struct TrainConfig {
    struct Model {
        int n_attributes = 2;     // templates per keypoint
        int n_samples = 2;        // sampled prompt sets per forward
        int template_length = 8;  // learnable tokens per template
        int token_width = 64;
        int embed_width = 64;
        int feature_channels = 32;
        int head_channels = 32;
        bool randomize_placement = true;  // keypoint-name slot drawn per template
        double sigma_cells = 2.0;         // target bump width, in target-grid cells
        uint64_t init_seed = 7;
    } model;

    struct Loss {
        double gamma = 5e-4;
        double beta = 1e-5;
        bool use_diversity = true;
        bool use_kl = true;
    } loss;

    struct Fusion {
        std::string strategy = "ensemble";  // heuristic | ensemble | attention
        int attention_layers = 2;
    } fusion;

    struct Data {
        std::string type = "synthetic";  // synthetic | coco
        std::string path;                // annotations.json for coco
        int input_size = 64;             // crop fed to the model
        int image_size = 96;             // synthetic canvas
        std::vector<std::string> species = {"quad-A", "quad-B"};
        int n_per_species = 16;
        double noise_level = 0.05;
        double crop_padding = 1.25;
        uint64_t seed = 11;
    } data;

    struct Aug {
        bool enabled = true;
        double rotation_max_deg = 40.0;
        double scale_lo = 0.5;
        double scale_hi = 1.5;
        double flip_prob = 0.5;
    } aug;

    struct Train {
        int batch_size = 16;
        int epochs = 250;
        int max_steps = 0;  // 0 = run the full epoch schedule
        double lr = 3e-4;
        double weight_decay = 2.5e-5;
        std::vector<int> lr_milestones = {170, 200};
        double lr_drop = 0.1;
        uint64_t seed = 1;
        int eval_interval = 25;  // epochs between train-set evals
        bool freeze_text_encoder = true;
    } train;

    struct Eval {
        double alpha = 0.05;
        double kappa = 0.08;
        int stochastic_samples = 0;  // 0 = deterministic (use means)
    } eval;

    void validate() const;
    void apply_paper_scale();

    static TrainConfig from_json_file(const std::string& path);
    static TrainConfig from_json_text(const std::string& text);
    std::string to_json_text() const;
};

double lr_for_epoch(const TrainConfig& cfg, int epoch);

}  // namespace ppap
