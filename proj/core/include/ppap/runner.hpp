#pragma once

#include <string>
#include <vector>

#include "ppap/checkpoint.hpp"
#include "ppap/config.hpp"
#include "ppap/data.hpp"
#include "ppap/metrics.hpp"
#include "ppap/model.hpp"

namespace ppap {

struct Dataset {
    std::vector<InstanceRecord> records;
    KeypointVocab vocab;
    std::vector<std::pair<int, int>> skeleton;
};

/// Synthetic generation or COCO ingestion, per cfg.data.
Dataset make_dataset(const TrainConfig& cfg);

struct EpochLog {
    int epoch = 0;
    double lr = 0.0;
    LossBreakdown mean_loss;
};

struct TrainResult {
    std::string final_checkpoint;
    std::string best_checkpoint;
    std::vector<EpochLog> epochs;
    double best_pck = 0.0;
    int steps_run = 0;
};

/// Full schedule on a freshly built model; writes final/best checkpoints and a
/// JSON-lines metrics log under out_dir.
TrainResult train(const TrainConfig& cfg, const Dataset& data, const std::string& out_dir);
TrainResult train_model(PpapModel& model, const TrainConfig& cfg, const Dataset& data,
                        const std::string& out_dir);

/// Deterministic inference (means; heuristic fusion averages) unless
/// cfg.eval.stochastic_samples asks for sampled-and-averaged rounds.
EvalResult evaluate(const PpapModel& model, const std::vector<InstanceRecord>& records,
                    const TrainConfig& cfg);

/// Prediction for one instance: decoded keypoints in original-image pixels.
std::vector<DecodedPoint> predict_instance(const PpapModel& model, const InstanceRecord& rec,
                                           const TrainConfig& cfg);

struct ZeroShotReport {
    std::string train_label, test_label;
    EvalResult train_species;
    EvalResult test_species;
    std::string to_json() const;
};

/// Trains only on train_species, evaluates both sides separately. Overlapping
/// species lists are rejected.
ZeroShotReport zero_shot_protocol(const TrainConfig& cfg, const Dataset& data,
                                  const std::vector<std::string>& train_species,
                                  const std::vector<std::string>& test_species,
                                  const std::string& out_dir);

/// Writes the prediction overlay plus fused and per-sample score-map images;
/// returns the file paths (1 + K + K*N_s of them).
std::vector<std::string> plot_outputs(const PpapModel& model, const InstanceRecord& rec,
                                      const std::vector<std::pair<int, int>>& skeleton,
                                      const TrainConfig& cfg, const std::string& out_dir);

}  // namespace ppap
