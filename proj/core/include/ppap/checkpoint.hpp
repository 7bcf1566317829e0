#pragma once

#include <array>
#include <string>

#include "ppap/model.hpp"

namespace ppap {

/// Binary checkpoint: config snapshot, vocabulary, epoch, rng state, the
/// frozen-encoder fingerprint, and every learnable tensor by name. Reloading
/// reproduces forward outputs bit-identically.
void save_checkpoint(const std::string& path, const PpapModel& model, const TrainConfig& cfg,
                     int epoch, const std::array<uint64_t, 4>& rng_state);

struct LoadedCheckpoint {
    TrainConfig config;
    PpapModel model;
    int epoch = 0;
    std::array<uint64_t, 4> rng_state{};
};

LoadedCheckpoint load_checkpoint(const std::string& path);

}  // namespace ppap
