#pragma once

#include <vector>

#include "ppap/autodiff.hpp"
#include "ppap/nn.hpp"
#include "ppap/prob_prompt.hpp"
#include "ppap/visual_backbone.hpp"

namespace ppap {

enum class FusionStrategy { heuristic, ensemble, attention };

FusionStrategy fusion_strategy_from_string(const std::string& s);
const char* to_string(FusionStrategy s);

/// N_s cosine-similarity score maps, each stored as (K, H'*W') rows.
struct ScoreMapStack {
    std::vector<Var> maps;
    int n_keypoints = 0;
    int grid_h = 0, grid_w = 0;
    Var temperature;  // learnable positive scalar
};

struct ScoreMap {
    Var map;  // (K, H'*W')
    int n_keypoints = 0;
    int grid_h = 0, grid_w = 0;
    Var as_chw() const { return reshape(map, {n_keypoints, grid_h, grid_w}); }
};

/// Per sample: mean the N_p attribute samples per keypoint, L2-normalize and
/// take temperature-scaled inner products with the unit pixel embeddings.
ScoreMapStack score_maps(const SampledPrompts& sampled, const Var& pixel_embeddings,
                         int n_keypoints, int n_attributes, int grid_h, int grid_w,
                         const Var& temperature);

/// Training mode (target != nullptr): per keypoint pick the sample whose map
/// is closest to the target channel in MSE. Eval mode: per-keypoint mean.
ScoreMap fuse_heuristic(const ScoreMapStack& stack, const HeatmapTarget* target);

/// Grouped 1x1 conv across samples; init (uniform 1/N_s, zero bias) makes it
/// an exact per-keypoint average.
struct EnsembleFusionState {
    Var mix;   // (K, N_s)
    Var bias;  // (K)
    EnsembleFusionState() = default;
    EnsembleFusionState(ParamStore& ps, const std::string& name, int n_keypoints, int n_samples);
};

ScoreMap fuse_ensemble(const ScoreMapStack& stack, const EnsembleFusionState& state);

/// Learnable per-keypoint query attending over the flattened sample maps,
/// repeated for `layers` rounds with the previous output as the next query.
struct AttentionFusionState {
    Var query;                  // (K, H'*W')
    Var wq, wk, wv, wa;         // (H'*W', H'*W')
    int layers = 2;
    AttentionFusionState() = default;
    AttentionFusionState(ParamStore& ps, const std::string& name, int n_keypoints, int grid_len,
                         int layers, RngStream& rng);
};

ScoreMap fuse_attention(const ScoreMapStack& stack, const AttentionFusionState& state);

}  // namespace ppap
