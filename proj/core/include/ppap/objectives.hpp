#pragma once

#include <vector>

#include "ppap/autodiff.hpp"
#include "ppap/fusion.hpp"
#include "ppap/geometry.hpp"
#include "ppap/visual_backbone.hpp"

namespace ppap {

/// Bilinear x2 upsample of the score map, then MSE over the visible keypoint
/// channels (mask from target weights). Target must be rendered at 2x the
/// score-map grid. Returns 0 and sets *no_visible when nothing is supervised.
Var spatial_loss(const ScoreMap& score, const HeatmapTarget& target, bool* no_visible = nullptr);

/// Symmetric InfoNCE-style alignment between keypoint-location pixel features
/// and per-keypoint prompt embeddings (diagonal match target). Keypoints are
/// in input pixels; grid coordinates are pixel coords divided by the stride.
/// Throws when no keypoint is visible.
Var feature_loss(const Var& pixel_embeddings, int grid_h, int grid_w,
                 const Var& prompt_per_keypoint, const std::vector<Keypoint>& keypoints,
                 double stride, const Var& temperature);

/// Masked MSE of the head output against the target at 4x the feature grid.
Var pred_loss(const Var& predicted, const HeatmapTarget& target, bool* no_visible = nullptr);

struct LossBreakdown {
    double pred = 0.0;
    double spatial = 0.0;
    double feature = 0.0;
    double prompt = 0.0;
    double total = 0.0;
    double gamma = 0.0;
    double beta = 0.0;
};

/// total = pred + spatial + gamma*feature + beta*prompt; throws on non-finite
/// parts, naming the first offender.
Var total_loss(const Var& pred, const Var& spatial, const Var& feature, const Var& prompt,
               double gamma, double beta, LossBreakdown* breakdown = nullptr);

}  // namespace ppap
