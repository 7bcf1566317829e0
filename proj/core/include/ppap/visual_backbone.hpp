#pragma once

#include <vector>

#include "ppap/autodiff.hpp"
#include "ppap/geometry.hpp"
#include "ppap/nn.hpp"

namespace ppap {

/// Three stride-2 conv blocks: input (3, H, W) -> (C_feat, H/8, W/8).
struct ImageEncoder {
    Conv2dLayer c1, c2, c3;
    int c_feat = 0;
    ImageEncoder() = default;
    ImageEncoder(ParamStore& ps, const std::string& name, int c_feat, RngStream& rng);
    Var forward(const Var& image) const;
};

Var encode_image(const Var& image, const ImageEncoder& enc);

/// Bias-free 1x1 projection C_feat -> C_emb followed by row L2 normalization;
/// output rows are the per-pixel embeddings, (H'*W', C_emb).
struct PixelProjection {
    Var w;
    PixelProjection() = default;
    PixelProjection(ParamStore& ps, const std::string& name, int c_feat, int c_emb,
                    RngStream& rng);
};

Var project_pixels(const Var& feature_map, const PixelProjection& proj);

/// Keypoint prediction head: concat(F_vis, S) -> two x2 deconv blocks -> 1x1
/// conv to K channels. Output spatial size is 4x the feature grid.
struct PredictionHead {
    ConvT2dLayer up1, up2;
    Conv2dLayer out;
    PredictionHead() = default;
    PredictionHead(ParamStore& ps, const std::string& name, int c_feat, int n_keypoints,
                   int c_mid, RngStream& rng);
};

Var head_forward(const Var& feature_map, const Var& score_map, const PredictionHead& head);

struct HeatmapTarget {
    Tensor heatmaps;  // (K, H_t, W_t)
    Tensor weights;   // (K), {0,1}
};

/// Unnormalized Gaussian bumps with amplitude 1 centered at the exact keypoint
/// position; keypoints are given in input-image pixels, sigma_px likewise.
HeatmapTarget make_target_heatmap(const std::vector<Keypoint>& keypoints, int grid_h, int grid_w,
                                  int input_h, int input_w, double sigma_px);

struct DecodedKeypoint {
    double x = 0.0, y = 0.0;  // input-image pixels
    double score = 0.0;
};

/// Argmax cell (ties to the smallest row-major index), quarter-cell shift
/// toward the larger neighbor per axis, then scaled back to input pixels.
std::vector<DecodedKeypoint> decode_keypoints(const Tensor& heatmaps, int input_h, int input_w);

}  // namespace ppap
