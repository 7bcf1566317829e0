#include "ppap/objectives.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace ppap {

Var spatial_loss(const ScoreMap& score, const HeatmapTarget& target, bool* no_visible) {
    if (target.heatmaps.dim(1) != 2 * score.grid_h || target.heatmaps.dim(2) != 2 * score.grid_w)
        throw std::invalid_argument("spatial_loss: target must be at 2x the score-map grid");
    int nvis = 0;
    for (int64_t i = 0; i < target.weights.numel(); ++i)
        if (target.weights[i] > 0) ++nvis;
    if (no_visible) *no_visible = (nvis == 0);
    if (nvis == 0) return Var::constant(Tensor::scalar(0.0));
    Var up = resize_bilinear(score.as_chw(), 2 * score.grid_h, 2 * score.grid_w);
    return masked_mse(up, target.heatmaps, target.weights);
}

Var feature_loss(const Var& pixel_embeddings, int grid_h, int grid_w,
                 const Var& prompt_per_keypoint, const std::vector<Keypoint>& keypoints,
                 double stride, const Var& temperature) {
    std::vector<int> visible;
    std::vector<std::pair<double, double>> pts;
    for (size_t i = 0; i < keypoints.size(); ++i) {
        if (!keypoints[i].visible()) continue;
        visible.push_back(static_cast<int>(i));
        pts.emplace_back(keypoints[i].x / stride, keypoints[i].y / stride);
    }
    if (visible.empty()) throw std::runtime_error("feature_loss: no visible keypoints");

    Var sampled = grid_sample_rows(pixel_embeddings, grid_h, grid_w, pts);  // (V, C)
    Var f_keypoint = l2_normalize_rows_stable(sampled);
    Var prompts = gather_rows(prompt_per_keypoint, visible);  // (V, C), already unit rows
    Var logits = mul_scalar_var(matmul_nt(f_keypoint, prompts), temperature);

    Var ce_rows = neg(mean_diag(log_softmax_rows(logits)));
    Var ce_cols = neg(mean_diag(log_softmax_rows(transpose(logits))));
    return scale(add(ce_rows, ce_cols), 0.5);
}

Var pred_loss(const Var& predicted, const HeatmapTarget& target, bool* no_visible) {
    if (!predicted.val().same_shape(target.heatmaps))
        throw std::invalid_argument("pred_loss: prediction/target shapes differ");
    int nvis = 0;
    for (int64_t i = 0; i < target.weights.numel(); ++i)
        if (target.weights[i] > 0) ++nvis;
    if (no_visible) *no_visible = (nvis == 0);
    if (nvis == 0) return Var::constant(Tensor::scalar(0.0));
    return masked_mse(predicted, target.heatmaps, target.weights);
}

Var total_loss(const Var& pred, const Var& spatial, const Var& feature, const Var& prompt,
               double gamma, double beta, LossBreakdown* breakdown) {
    const struct {
        const char* name;
        const Var* v;
    } parts[] = {{"pred", &pred}, {"spatial", &spatial}, {"feature", &feature}, {"prompt", &prompt}};
    for (const auto& p : parts)
        if (!std::isfinite(p.v->val()[0]))
            throw std::runtime_error(std::string("total_loss: non-finite component: ") + p.name);

    Var total = add(add(add(pred, spatial), scale(feature, gamma)), scale(prompt, beta));
    if (breakdown) {
        breakdown->pred = pred.val()[0];
        breakdown->spatial = spatial.val()[0];
        breakdown->feature = feature.val()[0];
        breakdown->prompt = prompt.val()[0];
        breakdown->total = total.val()[0];
        breakdown->gamma = gamma;
        breakdown->beta = beta;
    }
    return total;
}

}  // namespace ppap
