#include "ppap/visual_backbone.hpp"

#include <cmath>
#include <stdexcept>

namespace ppap {

ImageEncoder::ImageEncoder(ParamStore& ps, const std::string& name, int c_feat_, RngStream& rng)
    : c1(ps, name + ".c1", 3, c_feat_ / 2, 3, 2, 1, rng),
      c2(ps, name + ".c2", c_feat_ / 2, c_feat_, 3, 2, 1, rng),
      c3(ps, name + ".c3", c_feat_, c_feat_, 3, 2, 1, rng),
      c_feat(c_feat_) {}

Var ImageEncoder::forward(const Var& image) const {
    Var x = gelu(c1.forward(image));
    x = gelu(c2.forward(x));
    return gelu(c3.forward(x));
}

Var encode_image(const Var& image, const ImageEncoder& enc) {
    if (image.val().ndim() != 3 || image.val().dim(0) != 3)
        throw std::invalid_argument("encode_image: expects a (3, H, W) image");
    return enc.forward(image);
}

PixelProjection::PixelProjection(ParamStore& ps, const std::string& name, int c_feat, int c_emb,
                                 RngStream& rng) {
    w = ps.add(name + ".w", lecun_tensor({c_feat, c_emb}, c_feat, rng));
}

Var project_pixels(const Var& feature_map, const PixelProjection& proj) {
    const int c = feature_map.val().dim(0);
    const int span = feature_map.val().dim(1) * feature_map.val().dim(2);
    Var rows = transpose(reshape(feature_map, {c, span}));  // (H'*W', C_feat)
    return l2_normalize_rows_stable(matmul(rows, proj.w));
}

PredictionHead::PredictionHead(ParamStore& ps, const std::string& name, int c_feat,
                               int n_keypoints, int c_mid, RngStream& rng)
    : up1(ps, name + ".up1", c_feat + n_keypoints, c_mid, 4, 2, 1, rng),
      up2(ps, name + ".up2", c_mid, c_mid, 4, 2, 1, rng),
      out(ps, name + ".out", c_mid, n_keypoints, 1, 1, 0, rng) {}

Var head_forward(const Var& feature_map, const Var& score_map, const PredictionHead& head) {
    if (feature_map.val().dim(1) != score_map.val().dim(1) ||
        feature_map.val().dim(2) != score_map.val().dim(2))
        throw std::invalid_argument("head_forward: feature/score spatial shapes differ");
    const int cf = feature_map.val().dim(0), k = score_map.val().dim(0);
    const int h = feature_map.val().dim(1), w = feature_map.val().dim(2);
    Var cat = concat_rows({reshape(feature_map, {cf, h * w}), reshape(score_map, {k, h * w})});
    Var x = reshape(cat, {cf + k, h, w});
    x = gelu(head.up1.forward(x));
    x = gelu(head.up2.forward(x));
    return head.out.forward(x);
}

HeatmapTarget make_target_heatmap(const std::vector<Keypoint>& keypoints, int grid_h, int grid_w,
                                  int input_h, int input_w, double sigma_px) {
    if (sigma_px <= 0.0) throw std::invalid_argument("make_target_heatmap: sigma_px > 0");
    const int k = static_cast<int>(keypoints.size());
    HeatmapTarget t;
    t.heatmaps = Tensor({k, grid_h, grid_w});
    t.weights = Tensor({k});
    const double sx = static_cast<double>(input_w) / grid_w;
    const double sy = static_cast<double>(input_h) / grid_h;
    const double inv2s2 = 1.0 / (2.0 * sigma_px * sigma_px);
    for (int i = 0; i < k; ++i) {
        if (!keypoints[i].visible()) continue;  // zero channel, zero weight
        t.weights[i] = 1.0;
        for (int r = 0; r < grid_h; ++r) {
            const double cy = (r + 0.5) * sy - 0.5;  // cell center in input pixels
            for (int c = 0; c < grid_w; ++c) {
                const double cx = (c + 0.5) * sx - 0.5;
                const double d2 = (cx - keypoints[i].x) * (cx - keypoints[i].x) +
                                  (cy - keypoints[i].y) * (cy - keypoints[i].y);
                t.heatmaps.at(i, r, c) = std::exp(-d2 * inv2s2);
            }
        }
    }
    return t;
}

std::vector<DecodedKeypoint> decode_keypoints(const Tensor& heatmaps, int input_h, int input_w) {
    const int k = heatmaps.dim(0), h = heatmaps.dim(1), w = heatmaps.dim(2);
    const double sx = static_cast<double>(input_w) / w;
    const double sy = static_cast<double>(input_h) / h;
    std::vector<DecodedKeypoint> out(static_cast<size_t>(k));
    for (int i = 0; i < k; ++i) {
        int br = 0, bc = 0;
        double best = heatmaps.at(i, 0, 0);
        for (int r = 0; r < h; ++r)
            for (int c = 0; c < w; ++c)
                if (heatmaps.at(i, r, c) > best) {
                    best = heatmaps.at(i, r, c);
                    br = r;
                    bc = c;
                }
        double fx = bc, fy = br;
        if (bc > 0 && bc < w - 1) {
            const double dr = heatmaps.at(i, br, bc + 1), dl = heatmaps.at(i, br, bc - 1);
            if (dr > dl) fx += 0.25;
            else if (dr < dl) fx -= 0.25;
        }
        if (br > 0 && br < h - 1) {
            const double dd = heatmaps.at(i, br + 1, bc), du = heatmaps.at(i, br - 1, bc);
            if (dd > du) fy += 0.25;
            else if (dd < du) fy -= 0.25;
        }
        out[static_cast<size_t>(i)] = {(fx + 0.5) * sx - 0.5, (fy + 0.5) * sy - 0.5, best};
    }
    return out;
}

}  // namespace ppap
