#include "ppap/fusion.hpp"

#include <cmath>
#include <stdexcept>

namespace ppap {

FusionStrategy fusion_strategy_from_string(const std::string& s) {
    if (s == "heuristic") return FusionStrategy::heuristic;
    if (s == "ensemble") return FusionStrategy::ensemble;
    if (s == "attention") return FusionStrategy::attention;
    throw std::invalid_argument("unknown fusion strategy: " + s);
}

const char* to_string(FusionStrategy s) {
    switch (s) {
        case FusionStrategy::heuristic: return "heuristic";
        case FusionStrategy::ensemble: return "ensemble";
        case FusionStrategy::attention: return "attention";
    }
    return "?";
}

ScoreMapStack score_maps(const SampledPrompts& sampled, const Var& pixel_embeddings,
                         int n_keypoints, int n_attributes, int grid_h, int grid_w,
                         const Var& temperature) {
    if (pixel_embeddings.val().dim(0) != grid_h * grid_w)
        throw std::invalid_argument("score_maps: pixel grid size mismatch");
    ScoreMapStack stack;
    stack.n_keypoints = n_keypoints;
    stack.grid_h = grid_h;
    stack.grid_w = grid_w;
    stack.temperature = temperature;
    for (const Var& z : sampled.samples) {
        if (z.val().dim(1) != pixel_embeddings.val().dim(1))
            throw std::invalid_argument("score_maps: embedding dims differ");
        Var prompts = mean_group_rows(z, n_keypoints, n_attributes);  // (K, C)
        prompts = l2_normalize_rows_stable(prompts);
        Var scores = matmul_nt(prompts, pixel_embeddings);  // (K, H'*W')
        stack.maps.push_back(mul_scalar_var(scores, temperature));
    }
    return stack;
}

ScoreMap fuse_heuristic(const ScoreMapStack& stack, const HeatmapTarget* target) {
    const int ns = static_cast<int>(stack.maps.size());
    const int k = stack.n_keypoints;
    const int span = stack.grid_h * stack.grid_w;
    ScoreMap out{Var(), k, stack.grid_h, stack.grid_w};

    if (target == nullptr) {
        // eval mode: average the sampled maps
        Var acc = stack.maps[0];
        for (int n = 1; n < ns; ++n) acc = add(acc, stack.maps[n]);
        out.map = scale(acc, 1.0 / ns);
        return out;
    }

    // training mode: per keypoint, the sample with minimal MSE to the target
    // channel resized to the score-map grid
    Tensor resized = resize_bilinear_tensor(target->heatmaps, stack.grid_h, stack.grid_w);
    std::vector<Var> rows;
    rows.reserve(static_cast<size_t>(k));
    for (int i = 0; i < k; ++i) {
        int best_n = 0;
        double best_mse = 0.0;
        for (int n = 0; n < ns; ++n) {
            double mse = 0.0;
            for (int s = 0; s < span; ++s) {
                const double d = stack.maps[n].val().at(i, s) -
                                 resized[static_cast<int64_t>(i) * span + s];
                mse += d * d;
            }
            if (n == 0 || mse < best_mse) {
                best_mse = mse;
                best_n = n;
            }
        }
        rows.push_back(slice_rows(stack.maps[best_n], i, i + 1));
    }
    out.map = concat_rows(rows);
    return out;
}

EnsembleFusionState::EnsembleFusionState(ParamStore& ps, const std::string& name,
                                         int n_keypoints, int n_samples) {
    mix = ps.add(name + ".mix",
                 Tensor::full({n_keypoints, n_samples}, 1.0 / static_cast<double>(n_samples)));
    bias = ps.add(name + ".b", Tensor({n_keypoints}));
}

ScoreMap fuse_ensemble(const ScoreMapStack& stack, const EnsembleFusionState& state) {
    if (state.mix.val().dim(1) != static_cast<int>(stack.maps.size()) ||
        state.mix.val().dim(0) != stack.n_keypoints)
        throw std::invalid_argument("fuse_ensemble: mixing kernel does not match N_s*K channels");
    ScoreMap out{grouped_mix(stack.maps, state.mix, state.bias), stack.n_keypoints, stack.grid_h,
                 stack.grid_w};
    return out;
}

AttentionFusionState::AttentionFusionState(ParamStore& ps, const std::string& name,
                                           int n_keypoints, int grid_len, int layers_,
                                           RngStream& rng)
    : layers(layers_) {
    if (layers_ < 1) throw std::invalid_argument("fuse_attention: layer count >= 1");
    query = ps.add(name + ".q", lecun_tensor({n_keypoints, grid_len}, grid_len, rng));
    wq = ps.add(name + ".wq", lecun_tensor({grid_len, grid_len}, grid_len, rng));
    wk = ps.add(name + ".wk", lecun_tensor({grid_len, grid_len}, grid_len, rng));
    wv = ps.add(name + ".wv", lecun_tensor({grid_len, grid_len}, grid_len, rng));
    wa = ps.add(name + ".wa", lecun_tensor({grid_len, grid_len}, grid_len, rng));
}

ScoreMap fuse_attention(const ScoreMapStack& stack, const AttentionFusionState& state) {
    const int ns = static_cast<int>(stack.maps.size());
    const int k = stack.n_keypoints;
    const int span = stack.grid_h * stack.grid_w;
    if (state.query.val().dim(1) != span)
        throw std::invalid_argument("fuse_attention: query length does not match grid");

    const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(span));
    std::vector<Var> rows;
    rows.reserve(static_cast<size_t>(k));
    for (int i = 0; i < k; ++i) {
        std::vector<Var> flat;
        flat.reserve(static_cast<size_t>(ns));
        for (int n = 0; n < ns; ++n) flat.push_back(slice_rows(stack.maps[n], i, i + 1));
        Var keys_values = concat_rows(flat);  // (N_s, H'*W')

        Var q_cur = slice_rows(state.query, i, i + 1);  // (1, H'*W')
        for (int layer = 0; layer < state.layers; ++layer) {
            Var q = matmul(q_cur, state.wq);
            Var kk = matmul(keys_values, state.wk);
            Var vv = matmul(keys_values, state.wv);
            Var att = softmax_rows(scale(matmul_nt(q, kk), inv_sqrt));  // (1, N_s)
            q_cur = add(q, matmul(matmul(att, vv), state.wa));
        }
        rows.push_back(q_cur);
    }
    return {concat_rows(rows), k, stack.grid_h, stack.grid_w};
}

}  // namespace ppap
