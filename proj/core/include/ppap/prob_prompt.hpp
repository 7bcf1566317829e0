#pragma once

#include <vector>

#include "ppap/autodiff.hpp"
#include "ppap/nn.hpp"
#include "ppap/prompt_bank.hpp"

namespace ppap {

inline constexpr double kSigmaFloor = 1e-4;

/// Encoded prompt embeddings, keypoint-major rows: row (k * n_attributes + t).
struct PromptEmbeddings {
    Var full;      // (K*N_p, C_emb), names included
    Var agnostic;  // (K*N_p, C_emb), attribute tokens only
    int n_keypoints = 0;
    int n_attributes = 0;
};

PromptEmbeddings encode_prompt_set(const PromptSet& set, const KeypointVocab& vocab,
                                   const TextEncoderState& enc);

/// (1/K) sum_i || normalize(P~_i) normalize(P~_i)^T - I ||_F^2.
/// Throws on a zero-norm attribute row.
Var diversity_loss(const Var& agnostic, int n_keypoints, int n_attributes);

/// Self-attention text decoder producing distribution means; attention runs
/// within each keypoint's attribute group only.
struct TextDecoderState {
    LayerNorm ln_attn, ln_mlp;
    AttentionProj attn;
    Mlp mlp;
    TextDecoderState() = default;
    TextDecoderState(ParamStore& ps, const std::string& name, int width, RngStream& rng);
};

Var decode_means(const Var& prompt_embeddings, int n_keypoints, int n_attributes,
                 const TextDecoderState& dec);

/// Cross-attention visual-text decoder producing strictly positive variances
/// (softplus, floored at kSigmaFloor).
struct VisualTextDecoderState {
    LayerNorm ln_attn, ln_mlp;
    AttentionProj attn;
    Mlp mlp;
    VisualTextDecoderState() = default;
    VisualTextDecoderState(ParamStore& ps, const std::string& name, int width, RngStream& rng);
};

Var decode_variances(const Var& prompt_embeddings, const Var& visual_tokens,
                     const VisualTextDecoderState& dec);

struct PromptDistribution {
    Var mu;     // (K*N_p, C_emb)
    Var sigma;  // (K*N_p, C_emb), > kSigmaFloor
    int n_keypoints = 0;
    int n_attributes = 0;
};

struct SampledPrompts {
    std::vector<Var> samples;   // N_s entries, each (K*N_p, C_emb)
    std::vector<Tensor> noise;  // the epsilon draws, same shapes
};

/// z = mu + eps (.) sigma with eps ~ N(0, I); deterministic under the stream.
SampledPrompts sample_prompts(const PromptDistribution& dist, int n_samples, RngStream& rng);
/// eps = 0 variant used for deterministic evaluation.
SampledPrompts sample_prompts_mean(const PromptDistribution& dist, int n_samples);

/// Closed-form KL(N(mu, sigma^2 I) || N(0, I)) per (keypoint, attribute) row:
/// 0.5 * sum_d (mu_d^2 + sigma_d^2 - ln sigma_d^2 - 1). Shape (K*N_p, 1).
Var kl_to_standard_normal(const PromptDistribution& dist);

/// diversity + (1/N_p) * mean over keypoints of the summed per-attribute KL
Var prompt_loss(const Var& agnostic, const PromptDistribution& dist);

}  // namespace ppap
