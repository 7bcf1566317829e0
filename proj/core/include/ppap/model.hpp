#pragma once

#include <string>

#include "ppap/config.hpp"
#include "ppap/fusion.hpp"
#include "ppap/objectives.hpp"
#include "ppap/prob_prompt.hpp"
#include "ppap/prompt_bank.hpp"
#include "ppap/visual_backbone.hpp"

namespace ppap {

/// The full assembly: frozen text encoder, learnable prompt bank, the two
/// distribution decoders, visual path, fusion states and prediction head.
/// All learnables live in `params`; the text encoder stays outside it.
struct PpapModel {
    KeypointVocab vocab;
    TextEncoderState text_encoder;
    PromptSet prompts;
    TextDecoderState mean_decoder;
    VisualTextDecoderState var_decoder;
    ImageEncoder image_encoder;
    PixelProjection pixel_proj;
    PredictionHead head;
    EnsembleFusionState ensemble;
    AttentionFusionState attention;
    Var temperature;
    FusionStrategy strategy = FusionStrategy::ensemble;
    ParamStore params;

    int input_size = 0;
    int n_samples = 2;
    int grid_h = 0, grid_w = 0;  // feature grid (input/8)
    double sigma_cells = 2.0;
    uint64_t frozen_fingerprint = 0;

    static PpapModel build(const TrainConfig& cfg, const KeypointVocab& vocab);

    /// encode all K*N_p templates (with and without names)
    PromptEmbeddings encode_templates() const;
    void check_frozen() const;
};

/// Per-step shared text-side state: template embeddings and decoded means
/// (neither depends on the image).
struct StepContext {
    PromptEmbeddings embeddings;
    Var mu;  // (K*N_p, C_emb)
};

StepContext encode_step_context(const PpapModel& model);

enum class SampleMode { stochastic, mean };

struct InstanceForward {
    Var feature_map;  // (C_feat, H', W')
    Var pixel_embed;  // (H'*W', C_emb)
    PromptDistribution dist;
    SampledPrompts sampled;
    ScoreMapStack stack;
    ScoreMap fused;
    Var predicted;  // (K, 4H', 4W')
};

/// heuristic_target is only consulted by heuristic fusion (train mode); pass
/// nullptr for eval-mode averaging. noise_rng must be set for stochastic mode.
InstanceForward model_forward(const PpapModel& model, const StepContext& ctx, const Tensor& image,
                              const HeatmapTarget* heuristic_target, SampleMode mode,
                              RngStream* noise_rng);

}  // namespace ppap
