#include "ppap/model.hpp"

#include <stdexcept>

namespace ppap {

PpapModel PpapModel::build(const TrainConfig& cfg, const KeypointVocab& vocab_in) {
    cfg.validate();
    PpapModel m;
    m.vocab = vocab_in;
    m.input_size = cfg.data.input_size;
    m.n_samples = cfg.model.n_samples;
    m.grid_h = m.grid_w = cfg.data.input_size / 8;
    m.sigma_cells = cfg.model.sigma_cells;
    m.strategy = fusion_strategy_from_string(cfg.fusion.strategy);

    TextEncoderConfig tec;
    tec.token_width = cfg.model.token_width;
    tec.embed_width = cfg.model.embed_width;
    tec.max_sequence = cfg.model.template_length + 8;
    m.text_encoder = TextEncoderState(m.vocab, tec, cfg.model.init_seed);
    m.frozen_fingerprint = m.text_encoder.fingerprint();

    m.prompts = build_prompt_set(m.vocab, cfg.model.n_attributes, cfg.model.template_length,
                                 cfg.model.init_seed + 1, cfg.model.token_width,
                                 cfg.model.randomize_placement);
    for (int k = 0; k < m.prompts.n_keypoints; ++k)
        for (int t = 0; t < m.prompts.n_attributes; ++t)
            m.params.track("prompts.k" + std::to_string(k) + ".t" + std::to_string(t),
                           m.prompts.at(k, t).tokens);

    RngStream rng(cfg.model.init_seed + 2);
    m.mean_decoder = TextDecoderState(m.params, "mean_dec", cfg.model.embed_width, rng);
    m.var_decoder = VisualTextDecoderState(m.params, "var_dec", cfg.model.embed_width, rng);
    m.image_encoder = ImageEncoder(m.params, "img_enc", cfg.model.feature_channels, rng);
    m.pixel_proj = PixelProjection(m.params, "pix_proj", cfg.model.feature_channels,
                                   cfg.model.embed_width, rng);
    m.head = PredictionHead(m.params, "head", cfg.model.feature_channels, m.vocab.size(),
                            cfg.model.head_channels, rng);
    m.ensemble = EnsembleFusionState(m.params, "fuse_ens", m.vocab.size(), cfg.model.n_samples);
    m.attention = AttentionFusionState(m.params, "fuse_attn", m.vocab.size(),
                                       m.grid_h * m.grid_w, cfg.fusion.attention_layers, rng);
    m.temperature = m.params.add("temperature", Tensor::scalar(10.0));
    return m;
}

PromptEmbeddings PpapModel::encode_templates() const {
    return encode_prompt_set(prompts, vocab, text_encoder);
}

void PpapModel::check_frozen() const {
    if (text_encoder.fingerprint() != frozen_fingerprint)
        throw std::runtime_error("frozen text encoder changed: fingerprint mismatch");
}

StepContext encode_step_context(const PpapModel& model) {
    StepContext ctx;
    ctx.embeddings = model.encode_templates();
    ctx.mu = decode_means(ctx.embeddings.full, model.prompts.n_keypoints,
                          model.prompts.n_attributes, model.mean_decoder);
    return ctx;
}

InstanceForward model_forward(const PpapModel& model, const StepContext& ctx, const Tensor& image,
                              const HeatmapTarget* heuristic_target, SampleMode mode,
                              RngStream* noise_rng) {
    InstanceForward fw;
    fw.feature_map = encode_image(Var::constant(image), model.image_encoder);
    fw.pixel_embed = project_pixels(fw.feature_map, model.pixel_proj);

    fw.dist.mu = ctx.mu;
    fw.dist.sigma = decode_variances(ctx.embeddings.full, fw.pixel_embed, model.var_decoder);
    fw.dist.n_keypoints = model.prompts.n_keypoints;
    fw.dist.n_attributes = model.prompts.n_attributes;

    if (mode == SampleMode::stochastic) {
        if (noise_rng == nullptr)
            throw std::invalid_argument("model_forward: stochastic mode needs an rng");
        fw.sampled = sample_prompts(fw.dist, model.n_samples, *noise_rng);
    } else {
        fw.sampled = sample_prompts_mean(fw.dist, model.n_samples);
    }

    fw.stack = score_maps(fw.sampled, fw.pixel_embed, model.prompts.n_keypoints,
                          model.prompts.n_attributes, model.grid_h, model.grid_w,
                          model.temperature);
    switch (model.strategy) {
        case FusionStrategy::heuristic:
            fw.fused = fuse_heuristic(fw.stack, heuristic_target);
            break;
        case FusionStrategy::ensemble:
            fw.fused = fuse_ensemble(fw.stack, model.ensemble);
            break;
        case FusionStrategy::attention:
            fw.fused = fuse_attention(fw.stack, model.attention);
            break;
    }
    fw.predicted = head_forward(fw.feature_map, fw.fused.as_chw(), model.head);
    return fw;
}

}  // namespace ppap
