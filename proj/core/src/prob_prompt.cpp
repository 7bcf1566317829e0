#include "ppap/prob_prompt.hpp"

#include <cmath>
#include <stdexcept>

namespace ppap {

PromptEmbeddings encode_prompt_set(const PromptSet& set, const KeypointVocab& vocab,
                                   const TextEncoderState& enc) {
    PromptEmbeddings out;
    out.n_keypoints = set.n_keypoints;
    out.n_attributes = set.n_attributes;
    std::vector<Var> full, agnostic;
    full.reserve(set.templates.size());
    agnostic.reserve(set.templates.size());
    for (int k = 0; k < set.n_keypoints; ++k)
        for (int t = 0; t < set.n_attributes; ++t) {
            const auto& tpl = set.at(k, t);
            full.push_back(encode_text(render_sequence(tpl, k, vocab, enc), enc));
            agnostic.push_back(encode_text(render_agnostic(tpl), enc));
        }
    out.full = concat_rows(full);
    out.agnostic = concat_rows(agnostic);
    return out;
}

Var diversity_loss(const Var& agnostic, int n_keypoints, int n_attributes) {
    if (n_attributes < 1) throw std::invalid_argument("diversity_loss: n_attributes >= 1");
    if (agnostic.val().dim(0) != n_keypoints * n_attributes)
        throw std::invalid_argument("diversity_loss: row count mismatch");

    Var normalized;
    try {
        normalized = l2_normalize_rows(agnostic, 1e-12);
    } catch (const std::runtime_error&) {
        throw std::runtime_error("diversity_loss: zero-norm attribute row, normalization undefined");
    }

    Var acc;
    for (int k = 0; k < n_keypoints; ++k) {
        Var rows = slice_rows(normalized, k * n_attributes, (k + 1) * n_attributes);
        Var gram = matmul_nt(rows, rows);  // (N_p, N_p)
        Tensor eye({n_attributes, n_attributes});
        for (int i = 0; i < n_attributes; ++i) eye.at(i, i) = 1.0;
        Var dev = sub(gram, Var::constant(std::move(eye)));
        Var frob = sum(square(dev));
        acc = acc.defined() ? add(acc, frob) : frob;
    }
    return scale(acc, 1.0 / n_keypoints);
}

TextDecoderState::TextDecoderState(ParamStore& ps, const std::string& name, int width,
                                   RngStream& rng)
    : ln_attn(ps, name + ".ln_attn", width),
      ln_mlp(ps, name + ".ln_mlp", width),
      attn(ps, name + ".attn", width, rng),
      mlp(ps, name + ".mlp", width, 2 * width, rng) {}

Var decode_means(const Var& prompt_embeddings, int n_keypoints, int n_attributes,
                 const TextDecoderState& dec) {
    if (prompt_embeddings.val().dim(0) != n_keypoints * n_attributes)
        throw std::invalid_argument("decode_means: row count mismatch");
    std::vector<Var> outs;
    outs.reserve(static_cast<size_t>(n_keypoints));
    for (int k = 0; k < n_keypoints; ++k) {
        Var group = slice_rows(prompt_embeddings, k * n_attributes, (k + 1) * n_attributes);
        Var h = dec.ln_attn.forward(group);
        Var sa = dec.attn.forward(h, h);
        Var mb = dec.mlp.forward(dec.ln_mlp.forward(group));
        outs.push_back(add(mb, sa));
    }
    return outs.size() == 1 ? outs[0] : concat_rows(outs);
}

VisualTextDecoderState::VisualTextDecoderState(ParamStore& ps, const std::string& name,
                                               int width, RngStream& rng)
    : ln_attn(ps, name + ".ln_attn", width),
      ln_mlp(ps, name + ".ln_mlp", width),
      attn(ps, name + ".attn", width, rng),
      mlp(ps, name + ".mlp", width, 2 * width, rng) {}

Var decode_variances(const Var& prompt_embeddings, const Var& visual_tokens,
                     const VisualTextDecoderState& dec) {
    if (prompt_embeddings.val().dim(1) != visual_tokens.val().dim(1))
        throw std::invalid_argument("decode_variances: embedding widths differ");
    Var h = dec.ln_attn.forward(prompt_embeddings);
    Var ca = dec.attn.forward(h, visual_tokens);
    Var mb = dec.mlp.forward(dec.ln_mlp.forward(prompt_embeddings));
    Var raw = add(mb, ca);
    return clamp_min(softplus(raw), kSigmaFloor);
}

SampledPrompts sample_prompts(const PromptDistribution& dist, int n_samples, RngStream& rng) {
    if (n_samples < 1) throw std::invalid_argument("sample_prompts: n_samples >= 1");
    SampledPrompts out;
    out.samples.reserve(static_cast<size_t>(n_samples));
    out.noise.reserve(static_cast<size_t>(n_samples));
    for (int s = 0; s < n_samples; ++s) {
        Tensor eps(dist.mu.val().shape());
        for (int64_t i = 0; i < eps.numel(); ++i) eps[i] = rng.normal();
        Var z = add(dist.mu, mul(Var::constant(eps), dist.sigma));
        out.samples.push_back(std::move(z));
        out.noise.push_back(std::move(eps));
    }
    return out;
}

SampledPrompts sample_prompts_mean(const PromptDistribution& dist, int n_samples) {
    SampledPrompts out;
    for (int s = 0; s < n_samples; ++s) {
        out.samples.push_back(dist.mu);
        out.noise.push_back(Tensor::zeros(dist.mu.val().shape()));
    }
    return out;
}

Var kl_to_standard_normal(const PromptDistribution& dist) {
    if (dist.sigma.val().min() <= 0.0)
        throw std::invalid_argument("kl_to_standard_normal: sigma must be positive");
    Var var = square(dist.sigma);
    Var term = sub(add(square(dist.mu), var), log_op(var));
    term = add_scalar(term, -1.0);
    return scale(sum_cols(term), 0.5);  // (K*N_p, 1)
}

Var prompt_loss(const Var& agnostic, const PromptDistribution& dist) {
    Var div = diversity_loss(agnostic, dist.n_keypoints, dist.n_attributes);
    Var kl = kl_to_standard_normal(dist);
    // (1/N_p) * mean over keypoints of sum_t KL == mean over all (i,t) rows
    Var kl_term = mean(kl);
    return add(div, kl_term);
}

}  // namespace ppap
