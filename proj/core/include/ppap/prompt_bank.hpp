#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "ppap/autodiff.hpp"
#include "ppap/nn.hpp"
#include "ppap/rng.hpp"

namespace ppap {

/// Keypoint name vocabulary plus the whitespace tokenizer derived from it.
/// Token id 0 is reserved for unknown words.
struct KeypointVocab {
    std::vector<std::string> names;
    std::vector<std::pair<int, int>> flip_pairs;
    std::vector<std::vector<int>> name_token_ids;
    std::vector<std::string> words;  // index 1.. are known words

    int size() const { return static_cast<int>(names.size()); }
    int word_count() const { return static_cast<int>(words.size()); }

    static KeypointVocab from_names(std::vector<std::string> names,
                                    std::vector<std::pair<int, int>> flip_pairs);
    /// JSON file with fields `names` (array of strings) and `flip_pairs`
    /// (array of [int,int]).
    static KeypointVocab load_json(const std::string& path);
    void validate() const;
    std::vector<int> tokenize(const std::string& text) const;
};

/// L learnable token vectors plus the slot where keypoint-name tokens get
/// spliced in. The placement is drawn once at construction and stays fixed.
struct AttributeTemplate {
    Var tokens;              // (L, C_tok), learnable
    int placement_index = 0;  // in [0, L]
};

struct PromptSet {
    std::vector<AttributeTemplate> templates;  // K * n_attributes, keypoint-major
    int n_keypoints = 0;
    int n_attributes = 0;
    int template_length = 0;
    int token_width = 0;

    AttributeTemplate& at(int keypoint, int attribute) {
        return templates[static_cast<size_t>(keypoint) * n_attributes + attribute];
    }
    const AttributeTemplate& at(int keypoint, int attribute) const {
        return templates[static_cast<size_t>(keypoint) * n_attributes + attribute];
    }
};

/// Token vectors i.i.d. N(0, 0.02^2); placement uniform over {0..L} when
/// randomize_placement is on, otherwise pinned to L (name appended last).
PromptSet build_prompt_set(const KeypointVocab& vocab, int n_attributes, int template_length,
                           uint64_t rng_seed, int token_width = 64,
                           bool randomize_placement = true);

struct TextEncoderConfig {
    int token_width = 64;   // C_tok
    int embed_width = 64;   // C_emb
    int n_layers = 2;
    int mlp_hidden = 128;
    int max_sequence = 32;
};

/// Frozen toy transformer. All tensors are initialized from the seed and
/// never mutated afterwards; fingerprint() hashes every byte so freezes can
/// be asserted cheaply.
class TextEncoderState {
public:
    TextEncoderState() = default;
    TextEncoderState(const KeypointVocab& vocab, TextEncoderConfig cfg, uint64_t seed);

    const TextEncoderConfig& config() const { return cfg_; }
    uint64_t seed() const { return seed_; }
    uint64_t fingerprint() const;

    /// rows of the embedding table for the given token ids, as a constant
    Tensor embed_tokens(const std::vector<int>& ids) const;

    struct Layer {
        Tensor ln1_g, ln1_b, wq, bq, wk, bk, wv, bv, wo, bo;
        Tensor ln2_g, ln2_b, fc1_w, fc1_b, fc2_w, fc2_b;
    };
    const std::vector<Layer>& layers() const { return layers_; }
    const Tensor& positional() const { return pos_table_; }
    const Tensor& final_norm_gain() const { return ln_f_g_; }
    const Tensor& final_norm_bias() const { return ln_f_b_; }
    const Tensor& output_projection() const { return proj_; }

private:
    TextEncoderConfig cfg_;
    uint64_t seed_ = 0;
    Tensor token_table_;  // (word_count + 1, C_tok)
    Tensor pos_table_;    // (max_sequence, C_tok)
    std::vector<Layer> layers_;
    Tensor ln_f_g_, ln_f_b_;
    Tensor proj_;  // (C_tok, C_emb)
};

/// attribute tokens with the keypoint's name tokens spliced at the placement
/// slot; length = L + name token count
Var render_sequence(const AttributeTemplate& tpl, int keypoint_index, const KeypointVocab& vocab,
                    const TextEncoderState& enc);

/// the L attribute tokens alone
Var render_agnostic(const AttributeTemplate& tpl);

/// frozen transformer forward + mean pooling + output projection; gradients
/// reach only the input rows
Var encode_text(const Var& sequence, const TextEncoderState& enc);

}  // namespace ppap
