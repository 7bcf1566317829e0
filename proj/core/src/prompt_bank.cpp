#include "ppap/prompt_bank.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace ppap {

KeypointVocab KeypointVocab::from_names(std::vector<std::string> names,
                                        std::vector<std::pair<int, int>> flip_pairs) {
    KeypointVocab v;
    v.names = std::move(names);
    v.flip_pairs = std::move(flip_pairs);

    std::set<std::string> unique_words;
    for (const auto& name : v.names) {
        std::istringstream iss(name);
        std::string word;
        while (iss >> word) unique_words.insert(word);
    }
    v.words.assign(unique_words.begin(), unique_words.end());
    for (const auto& name : v.names) v.name_token_ids.push_back(v.tokenize(name));
    v.validate();
    return v;
}

std::vector<int> KeypointVocab::tokenize(const std::string& text) const {
    std::vector<int> ids;
    std::istringstream iss(text);
    std::string word;
    while (iss >> word) {
        const auto it = std::lower_bound(words.begin(), words.end(), word);
        if (it != words.end() && *it == word)
            ids.push_back(static_cast<int>(it - words.begin()) + 1);
        else
            ids.push_back(0);  // reserved unknown-word token
    }
    return ids;
}

void KeypointVocab::validate() const {
    if (names.empty()) throw std::invalid_argument("vocab: needs at least one keypoint name");
    std::set<int> seen;
    for (const auto& [a, b] : flip_pairs) {
        if (a == b) throw std::invalid_argument("vocab: flip pair maps an index to itself");
        if (a < 0 || b < 0 || a >= size() || b >= size())
            throw std::invalid_argument("vocab: flip pair index out of range");
        if (!seen.insert(a).second || !seen.insert(b).second)
            throw std::invalid_argument("vocab: keypoint appears in more than one flip pair");
    }
}

KeypointVocab KeypointVocab::load_json(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("vocab: cannot open " + path);
    nlohmann::json j;
    in >> j;
    if (!j.contains("names")) throw std::runtime_error("vocab: missing field 'names'");
    if (!j.contains("flip_pairs")) throw std::runtime_error("vocab: missing field 'flip_pairs'");
    std::vector<std::string> names = j["names"].get<std::vector<std::string>>();
    std::vector<std::pair<int, int>> pairs;
    for (const auto& p : j["flip_pairs"]) pairs.emplace_back(p[0].get<int>(), p[1].get<int>());
    return from_names(std::move(names), std::move(pairs));
}

PromptSet build_prompt_set(const KeypointVocab& vocab, int n_attributes, int template_length,
                           uint64_t rng_seed, int token_width, bool randomize_placement) {
    if (vocab.size() == 0) throw std::invalid_argument("build_prompt_set: empty vocabulary");
    if (n_attributes < 1) throw std::invalid_argument("build_prompt_set: n_attributes >= 1");
    if (template_length < 1) throw std::invalid_argument("build_prompt_set: template_length >= 1");

    RngStream rng(rng_seed);
    PromptSet set;
    set.n_keypoints = vocab.size();
    set.n_attributes = n_attributes;
    set.template_length = template_length;
    set.token_width = token_width;
    set.templates.reserve(static_cast<size_t>(set.n_keypoints) * n_attributes);
    for (int k = 0; k < set.n_keypoints; ++k) {
        for (int t = 0; t < n_attributes; ++t) {
            AttributeTemplate tpl;
            tpl.tokens = Var::param(randn_tensor({template_length, token_width}, 0.02, rng));
            tpl.placement_index =
                randomize_placement ? rng.uniform_int(template_length + 1) : template_length;
            set.templates.push_back(std::move(tpl));
        }
    }
    return set;
}

namespace {

Tensor sized_lecun(std::vector<int> shape, int fan_in, RngStream& rng) {
    return lecun_tensor(std::move(shape), fan_in, rng);
}

}  // namespace

TextEncoderState::TextEncoderState(const KeypointVocab& vocab, TextEncoderConfig cfg,
                                   uint64_t seed)
    : cfg_(cfg), seed_(seed) {
    RngStream rng(seed ^ 0x7e87a9e31c4f22d1ull);
    const int d = cfg.token_width;
    token_table_ = randn_tensor({vocab.word_count() + 1, d}, 0.02, rng);
    pos_table_ = randn_tensor({cfg.max_sequence, d}, 0.02, rng);
    layers_.resize(static_cast<size_t>(cfg.n_layers));
    for (auto& l : layers_) {
        l.ln1_g = Tensor::full({d}, 1.0);
        l.ln1_b = Tensor({d});
        l.wq = sized_lecun({d, d}, d, rng);
        l.bq = Tensor({d});
        l.wk = sized_lecun({d, d}, d, rng);
        l.bk = Tensor({d});
        l.wv = sized_lecun({d, d}, d, rng);
        l.bv = Tensor({d});
        l.wo = sized_lecun({d, d}, d, rng);
        l.bo = Tensor({d});
        l.ln2_g = Tensor::full({d}, 1.0);
        l.ln2_b = Tensor({d});
        l.fc1_w = sized_lecun({d, cfg.mlp_hidden}, d, rng);
        l.fc1_b = Tensor({cfg.mlp_hidden});
        l.fc2_w = sized_lecun({cfg.mlp_hidden, d}, cfg.mlp_hidden, rng);
        l.fc2_b = Tensor({d});
    }
    ln_f_g_ = Tensor::full({d}, 1.0);
    ln_f_b_ = Tensor({d});
    proj_ = sized_lecun({d, cfg.embed_width}, d, rng);
}

uint64_t TextEncoderState::fingerprint() const {
    uint64_t h = fingerprint_tensor(token_table_);
    h = fingerprint_tensor(pos_table_, h);
    for (const auto& l : layers_) {
        for (const Tensor* t : {&l.ln1_g, &l.ln1_b, &l.wq, &l.bq, &l.wk, &l.bk, &l.wv, &l.bv,
                                &l.wo, &l.bo, &l.ln2_g, &l.ln2_b, &l.fc1_w, &l.fc1_b, &l.fc2_w,
                                &l.fc2_b})
            h = fingerprint_tensor(*t, h);
    }
    h = fingerprint_tensor(ln_f_g_, h);
    h = fingerprint_tensor(ln_f_b_, h);
    return fingerprint_tensor(proj_, h);
}

Tensor TextEncoderState::embed_tokens(const std::vector<int>& ids) const {
    const int d = cfg_.token_width;
    Tensor rows({static_cast<int>(ids.size()), d});
    for (size_t i = 0; i < ids.size(); ++i) {
        if (ids[i] < 0 || ids[i] >= token_table_.dim(0))
            throw std::invalid_argument("text encoder: token id out of range");
        for (int j = 0; j < d; ++j) rows.at(static_cast<int>(i), j) = token_table_.at(ids[i], j);
    }
    return rows;
}

Var render_sequence(const AttributeTemplate& tpl, int keypoint_index, const KeypointVocab& vocab,
                    const TextEncoderState& enc) {
    if (keypoint_index < 0 || keypoint_index >= vocab.size())
        throw std::invalid_argument("render_sequence: keypoint index out of range");
    const int L = tpl.tokens.val().dim(0);
    const int p = tpl.placement_index;
    Var name_rows = Var::constant(enc.embed_tokens(vocab.name_token_ids[keypoint_index]));

    std::vector<Var> parts;
    if (p > 0) parts.push_back(slice_rows(tpl.tokens, 0, p));
    parts.push_back(name_rows);
    if (p < L) parts.push_back(slice_rows(tpl.tokens, p, L));
    return parts.size() == 1 ? parts[0] : concat_rows(parts);
}

Var render_agnostic(const AttributeTemplate& tpl) { return tpl.tokens; }

Var encode_text(const Var& sequence, const TextEncoderState& enc) {
    if (!sequence.defined() || sequence.val().dim(0) == 0)
        throw std::invalid_argument("encode_text: empty sequence");
    const int n = sequence.val().dim(0);
    if (n > enc.config().max_sequence)
        throw std::invalid_argument("encode_text: sequence exceeds positional table");

    const int d = enc.config().token_width;
    Tensor pos({n, d});
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < d; ++j) pos.at(i, j) = enc.positional().at(i, j);

    Var x = add(sequence, Var::constant(std::move(pos)));
    for (const auto& l : enc.layers()) {
        Var h = layer_norm_rows(x, Var::constant(l.ln1_g), Var::constant(l.ln1_b));
        Var q = add_rowvec(matmul(h, Var::constant(l.wq)), Var::constant(l.bq));
        Var k = add_rowvec(matmul(h, Var::constant(l.wk)), Var::constant(l.bk));
        Var v = add_rowvec(matmul(h, Var::constant(l.wv)), Var::constant(l.bv));
        Var att = softmax_rows(scale(matmul_nt(q, k), 1.0 / std::sqrt(static_cast<double>(d))));
        Var sa = add_rowvec(matmul(matmul(att, v), Var::constant(l.wo)), Var::constant(l.bo));
        x = add(x, sa);
        Var h2 = layer_norm_rows(x, Var::constant(l.ln2_g), Var::constant(l.ln2_b));
        Var m = add_rowvec(matmul(h2, Var::constant(l.fc1_w)), Var::constant(l.fc1_b));
        m = gelu(m);
        m = add_rowvec(matmul(m, Var::constant(l.fc2_w)), Var::constant(l.fc2_b));
        x = add(x, m);
    }
    Var pooled = mean_over_rows(x);
    pooled = layer_norm_rows(pooled, Var::constant(enc.final_norm_gain()),
                             Var::constant(enc.final_norm_bias()));
    return matmul(pooled, Var::constant(enc.output_projection()));
}

}  // namespace ppap
