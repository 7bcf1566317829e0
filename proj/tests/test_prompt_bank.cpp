#include <doctest.h>

#include <cstdio>
#include <fstream>
#include <set>

#include "gradcheck.hpp"
#include "ppap/nn.hpp"
#include "ppap/prompt_bank.hpp"

using namespace ppap;

namespace {

KeypointVocab small_vocab() {
    return KeypointVocab::from_names({"nose", "left ear", "right ear"}, {{1, 2}});
}

}  // namespace

TEST_CASE("vocabulary tokenizer and validation") {
    KeypointVocab v = small_vocab();
    CHECK(v.size() == 3);
    CHECK(v.name_token_ids[0].size() == 1);
    CHECK(v.name_token_ids[1].size() == 2);
    // unknown words map to the reserved token 0
    CHECK(v.tokenize("nose whatever")[1] == 0);
    CHECK(v.tokenize("nose whatever")[0] != 0);

    CHECK_THROWS_AS(KeypointVocab::from_names({}, {}), std::invalid_argument);
    CHECK_THROWS_AS(KeypointVocab::from_names({"a", "b"}, {{0, 0}}), std::invalid_argument);
    CHECK_THROWS_AS(KeypointVocab::from_names({"a", "b"}, {{0, 5}}), std::invalid_argument);
    CHECK_THROWS_AS(KeypointVocab::from_names({"a", "b", "c"}, {{0, 1}, {1, 2}}),
                    std::invalid_argument);
}

TEST_CASE("vocabulary JSON round trip") {
    const char* path = "vocab_test.json";
    {
        std::ofstream out(path);
        out << R"({"names": ["nose", "left ear", "right ear"], "flip_pairs": [[1, 2]]})";
    }
    KeypointVocab v = KeypointVocab::load_json(path);
    CHECK(v.size() == 3);
    CHECK(v.flip_pairs.size() == 1);
    std::remove(path);

    {
        std::ofstream out(path);
        out << R"({"names": ["nose"]})";
    }
    CHECK_THROWS_WITH_AS(KeypointVocab::load_json(path), "vocab: missing field 'flip_pairs'",
                         std::runtime_error);
    std::remove(path);
}

TEST_CASE("build_prompt_set: counts, shapes, determinism") {
    // 17 keypoints x 2 attributes with 8 tokens each
    std::vector<std::string> names;
    for (int i = 0; i < 17; ++i) names.push_back("kp " + std::to_string(i));
    KeypointVocab vocab = KeypointVocab::from_names(names, {});

    PromptSet set = build_prompt_set(vocab, 2, 8, 42);
    CHECK(set.templates.size() == 34);
    for (const auto& t : set.templates) {
        CHECK(t.tokens.val().shape() == std::vector<int>{8, 64});
        CHECK(t.placement_index >= 0);
        CHECK(t.placement_index <= 8);
    }

    PromptSet again = build_prompt_set(vocab, 2, 8, 42);
    for (size_t i = 0; i < set.templates.size(); ++i) {
        CHECK(again.templates[i].placement_index == set.templates[i].placement_index);
        for (int64_t j = 0; j < 8 * 64; ++j)
            CHECK(again.templates[i].tokens.val()[j] == set.templates[i].tokens.val()[j]);
    }

    CHECK_THROWS_AS(build_prompt_set(vocab, 0, 8, 1), std::invalid_argument);
}

TEST_CASE("placement indices cover the full range 0..L") {
    KeypointVocab vocab = small_vocab();
    std::set<int> seen;
    for (uint64_t seed = 0; seed < 10000 / 6; ++seed) {
        PromptSet set = build_prompt_set(vocab, 2, 8, seed);
        for (const auto& t : set.templates) seen.insert(t.placement_index);
    }
    CHECK(seen.size() == 9);  // {0,...,8}
    CHECK(*seen.begin() == 0);
    CHECK(*seen.rbegin() == 8);
}

TEST_CASE("pinned placement puts the name last") {
    KeypointVocab vocab = small_vocab();
    PromptSet set = build_prompt_set(vocab, 2, 8, 3, 64, /*randomize_placement=*/false);
    for (const auto& t : set.templates) CHECK(t.placement_index == 8);
}

TEST_CASE("render_sequence splices name tokens at the placement slot") {
    KeypointVocab vocab = small_vocab();
    TextEncoderState enc(vocab, {}, 5);
    PromptSet set = build_prompt_set(vocab, 1, 8, 7);

    auto& tpl = set.at(1, 0);  // "left ear": two name tokens
    tpl.placement_index = 3;
    Var seq = render_sequence(tpl, 1, vocab, enc);
    CHECK(seq.val().dim(0) == 10);
    Tensor name_rows = enc.embed_tokens(vocab.name_token_ids[1]);
    for (int j = 0; j < 64; ++j) {
        CHECK(seq.val().at(3, j) == name_rows.at(0, j));
        CHECK(seq.val().at(4, j) == name_rows.at(1, j));
        CHECK(seq.val().at(2, j) == tpl.tokens.val().at(2, j));
        CHECK(seq.val().at(5, j) == tpl.tokens.val().at(3, j));
    }

    tpl.placement_index = 0;  // name first
    Var front = render_sequence(tpl, 1, vocab, enc);
    for (int j = 0; j < 64; ++j) {
        CHECK(front.val().at(0, j) == name_rows.at(0, j));
        CHECK(front.val().at(2, j) == tpl.tokens.val().at(0, j));
    }

    tpl.placement_index = 8;  // name last
    Var back = render_sequence(tpl, 1, vocab, enc);
    for (int j = 0; j < 64; ++j) {
        CHECK(back.val().at(0, j) == tpl.tokens.val().at(0, j));
        CHECK(back.val().at(8, j) == name_rows.at(0, j));
    }
}

TEST_CASE("render_agnostic is the bare template, independent of keypoint") {
    KeypointVocab vocab = small_vocab();
    PromptSet set = build_prompt_set(vocab, 2, 8, 9);
    Var a = render_agnostic(set.at(0, 0));
    CHECK(a.val().dim(0) == 8);
    // two templates of one keypoint carry independent parameters
    bool differ = false;
    for (int64_t i = 0; i < a.val().numel(); ++i)
        differ = differ || a.val()[i] != set.at(0, 1).tokens.val()[i];
    CHECK(differ);
}

TEST_CASE("encode_text: purity, position sensitivity, shape") {
    KeypointVocab vocab = small_vocab();
    TextEncoderState enc(vocab, {}, 11);
    RngStream rng(13);
    Tensor seq_t = gradcheck::random_tensor({4, 64}, rng, 0.1);
    Var seq = Var::constant(seq_t);

    Var e1 = encode_text(seq, enc);
    Var e2 = encode_text(Var::constant(seq_t), enc);
    CHECK(e1.val().shape() == std::vector<int>{1, 64});
    for (int j = 0; j < 64; ++j) CHECK(e1.val()[j] == e2.val()[j]);

    // permuted rows produce a different embedding (positional encoding)
    Tensor perm = seq_t;
    for (int j = 0; j < 64; ++j) std::swap(perm.at(0, j), perm.at(2, j));
    Var ep = encode_text(Var::constant(perm), enc);
    bool differ = false;
    for (int j = 0; j < 64; ++j) differ = differ || std::abs(ep.val()[j] - e1.val()[j]) > 1e-9;
    CHECK(differ);

    CHECK_THROWS_AS(encode_text(Var::constant(Tensor({0, 64})), enc), std::invalid_argument);
}

TEST_CASE("encode_text gradient w.r.t. input tokens matches finite differences") {
    KeypointVocab vocab = KeypointVocab::from_names({"a"}, {});
    TextEncoderConfig cfg;
    cfg.token_width = 8;
    cfg.embed_width = 6;
    cfg.mlp_hidden = 16;
    TextEncoderState enc(vocab, cfg, 17);
    RngStream rng(19);
    Var seq = gradcheck::random_leaf({3, 8}, rng, 0.2);
    Tensor w = gradcheck::random_tensor({1, 6}, rng);
    CHECK(gradcheck::max_rel_error([&] { return gradcheck::project(encode_text(seq, enc), w); },
                                   {seq}) < 1e-4);
}

TEST_CASE("frozen encoder stays bitwise identical while templates train") {
    KeypointVocab vocab = small_vocab();
    TextEncoderConfig cfg;
    cfg.token_width = 16;
    cfg.embed_width = 16;
    cfg.mlp_hidden = 32;
    TextEncoderState enc(vocab, cfg, 23);
    const uint64_t before = enc.fingerprint();

    PromptSet set = build_prompt_set(vocab, 2, 4, 29, 16);
    ParamStore params;
    for (int k = 0; k < set.n_keypoints; ++k)
        for (int t = 0; t < set.n_attributes; ++t)
            params.track("p" + std::to_string(k) + "_" + std::to_string(t), set.at(k, t).tokens);

    AdamW opt(0.9, 0.999, 1e-8, 1e-4);
    for (int step = 0; step < 5; ++step) {
        std::vector<Var> embs;
        for (int k = 0; k < set.n_keypoints; ++k)
            for (int t = 0; t < set.n_attributes; ++t)
                embs.push_back(encode_text(render_sequence(set.at(k, t), k, vocab, enc), enc));
        backward(sum(square(concat_rows(embs))));
        opt.step(params, 1e-2);
        params.zero_grad();
    }
    CHECK(enc.fingerprint() == before);

    // ... and the templates actually moved
    TextEncoderState enc2(vocab, cfg, 23);
    CHECK(enc2.fingerprint() == before);  // same seed, same parameters
    PromptSet fresh = build_prompt_set(vocab, 2, 4, 29, 16);
    bool moved = false;
    for (int64_t i = 0; i < set.at(0, 0).tokens.val().numel(); ++i)
        moved = moved || set.at(0, 0).tokens.val()[i] != fresh.at(0, 0).tokens.val()[i];
    CHECK(moved);
}
