#include <doctest.h>

#include <cmath>

#include "gradcheck.hpp"
#include "ppap/visual_backbone.hpp"

using namespace ppap;
using gradcheck::max_rel_error;
using gradcheck::project;
using gradcheck::random_leaf;
using gradcheck::random_tensor;

TEST_CASE("encode_image: stride arithmetic and degenerate input") {
    RngStream rng(41);
    ParamStore ps;
    ImageEncoder enc(ps, "enc", 8, rng);

    Var img = random_leaf({3, 64, 64}, rng, 0.3);
    Var f = encode_image(img, enc);
    CHECK(f.val().shape() == std::vector<int>{8, 8, 8});

    Var zero = Var::constant(Tensor({3, 16, 16}));
    CHECK(encode_image(zero, enc).val().all_finite());

    CHECK_THROWS_AS(encode_image(Var::constant(Tensor({1, 16, 16})), enc), std::invalid_argument);
}

TEST_CASE("encode_image gradient") {
    RngStream rng(43);
    ParamStore ps;
    ImageEncoder enc(ps, "enc", 4, rng);
    Var img = random_leaf({3, 16, 16}, rng, 0.3);
    Tensor w = random_tensor({4, 2, 2}, rng);
    CHECK(max_rel_error([&] { return project(encode_image(img, enc), w); }, {img}) < 1e-4);
}

TEST_CASE("project_pixels: unit rows, shape, scale invariance") {
    RngStream rng(47);
    ParamStore ps;
    PixelProjection proj(ps, "proj", 6, 4, rng);
    Var fmap = random_leaf({6, 3, 3}, rng);

    Var pix = project_pixels(fmap, proj);
    CHECK(pix.val().shape() == std::vector<int>{9, 4});
    for (int r = 0; r < 9; ++r) {
        double n = 0.0;
        for (int c = 0; c < 4; ++c) n += pix.val().at(r, c) * pix.val().at(r, c);
        CHECK(std::sqrt(n) == doctest::Approx(1.0).epsilon(1e-6));
    }

    Var doubled = project_pixels(scale(fmap, 2.0), proj);
    for (int64_t i = 0; i < pix.val().numel(); ++i)
        CHECK(doubled.val()[i] == doctest::Approx(pix.val()[i]).epsilon(1e-6));
}

TEST_CASE("head_forward: shapes and gradient flow into both inputs") {
    RngStream rng(53);
    ParamStore ps;
    PredictionHead head(ps, "head", 6, 5, 8, rng);
    Var fmap = random_leaf({6, 8, 8}, rng);
    Var smap = random_leaf({5, 8, 8}, rng);

    Var out = head_forward(fmap, smap, head);
    CHECK(out.val().shape() == std::vector<int>{5, 32, 32});

    backward(mean(square(out)));
    double gf = 0.0, gs = 0.0;
    for (int64_t i = 0; i < fmap.grad().numel(); ++i) gf += std::abs(fmap.grad()[i]);
    for (int64_t i = 0; i < smap.grad().numel(); ++i) gs += std::abs(smap.grad()[i]);
    CHECK(gf > 0.0);
    CHECK(gs > 0.0);

    Var bad = random_leaf({5, 4, 4}, rng);
    CHECK_THROWS_AS(head_forward(fmap, bad, head), std::invalid_argument);
}

TEST_CASE("head_forward gradient vs finite differences") {
    RngStream rng(59);
    ParamStore ps;
    PredictionHead head(ps, "head", 3, 2, 4, rng);
    Var fmap = random_leaf({3, 4, 4}, rng, 0.5);
    Var smap = random_leaf({2, 4, 4}, rng, 0.5);
    Tensor w = random_tensor({2, 16, 16}, rng);
    CHECK(max_rel_error([&] { return project(head_forward(fmap, smap, head), w); },
                        {fmap, smap}) < 1e-4);
}

TEST_CASE("make_target_heatmap: peak, masking, analytic falloff") {
    // keypoint exactly at the center of cell (2, 3) on a same-size grid
    std::vector<Keypoint> kps = {{3.0, 2.0, 2}, {1.0, 1.0, 0}};
    HeatmapTarget t = make_target_heatmap(kps, 8, 8, 8, 8, 2.0);
    CHECK(t.heatmaps.at(0, 2, 3) == doctest::Approx(1.0));
    CHECK(t.weights[0] == 1.0);

    // invisible keypoint: zero channel, zero weight
    CHECK(t.weights[1] == 0.0);
    for (int r = 0; r < 8; ++r)
        for (int c = 0; c < 8; ++c) CHECK(t.heatmaps.at(1, r, c) == 0.0);

    // value at distance sigma equals exp(-1/2)
    CHECK(t.heatmaps.at(0, 2, 5) == doctest::Approx(std::exp(-0.5)));

    CHECK_THROWS_AS(make_target_heatmap(kps, 8, 8, 8, 8, 0.0), std::invalid_argument);
}

TEST_CASE("make_target_heatmap: out-of-grid keypoints keep weight but truncate") {
    std::vector<Keypoint> kps = {{-3.0, 4.0, 2}};
    HeatmapTarget t = make_target_heatmap(kps, 8, 8, 8, 8, 2.0);
    CHECK(t.weights[0] == 1.0);
    CHECK(t.heatmaps.at(0, 4, 0) < 1.0);
    CHECK(t.heatmaps.at(0, 4, 0) > 0.0);
}

TEST_CASE("decode_keypoints: ties, quarter shift, score") {
    Tensor heat({1, 5, 5});
    heat.at(0, 2, 2) = 1.0;
    auto d = decode_keypoints(heat, 5, 5);
    CHECK(d[0].x == doctest::Approx(2.0));  // flat neighbors, no shift
    CHECK(d[0].y == doctest::Approx(2.0));
    CHECK(d[0].score == doctest::Approx(1.0));

    // right neighbor larger than left: +0.25 cells
    heat.at(0, 2, 3) = 0.5;
    d = decode_keypoints(heat, 5, 5);
    CHECK(d[0].x == doctest::Approx(2.25));

    // all-equal channel: smallest row-major index wins
    Tensor flat({1, 3, 3});
    flat.fill(0.7);
    d = decode_keypoints(flat, 3, 3);
    CHECK(d[0].x == doctest::Approx(0.0));
    CHECK(d[0].y == doctest::Approx(0.0));

    // stride mapping back to input pixels
    Tensor strided({1, 4, 4});
    strided.at(0, 1, 2) = 1.0;
    d = decode_keypoints(strided, 8, 8);
    CHECK(d[0].x == doctest::Approx((2 + 0.5) * 2.0 - 0.5));
    CHECK(d[0].y == doctest::Approx((1 + 0.5) * 2.0 - 0.5));
}

TEST_CASE("target/decode round trip stays within half an input pixel") {
    RngStream rng(61);
    // at matched resolution the quarter shift bounds the euclidean error by
    // 0.25 * sqrt(2) < 0.5 px
    const int in = 64;
    double worst = 0.0;
    for (int trial = 0; trial < 200; ++trial) {
        std::vector<Keypoint> kps = {{rng.uniform(4.0, in - 5.0), rng.uniform(4.0, in - 5.0), 2}};
        HeatmapTarget t = make_target_heatmap(kps, in, in, in, in, 2.0);
        auto d = decode_keypoints(t.heatmaps, in, in);
        worst = std::max(worst, std::hypot(d[0].x - kps[0].x, d[0].y - kps[0].y));
    }
    CHECK(worst <= 0.5 + 1e-9);

    // at the prediction-head stride (2) the same bound holds per axis
    const int grid = 32;
    double worst_axis = 0.0;
    for (int trial = 0; trial < 200; ++trial) {
        std::vector<Keypoint> kps = {{rng.uniform(6.0, in - 7.0), rng.uniform(6.0, in - 7.0), 2}};
        HeatmapTarget t = make_target_heatmap(kps, grid, grid, in, in, 2.0 * in / grid);
        auto d = decode_keypoints(t.heatmaps, in, in);
        worst_axis = std::max({worst_axis, std::abs(d[0].x - kps[0].x),
                               std::abs(d[0].y - kps[0].y)});
    }
    CHECK(worst_axis <= 0.5 + 1e-9);
}
