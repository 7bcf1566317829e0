#include <doctest.h>

#include <cmath>
#include <stdexcept>

#include "ppap/metrics.hpp"
#include "ppap/rng.hpp"

using namespace ppap;

TEST_CASE("pck: exactness, inclusive boundary, oracle over 1000 instances") {
    // exact prediction counts as correct
    std::vector<std::vector<DecodedPoint>> preds = {{{3.0, 4.0}}};
    std::vector<std::vector<Keypoint>> gts = {{{3.0, 4.0, 2}}};
    std::vector<Rect> boxes = {{0, 0, 10, 10}};
    CHECK(pck(preds, gts, boxes, 0.05).fraction == doctest::Approx(1.0));

    // bbox 100x50, alpha 0.05, distance exactly 5 -> correct (threshold 5)
    preds = {{{5.0, 0.0}}};
    gts = {{{0.0, 0.0, 2}}};
    boxes = {{0, 0, 100, 50}};
    CHECK(pck(preds, gts, boxes, 0.05).fraction == doctest::Approx(1.0));
    preds = {{{5.000001, 0.0}}};
    CHECK(pck(preds, gts, boxes, 0.05).fraction == doctest::Approx(0.0));

    // no visible keypoints: NaN with zero counts
    gts = {{{0.0, 0.0, 0}}};
    PckCounts empty = pck(preds, gts, boxes, 0.05);
    CHECK(std::isnan(empty.fraction));
    CHECK(empty.total_visible == 0);

    // brute-force loop oracle on 1000 random instances
    RngStream rng(301);
    const int k = 5;
    std::vector<std::vector<DecodedPoint>> p1000;
    std::vector<std::vector<Keypoint>> g1000;
    std::vector<Rect> b1000;
    for (int n = 0; n < 1000; ++n) {
        std::vector<DecodedPoint> p(k);
        std::vector<Keypoint> g(k);
        for (int i = 0; i < k; ++i) {
            g[i] = {rng.uniform(0, 100), rng.uniform(0, 100), rng.uniform_int(3)};
            p[i] = {g[i].x + rng.uniform(-8, 8), g[i].y + rng.uniform(-8, 8)};
        }
        p1000.push_back(p);
        g1000.push_back(g);
        b1000.push_back({0, 0, rng.uniform(20, 120), rng.uniform(20, 120)});
    }
    PckCounts fast = pck(p1000, g1000, b1000, 0.07);
    int correct = 0, visible = 0;
    for (int n = 0; n < 1000; ++n)
        for (int i = 0; i < k; ++i) {
            if (g1000[n][i].v <= 0) continue;
            ++visible;
            const double dx = p1000[n][i].x - g1000[n][i].x;
            const double dy = p1000[n][i].y - g1000[n][i].y;
            const double thr = 0.07 * std::max(b1000[n].w, b1000[n].h);
            if (std::sqrt(dx * dx + dy * dy) <= thr) ++correct;
        }
    CHECK(fast.total_correct == correct);
    CHECK(fast.total_visible == visible);
    CHECK(fast.fraction == doctest::Approx(static_cast<double>(correct) / visible));
}

TEST_CASE("oks: perfect, analytic point, monotonicity, invariances") {
    std::vector<double> kappas = {0.08, 0.08};
    std::vector<Keypoint> gt = {{10.0, 10.0, 2}, {20.0, 20.0, 2}};
    std::vector<DecodedPoint> exact = {{10.0, 10.0}, {20.0, 20.0}};
    CHECK(oks(exact, gt, 900.0, kappas) == doctest::Approx(1.0));

    // single keypoint at d^2 = 2 * s^2 * kappa^2 -> e^-1
    const double area = 400.0;
    const double d = std::sqrt(2.0 * area * 0.08 * 0.08);
    std::vector<Keypoint> one = {{0.0, 0.0, 2}};
    std::vector<DecodedPoint> off = {{d, 0.0}};
    CHECK(oks(off, one, area, {0.08}) == doctest::Approx(std::exp(-1.0)));

    // increasing any distance never increases the score
    std::vector<DecodedPoint> nearer = {{10.5, 10.0}, {20.0, 20.0}};
    std::vector<DecodedPoint> farther = {{12.0, 10.0}, {20.0, 20.0}};
    CHECK(oks(nearer, gt, 900.0, kappas) >= oks(farther, gt, 900.0, kappas));

    // rigid translation of both pred and gt leaves oks unchanged
    std::vector<Keypoint> gt_t = gt;
    std::vector<DecodedPoint> nearer_t = nearer;
    for (auto& p : gt_t) {
        p.x += 13.0;
        p.y -= 4.0;
    }
    for (auto& p : nearer_t) {
        p.x += 13.0;
        p.y -= 4.0;
    }
    CHECK(oks(nearer_t, gt_t, 900.0, kappas) == doctest::Approx(oks(nearer, gt, 900.0, kappas)));

    // uniform scaling of coordinates and sqrt(area) together
    std::vector<Keypoint> gt_s = gt;
    std::vector<DecodedPoint> nearer_s = nearer;
    for (auto& p : gt_s) {
        p.x *= 3.0;
        p.y *= 3.0;
    }
    for (auto& p : nearer_s) {
        p.x *= 3.0;
        p.y *= 3.0;
    }
    CHECK(oks(nearer_s, gt_s, 900.0 * 9.0, kappas) ==
          doctest::Approx(oks(nearer, gt, 900.0, kappas)));

    // invisible-only ground truth is an error
    std::vector<Keypoint> hidden = {{1.0, 1.0, 0}, {2.0, 2.0, 0}};
    CHECK_THROWS_AS(oks(exact, hidden, 900.0, kappas), std::runtime_error);
}

TEST_CASE("average_precision: trivial cases and sweep oracle") {
    // all perfect
    ApResult all = average_precision({1.0, 1.0, 1.0});
    CHECK(all.ap == doctest::Approx(1.0));
    CHECK(all.ar == doctest::Approx(1.0));
    CHECK(all.ap50 == doctest::Approx(1.0));
    CHECK(all.ap75 == doctest::Approx(1.0));

    // {0.6, 0.6} over thresholds {0.5, 0.75} -> (1 + 0) / 2
    ApResult two = average_precision({0.6, 0.6}, {0.5, 0.75});
    CHECK(two.ap == doctest::Approx(0.5));

    // empty: undefined, count 0
    ApResult none = average_precision({});
    CHECK(none.count == 0);
    CHECK(std::isnan(none.ap));

    // brute-force threshold sweep oracle
    RngStream rng(307);
    std::vector<double> scores;
    for (int i = 0; i < 500; ++i) scores.push_back(rng.uniform());
    ApResult fast = average_precision(scores);
    double acc = 0.0;
    for (int t = 0; t < 10; ++t) {
        const double thr = 0.5 + 0.05 * t;
        int pass = 0;
        for (double s : scores)
            if (s >= thr) ++pass;
        acc += static_cast<double>(pass) / scores.size();
    }
    CHECK(fast.ap == doctest::Approx(acc / 10.0).epsilon(1e-12));

    // monotone non-increasing in the evaluation threshold
    int prev = 501;
    for (int t = 0; t < 10; ++t) {
        const double thr = 0.5 + 0.05 * t;
        int pass = 0;
        for (double s : scores)
            if (s >= thr) ++pass;
        CHECK(pass <= prev);
        prev = pass;
    }
}

TEST_CASE("pck translation invariance") {
    RngStream rng(311);
    std::vector<std::vector<DecodedPoint>> preds(10), preds_t(10);
    std::vector<std::vector<Keypoint>> gts(10), gts_t(10);
    std::vector<Rect> boxes(10);
    for (int n = 0; n < 10; ++n) {
        for (int i = 0; i < 3; ++i) {
            Keypoint g{rng.uniform(0, 50), rng.uniform(0, 50), 2};
            DecodedPoint p{g.x + rng.uniform(-4, 4), g.y + rng.uniform(-4, 4)};
            gts[n].push_back(g);
            preds[n].push_back(p);
            gts_t[n].push_back({g.x + 100, g.y - 30, 2});
            preds_t[n].push_back({p.x + 100, p.y - 30});
        }
        boxes[n] = {0, 0, 40, 60};
    }
    CHECK(pck(preds, gts, boxes, 0.05).fraction ==
          doctest::Approx(pck(preds_t, gts_t, boxes, 0.05).fraction));
}

TEST_CASE("eval result serializes the report schema") {
    EvalResult r;
    r.pck = 0.5;
    r.ap = 0.25;
    r.per_keypoint_pck = {0.5, 0.5};
    r.n_instances = 4;
    const std::string j = r.to_json();
    CHECK(j.find("\"pck\"") != std::string::npos);
    CHECK(j.find("\"ap50\"") != std::string::npos);
    CHECK(j.find("\"per_keypoint_pck\"") != std::string::npos);
    CHECK(j.find("\"counts\"") != std::string::npos);
    CHECK(j.find("\"apM\"") == std::string::npos);  // absent unless both bins exist
}
