#pragma once

#include <optional>
#include <string>
#include <vector>

#include "ppap/geometry.hpp"

namespace ppap {

struct DecodedPoint {
    double x = 0.0, y = 0.0;
};

struct EvalResult {
    double pck = 0.0;
    double ap = 0.0, ap50 = 0.0, ap75 = 0.0, ar = 0.0;
    std::optional<double> ap_medium, ap_large;  // COCO area bins, only when both populated
    std::vector<double> per_keypoint_pck;
    int n_instances = 0;
    int n_visible_keypoints = 0;

    std::string to_json() const;
};

struct PckCounts {
    double fraction = 0.0;  // NaN when nothing is visible
    std::vector<int> correct_per_keypoint;
    std::vector<int> visible_per_keypoint;
    int total_correct = 0;
    int total_visible = 0;
};

/// Correct iff distance <= alpha * max(bbox w, h), boundary inclusive; only
/// visible ground-truth keypoints count.
PckCounts pck(const std::vector<std::vector<DecodedPoint>>& preds,
              const std::vector<std::vector<Keypoint>>& gts, const std::vector<Rect>& bboxes,
              double alpha);

/// Mean over visible keypoints of exp(-d^2 / (2 * area * kappa_i^2)).
/// Throws when no keypoint is visible.
double oks(const std::vector<DecodedPoint>& pred, const std::vector<Keypoint>& gt,
           double bbox_area, const std::vector<double>& kappas);

struct ApResult {
    double ap = 0.0, ap50 = 0.0, ap75 = 0.0, ar = 0.0;
    int count = 0;
};

const std::vector<double>& default_oks_thresholds();

/// Ground-truth-box, one-prediction-per-instance regime: precision == recall
/// at every threshold. Thresholds default to {0.50, 0.55, ..., 0.95}.
ApResult average_precision(const std::vector<double>& oks_per_instance,
                           const std::vector<double>& thresholds = default_oks_thresholds());

}  // namespace ppap
