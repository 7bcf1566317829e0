#include "ppap/metrics.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

#include <json.hpp>

namespace ppap {

std::string EvalResult::to_json() const {
    nlohmann::json j;
    auto num = [](double v) -> nlohmann::json {
        return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr);
    };
    j["pck"] = num(pck);
    j["ap"] = num(ap);
    j["ap50"] = num(ap50);
    j["ap75"] = num(ap75);
    j["ar"] = num(ar);
    if (ap_medium && ap_large) {
        j["apM"] = num(*ap_medium);
        j["apL"] = num(*ap_large);
    }
    j["per_keypoint_pck"] = per_keypoint_pck;
    j["counts"] = {{"instances", n_instances}, {"visible_keypoints", n_visible_keypoints}};
    return j.dump();
}

PckCounts pck(const std::vector<std::vector<DecodedPoint>>& preds,
              const std::vector<std::vector<Keypoint>>& gts, const std::vector<Rect>& bboxes,
              double alpha) {
    if (alpha <= 0.0) throw std::invalid_argument("pck: alpha > 0");
    if (preds.size() != gts.size() || preds.size() != bboxes.size())
        throw std::invalid_argument("pck: instance count mismatch");
    PckCounts out;
    const size_t k = gts.empty() ? 0 : gts[0].size();
    out.correct_per_keypoint.assign(k, 0);
    out.visible_per_keypoint.assign(k, 0);
    for (size_t n = 0; n < gts.size(); ++n) {
        const double thr = alpha * bboxes[n].longest_side();
        for (size_t i = 0; i < gts[n].size(); ++i) {
            if (!gts[n][i].visible()) continue;
            ++out.visible_per_keypoint[i];
            ++out.total_visible;
            const double dx = preds[n][i].x - gts[n][i].x;
            const double dy = preds[n][i].y - gts[n][i].y;
            if (std::sqrt(dx * dx + dy * dy) <= thr) {
                ++out.correct_per_keypoint[i];
                ++out.total_correct;
            }
        }
    }
    out.fraction = out.total_visible > 0
                       ? static_cast<double>(out.total_correct) / out.total_visible
                       : std::numeric_limits<double>::quiet_NaN();
    return out;
}

double oks(const std::vector<DecodedPoint>& pred, const std::vector<Keypoint>& gt,
           double bbox_area, const std::vector<double>& kappas) {
    if (pred.size() != gt.size() || kappas.size() != gt.size())
        throw std::invalid_argument("oks: keypoint count mismatch");
    double acc = 0.0;
    int nvis = 0;
    for (size_t i = 0; i < gt.size(); ++i) {
        if (!gt[i].visible()) continue;
        ++nvis;
        const double dx = pred[i].x - gt[i].x;
        const double dy = pred[i].y - gt[i].y;
        const double d2 = dx * dx + dy * dy;
        acc += std::exp(-d2 / (2.0 * bbox_area * kappas[i] * kappas[i]));
    }
    if (nvis == 0) throw std::runtime_error("oks: no visible ground-truth keypoints");
    return acc / nvis;
}

const std::vector<double>& default_oks_thresholds() {
    static const std::vector<double> thr = [] {
        std::vector<double> t;
        for (int i = 0; i < 10; ++i) t.push_back(0.50 + 0.05 * i);
        return t;
    }();
    return thr;
}

ApResult average_precision(const std::vector<double>& oks_per_instance,
                           const std::vector<double>& thresholds) {
    ApResult res;
    res.count = static_cast<int>(oks_per_instance.size());
    if (oks_per_instance.empty()) {
        res.ap = res.ap50 = res.ap75 = res.ar = std::numeric_limits<double>::quiet_NaN();
        return res;
    }
    double acc = 0.0;
    for (double t : thresholds) {
        int pass = 0;
        for (double v : oks_per_instance)
            if (v >= t) ++pass;
        const double frac = static_cast<double>(pass) / oks_per_instance.size();
        acc += frac;
        if (std::abs(t - 0.50) < 1e-12) res.ap50 = frac;
        if (std::abs(t - 0.75) < 1e-12) res.ap75 = frac;
    }
    res.ap = acc / thresholds.size();
    res.ar = res.ap;  // one prediction per gt instance: recall == precision
    return res;
}

}  // namespace ppap
