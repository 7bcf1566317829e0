#pragma once

#include <vector>

namespace ppap {

struct Point {
    double x = 0.0, y = 0.0;
};

/// One labeled keypoint. v follows the COCO convention {0,1,2}; anything > 0
/// counts as supervised.
struct Keypoint {
    double x = 0.0, y = 0.0;
    int v = 0;
    bool visible() const { return v > 0; }
};

struct Rect {
    double x = 0.0, y = 0.0, w = 0.0, h = 0.0;
    double area() const { return w * h; }
    double longest_side() const { return w > h ? w : h; }
};

/// 2x3 affine transform, row-major [a b tx; c d ty].
struct Affine {
    double m[6] = {1, 0, 0, 0, 1, 0};

    static Affine identity() { return {}; }
    static Affine translation(double tx, double ty);
    static Affine scaling(double sx, double sy);
    static Affine rotation(double radians);
    /// horizontal mirror around x = width/2
    static Affine hflip(double width);

    Point apply(Point p) const;
    Affine then(const Affine& second) const;  // second * this
    Affine inverse() const;
};

}  // namespace ppap
