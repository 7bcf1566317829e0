#include "ppap/geometry.hpp"

#include <cmath>
#include <stdexcept>

namespace ppap {

Affine Affine::translation(double tx, double ty) {
    Affine a;
    a.m[2] = tx;
    a.m[5] = ty;
    return a;
}

Affine Affine::scaling(double sx, double sy) {
    Affine a;
    a.m[0] = sx;
    a.m[4] = sy;
    return a;
}

Affine Affine::rotation(double radians) {
    Affine a;
    const double c = std::cos(radians), s = std::sin(radians);
    a.m[0] = c;
    a.m[1] = -s;
    a.m[3] = s;
    a.m[4] = c;
    return a;
}

Affine Affine::hflip(double width) {
    Affine a;
    a.m[0] = -1.0;
    a.m[2] = width - 1.0;
    return a;
}

Point Affine::apply(Point p) const {
    return {m[0] * p.x + m[1] * p.y + m[2], m[3] * p.x + m[4] * p.y + m[5]};
}

Affine Affine::then(const Affine& s) const {
    Affine r;
    r.m[0] = s.m[0] * m[0] + s.m[1] * m[3];
    r.m[1] = s.m[0] * m[1] + s.m[1] * m[4];
    r.m[2] = s.m[0] * m[2] + s.m[1] * m[5] + s.m[2];
    r.m[3] = s.m[3] * m[0] + s.m[4] * m[3];
    r.m[4] = s.m[3] * m[1] + s.m[4] * m[4];
    r.m[5] = s.m[3] * m[2] + s.m[4] * m[5] + s.m[5];
    return r;
}

Affine Affine::inverse() const {
    const double det = m[0] * m[4] - m[1] * m[3];
    if (std::abs(det) < 1e-12) throw std::runtime_error("affine: singular transform");
    Affine r;
    r.m[0] = m[4] / det;
    r.m[1] = -m[1] / det;
    r.m[3] = -m[3] / det;
    r.m[4] = m[0] / det;
    r.m[2] = -(r.m[0] * m[2] + r.m[1] * m[5]);
    r.m[5] = -(r.m[3] * m[2] + r.m[4] * m[5]);
    return r;
}

}  // namespace ppap
