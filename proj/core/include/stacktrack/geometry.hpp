#pragma once

#include <algorithm>
#include <cmath>

namespace stacktrack {

// Axis-aligned box in normalized image fractions, center form.
// Corners may fall slightly outside [0,1]; off-image boxes are tolerated.
struct BBox {
    double cx = 0.0;
    double cy = 0.0;
    double w = 0.0;
    double h = 0.0;

    double left() const { return cx - 0.5 * w; }
    double right() const { return cx + 0.5 * w; }
    double top() const { return cy - 0.5 * h; }
    double bottom() const { return cy + 0.5 * h; }
    double area() const { return w * h; }

    BBox shifted(double dx, double dy) const { return {cx + dx, cy + dy, w, h}; }
};

inline double iou(const BBox& a, const BBox& b) {
    const double ix = std::max(0.0, std::min(a.right(), b.right()) - std::max(a.left(), b.left()));
    const double iy = std::max(0.0, std::min(a.bottom(), b.bottom()) - std::max(a.top(), b.top()));
    const double inter = ix * iy;
    const double uni = a.area() + b.area() - inter;
    if (uni <= 0.0) {
        return 0.0;
    }
    return inter / uni;
}

} // namespace stacktrack
