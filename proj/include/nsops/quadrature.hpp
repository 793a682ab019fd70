#pragma once

#include <array>
#include <cmath>

#include "nsops/types.hpp"

namespace nsops {

/// Quadrature point on the reference triangle in barycentric coordinates.
struct TrianglePoint {
    double l0, l1, l2;
    double weight; // weights sum to 1; multiply by the triangle area
};

/// Symmetric 7-point rule, exact for polynomials of total degree <= 5.
inline const std::array<TrianglePoint, 7>& triangle_rule_deg5() {
    static const std::array<TrianglePoint, 7> rule = [] {
        const double s15 = std::sqrt(15.0);
        const double a1 = (9.0 - 2.0 * s15) / 21.0, b1 = (6.0 + s15) / 21.0, w1 = (155.0 + s15) / 1200.0;
        const double a2 = (9.0 + 2.0 * s15) / 21.0, b2 = (6.0 - s15) / 21.0, w2 = (155.0 - s15) / 1200.0;
        return std::array<TrianglePoint, 7>{{
            {1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0, 9.0 / 40.0},
            {a1, b1, b1, w1},
            {b1, a1, b1, w1},
            {b1, b1, a1, w1},
            {a2, b2, b2, w2},
            {b2, a2, b2, w2},
            {b2, b2, a2, w2},
        }};
    }();
    return rule;
}

/// 3-point Gauss-Legendre rule on [0,1], exact up to degree 5.
struct SegmentPoint {
    double t;
    double weight; // weights sum to 1; multiply by the segment length
};

inline const std::array<SegmentPoint, 3>& segment_rule_gauss3() {
    static const std::array<SegmentPoint, 3> rule = [] {
        const double d = std::sqrt(3.0 / 5.0) / 2.0;
        return std::array<SegmentPoint, 3>{{
            {0.5 - d, 5.0 / 18.0},
            {0.5, 8.0 / 18.0},
            {0.5 + d, 5.0 / 18.0},
        }};
    }();
    return rule;
}

/// Scalar P2 basis on the reference triangle. Local nodes: 0,1,2 vertices;
/// 3 = mid(0,1), 4 = mid(1,2), 5 = mid(2,0).
inline std::array<double, 6> p2_values(double l0, double l1, double l2) {
    return {l0 * (2.0 * l0 - 1.0), l1 * (2.0 * l1 - 1.0), l2 * (2.0 * l2 - 1.0),
            4.0 * l0 * l1, 4.0 * l1 * l2, 4.0 * l2 * l0};
}

/// Gradients of the P2 basis w.r.t. the reference coordinates (xi, eta),
/// where l0 = 1-xi-eta, l1 = xi, l2 = eta.
inline std::array<std::array<double, 2>, 6> p2_ref_gradients(double l0, double l1, double l2) {
    return {{
        {1.0 - 4.0 * l0, 1.0 - 4.0 * l0},
        {4.0 * l1 - 1.0, 0.0},
        {0.0, 4.0 * l2 - 1.0},
        {4.0 * (l0 - l1), -4.0 * l1},
        {4.0 * l2, 4.0 * l1},
        {-4.0 * l2, 4.0 * (l0 - l2)},
    }};
}

inline std::array<double, 3> p1_values(double l0, double l1, double l2) {
    return {l0, l1, l2};
}

} // namespace nsops
