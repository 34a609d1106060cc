#include "takevla/geometry.hpp"

#include <algorithm>
#include <limits>

namespace takevla {

namespace {

// Projects both rectangles onto `axis` and checks for a gap.
bool separated_on_axis(const Vec2& axis, const std::array<Vec2, 4>& ca,
                       const std::array<Vec2, 4>& cb) {
    double amin = std::numeric_limits<double>::infinity(), amax = -amin;
    double bmin = amin, bmax = amax;
    for (const auto& p : ca) {
        const double d = p.dot(axis);
        amin = std::min(amin, d);
        amax = std::max(amax, d);
    }
    for (const auto& p : cb) {
        const double d = p.dot(axis);
        bmin = std::min(bmin, d);
        bmax = std::max(bmax, d);
    }
    return amax < bmin || bmax < amin;
}

}  // namespace

bool obb_intersect(const Obb& a, const Obb& b) {
    const auto ca = a.corners();
    const auto cb = b.corners();
    const std::array<Vec2, 4> axes = {
        Vec2{std::cos(a.pose.yaw), std::sin(a.pose.yaw)},
        Vec2{-std::sin(a.pose.yaw), std::cos(a.pose.yaw)},
        Vec2{std::cos(b.pose.yaw), std::sin(b.pose.yaw)},
        Vec2{-std::sin(b.pose.yaw), std::cos(b.pose.yaw)},
    };
    for (const auto& axis : axes) {
        if (separated_on_axis(axis, ca, cb)) return false;
    }
    return true;
}

}  // namespace takevla
