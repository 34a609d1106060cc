#include "takevla/lane.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace takevla {

double Lane::length() const {
    double total = 0.0;
    for (std::size_t i = 1; i < centerline.size(); ++i) {
        total += (centerline[i] - centerline[i - 1]).norm();
    }
    return total;
}

Vec2 Lane::point_at(double s) const {
    if (centerline.size() < 2) throw std::invalid_argument("lane needs >= 2 centerline points");
    if (s <= 0.0) return centerline.front();
    for (std::size_t i = 1; i < centerline.size(); ++i) {
        const Vec2 seg = centerline[i] - centerline[i - 1];
        const double len = seg.norm();
        if (s <= len) return centerline[i - 1] + seg * (s / len);
        s -= len;
    }
    return centerline.back();
}

double Lane::heading_at(double s) const {
    if (centerline.size() < 2) throw std::invalid_argument("lane needs >= 2 centerline points");
    for (std::size_t i = 1; i < centerline.size(); ++i) {
        const Vec2 seg = centerline[i] - centerline[i - 1];
        const double len = seg.norm();
        if (s <= len) return std::atan2(seg.y, seg.x);
        s -= len;
    }
    const Vec2 seg = centerline.back() - centerline[centerline.size() - 2];
    return std::atan2(seg.y, seg.x);
}

Lane::Projection Lane::project(const Vec2& p) const {
    if (centerline.size() < 2) throw std::invalid_argument("lane needs >= 2 centerline points");
    double best_dist = std::numeric_limits<double>::infinity();
    Projection best;
    double s_base = 0.0;
    for (std::size_t i = 1; i < centerline.size(); ++i) {
        const Vec2 a = centerline[i - 1];
        const Vec2 seg = centerline[i] - a;
        const double len = seg.norm();
        const double t = len > 0.0 ? std::clamp((p - a).dot(seg) / (len * len), 0.0, 1.0) : 0.0;
        const Vec2 closest = a + seg * t;
        const double d = (p - closest).norm();
        if (d < best_dist) {
            best_dist = d;
            // signed lateral: positive left of travel direction
            const double cross = seg.x * (p.y - a.y) - seg.y * (p.x - a.x);
            best.s = s_base + t * len;
            best.lateral = (cross >= 0.0 ? 1.0 : -1.0) * d;
        }
        s_base += len;
    }
    return best;
}

}  // namespace takevla
