#pragma once

#include <array>
#include <cmath>
#include <stdexcept>

namespace takevla {

constexpr double kPi = 3.14159265358979323846;

/// Wraps an angle into (-pi, pi].
inline double normalize_angle(double a) {
    a = std::fmod(a, 2.0 * kPi);
    if (a <= -kPi) a += 2.0 * kPi;
    if (a > kPi) a -= 2.0 * kPi;
    return a;
}

struct Vec2 {
    double x = 0.0;
    double y = 0.0;

    Vec2 operator+(const Vec2& o) const { return {x + o.x, y + o.y}; }
    Vec2 operator-(const Vec2& o) const { return {x - o.x, y - o.y}; }
    Vec2 operator*(double s) const { return {x * s, y * s}; }
    double dot(const Vec2& o) const { return x * o.x + y * o.y; }
    double norm() const { return std::hypot(x, y); }
};

inline bool operator==(const Vec2& a, const Vec2& b) { return a.x == b.x && a.y == b.y; }

struct Pose2D {
    double x = 0.0;
    double y = 0.0;
    double yaw = 0.0;  // normalized to (-pi, pi]

    Vec2 position() const { return {x, y}; }

    /// Maps a point given in this pose's local frame into the world frame.
    Vec2 local_to_world(const Vec2& p) const {
        const double c = std::cos(yaw), s = std::sin(yaw);
        return {x + c * p.x - s * p.y, y + s * p.x + c * p.y};
    }

    /// Maps a world-frame point into this pose's local frame.
    Vec2 world_to_local(const Vec2& p) const {
        const double c = std::cos(yaw), s = std::sin(yaw);
        const double dx = p.x - x, dy = p.y - y;
        return {c * dx + s * dy, -s * dx + c * dy};
    }
};

/// Oriented rectangle footprint: center pose, full extents length x width.
struct Obb {
    Pose2D pose;
    double length = 0.0;
    double width = 0.0;

    std::array<Vec2, 4> corners() const {
        const double hl = 0.5 * length, hw = 0.5 * width;
        return {pose.local_to_world({hl, hw}), pose.local_to_world({hl, -hw}),
                pose.local_to_world({-hl, -hw}), pose.local_to_world({-hl, hw})};
    }
};

/// Separating-axis intersection test over the 4 edge normals of two rectangles.
bool obb_intersect(const Obb& a, const Obb& b);

}  // namespace takevla
