#pragma once

#include <optional>
#include <vector>

#include "takevla/geometry.hpp"

namespace takevla {

/// Lane centerline polyline with width and speed limit. Adjacent lanes are
/// linked by id for lane-change planning; -1 means no neighbour.
struct Lane {
    int id = 0;
    std::vector<Vec2> centerline;
    double width = 3.5;        // [m]
    double speed_limit = 8.0;  // [m/s]
    int left_id = -1;
    int right_id = -1;

    double length() const;

    /// Point on the centerline at arc length s (clamped to [0, length]).
    Vec2 point_at(double s) const;

    /// Tangent heading at arc length s.
    double heading_at(double s) const;

    /// Projection of a world point: arc length and signed lateral offset
    /// (positive to the left of travel direction).
    struct Projection {
        double s = 0.0;
        double lateral = 0.0;
    };
    Projection project(const Vec2& p) const;
};

struct Route {
    std::vector<int> lane_ids;  // preferred corridor, in order
    Vec2 goal;
};

}  // namespace takevla
