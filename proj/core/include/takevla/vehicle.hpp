#pragma once

#include "takevla/geometry.hpp"

namespace takevla {

/// Kinematic parameters shared by every vehicle in the world.
struct VehicleParams {
    double accel_max = 3.0;   // [m/s^2] full-throttle acceleration
    double brake_max = 8.0;   // [m/s^2] full-brake deceleration
    double steer_max = 0.5;   // [rad]
};

struct VehicleState {
    Pose2D pose;
    double speed = 0.0;      // [m/s], never negative
    double length = 4.0;     // [m]
    double width = 2.0;      // [m]
    double wheelbase = 2.5;  // [m]

    Obb footprint() const { return {pose, length, width}; }
};

/// Throttle and brake are mutually exclusive; steer is clamped to steer_max.
struct ControlSignal {
    double throttle = 0.0;  // [0,1]
    double brake = 0.0;     // [0,1]
    double steer = 0.0;     // [rad]
};

/// Kinematic bicycle update with forward Euler integration.
/// Position advances along the current heading at the current speed; then
/// speed and yaw are updated. Speed is floored at zero.
VehicleState bicycle_step(const VehicleState& state, const ControlSignal& control, double dt,
                          const VehicleParams& params = {});

/// True iff the oriented footprints of the two vehicles intersect.
inline bool obb_overlap(const VehicleState& a, const VehicleState& b) {
    return obb_intersect(a.footprint(), b.footprint());
}

}  // namespace takevla
