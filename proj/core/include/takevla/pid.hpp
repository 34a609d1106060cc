#pragma once

#include "takevla/action.hpp"
#include "takevla/vehicle.hpp"

namespace takevla {

struct PidConfig {
    double kp = 0.5;             // longitudinal P gain
    double ki = 0.05;            // longitudinal I gain
    double integrator_clamp = 2.0;
    double lookahead_min = 3.0;  // [m] pure-pursuit minimum lookahead
    double lookahead_gain = 0.5; // [s] speed-proportional lookahead
    double dt = 0.05;            // [s] control interval
    double dt_speed = 0.2;       // [s] speed-waypoint interval
    double stop_speed_eps = 0.05;  // [m/s] target below this is a stop demand
};

/// Integrator state carried across ticks.
struct PidState {
    double speed_integral = 0.0;
};

/// Converts a waypoint action (world frame) into throttle/brake/steer for the
/// current ego state. Lateral control is pure pursuit toward the path
/// waypoint at the lookahead distance; longitudinal control is PI on the
/// speed error against the target implied by consecutive speed waypoints.
/// A degenerate action (all points coincident with the ego) demands full brake.
std::pair<ControlSignal, PidState> pid_actuate(const DrivingAction& action_world,
                                               const VehicleState& ego, const PidState& state,
                                               const PidConfig& cfg = {},
                                               const VehicleParams& vehicle = {});

}  // namespace takevla
