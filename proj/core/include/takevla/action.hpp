#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "takevla/geometry.hpp"

namespace takevla {

/// Dimensions of the decoupled waypoint action representation.
struct ActionSpec {
    int n_path = 10;         // path waypoints, spatially equidistant
    double s_path = 1.0;     // [m] spacing between path waypoints
    int n_speed = 10;        // speed waypoints, temporally equidistant
    double dt_speed = 0.2;   // [s] interval between speed waypoints
};

/// Path waypoints at fixed spatial spacing plus speed waypoints at fixed time
/// intervals, both in the ego frame at emission time. Speed waypoint k is the
/// predicted ego position at (k+1)*dt_speed.
struct DrivingAction {
    std::vector<Vec2> path_waypoints;
    std::vector<Vec2> speed_waypoints;
};

/// Speed over the first waypoint interval, |p0| / dt_speed.
double implied_first_speed(const DrivingAction& action, double dt_speed);

/// Acceleration implied by the first two speed waypoints:
/// (|p1-p0| - |p0|) / dt_speed^2.
double implied_first_accel(const DrivingAction& action, double dt_speed);

/// Transforms both waypoint sequences from the emission frame into the world
/// frame.
DrivingAction action_to_world(const DrivingAction& action, const Pose2D& emission_pose);

// Closed meta-action and reason vocabularies. The enhanced variants
// (EmergencyStop, CollisionRisk, LeadVehicleClosing) are distinct ids so
// supervised training can tell enhanced labels from plain ones.
enum class MetaAction : std::uint8_t {
    Follow = 0,
    Decelerate,
    Stop,
    Accelerate,
    LaneChangeLeft,
    LaneChangeRight,
    Wait,
    Start,
    EmergencyStop,
};
constexpr int kMetaVocabSize = 9;

enum class Reason : std::uint8_t {
    ClearRoad = 0,
    LeadVehicle,
    Obstacle,
    CrossTraffic,
    GapAvailable,
    NoGap,
    RouteTurn,
    CollisionRisk,
    LeadVehicleClosing,
};
constexpr int kReasonVocabSize = 9;

struct LanguageAction {
    MetaAction meta = MetaAction::Follow;
    Reason reason = Reason::ClearRoad;

    bool operator==(const LanguageAction&) const = default;
};

const char* to_string(MetaAction m);
const char* to_string(Reason r);

}  // namespace takevla
