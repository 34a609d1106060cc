#pragma once

#include <stdexcept>
#include <vector>

#include "takevla/action.hpp"
#include "takevla/pid.hpp"
#include "takevla/scene.hpp"

namespace takevla {

/// Thrown when the expert cannot plan (ego off every lane).
struct PlannerFailure : std::runtime_error {
    using std::runtime_error::runtime_error;
};

enum class ExpertIntent : std::uint8_t {
    FollowLane = 0,
    FollowLead,
    Stop,
    ChangeLaneLeft,
    ChangeLaneRight,
    EmergencyStop,
    Wait,
};

const char* to_string(ExpertIntent i);

struct ExpertDecision {
    DrivingAction action;  // ego frame at the decision tick
    LanguageAction language;
    ExpertIntent intent = ExpertIntent::FollowLane;
    double idm_accel = 0.0;  // commanded first-step acceleration [m/s^2]
};

struct ExpertConfig {
    ActionSpec action_spec;
    IdmParams idm;
    double front_gap_min = 8.0;     // [m] lane-change acceptance, front
    double rear_gap_min = 6.0;      // [m] lane-change acceptance, rear
    double rear_closing_margin = 1.0;  // [s] extra rear gap per m/s closing speed
    double blocked_gap = 12.0;      // [m] lead below blocked_speed within this gap blocks the lane
    double blocked_speed = 0.5;     // [m/s]
    double emergency_decel = 4.0;   // [m/s^2] IDM demand beyond this is an emergency
    double lane_change_blend = 15.0;  // [m] lateral blend distance
};

/// Privileged rule-based expert: IDM longitudinal control, centerline path
/// following with gap-accepted lane changes, and an internal-logic language
/// label from the governing rule branch.
ExpertDecision expert_decide(const Scene& scene, const ExpertConfig& cfg = {});

struct TrajectoryPoint {
    double x = 0.0;
    double y = 0.0;
    double yaw = 0.0;
    double speed = 0.0;
};

/// Closed-loop expert rollout (expert_decide -> pid_actuate -> step_world) for
/// `horizon_ticks` ticks at 20 Hz. Returns the ego trajectory after each tick.
std::vector<TrajectoryPoint> expert_rollout(const Scene& scene, int horizon_ticks,
                                            const ExpertConfig& cfg = {});

/// Same loop, returning the full scene after each tick together with the
/// decision that produced it. Used by takeover execution and data recording.
struct ExpertDriveTick {
    Scene scene_before;       // world state the decision was made on
    ExpertDecision decision;  // expert output at that state
    Scene scene_after;        // world state after applying the control
};
std::vector<ExpertDriveTick> expert_drive(const Scene& scene, int horizon_ticks,
                                          const ExpertConfig& cfg = {});

}  // namespace takevla
