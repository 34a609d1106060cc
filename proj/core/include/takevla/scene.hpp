#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "takevla/idm.hpp"
#include "takevla/lane.hpp"
#include "takevla/vehicle.hpp"

namespace takevla {

enum class BehaviorKind : std::uint8_t {
    Stationary = 0,  // parked obstacle
    Idm,             // car-following along its lane
    HardBrake,       // cruises, then brakes to a stop at a scripted time
    CrossTraffic,    // waits, then crosses at constant speed along its lane
};

/// Per-agent motion script. Agents move longitudinally along their lane
/// centerline; `s` is the evolving arc position.
struct BehaviorScript {
    BehaviorKind kind = BehaviorKind::Stationary;
    int lane_id = 0;
    double s = 0.0;
    double target_speed = 0.0;   // cruise / crossing speed
    double trigger_time = 0.0;   // HardBrake: brake onset; CrossTraffic: start time
    double brake_decel = 6.0;    // HardBrake deceleration rate
};

struct Agent {
    int id = 0;
    VehicleState state;
    BehaviorScript behavior;
};

enum class EventKind : std::uint8_t {
    AgentHardBrake = 0,   // switch agent behavior to braking immediately
    AgentSetSpeed,        // retarget the agent's cruise speed
};

struct ScriptedEvent {
    double trigger_time = 0.0;
    EventKind kind = EventKind::AgentHardBrake;
    int agent_id = 0;
    double value = 0.0;  // decel rate or new target speed
    bool fired = false;
};

/// Full ground-truth world state.
struct Scene {
    double time = 0.0;
    VehicleState ego;
    std::vector<Agent> agents;
    std::vector<Lane> lanes;
    Route route;
    std::vector<ScriptedEvent> scripted_events;
    VehicleParams vehicle_params;

    const Lane* lane_by_id(int id) const;
    const Lane& lane_by_id_or_throw(int id) const;

    /// Nearest lane whose corridor contains the point (|lateral| <= width/2 + slack);
    /// nullptr if the point is off every lane.
    const Lane* lane_containing(const Vec2& p, double slack = 0.5) const;
};

/// World tick rate for the online environment.
constexpr double kWorldDt = 0.05;  // 20 Hz

/// Advances the world one tick: fires due scripted events, moves the ego by
/// the bicycle model under `ego_control`, and moves every agent by its
/// behavior script. Deterministic.
Scene step_world(const Scene& scene, const ControlSignal& ego_control, double dt = kWorldDt);

/// True iff the ego footprint intersects any agent footprint.
bool ego_collides(const Scene& scene);

}  // namespace takevla
