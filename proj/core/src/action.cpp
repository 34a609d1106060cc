#include "takevla/action.hpp"

#include <stdexcept>

namespace takevla {

double implied_first_speed(const DrivingAction& action, double dt_speed) {
    if (action.speed_waypoints.empty()) throw std::invalid_argument("empty speed waypoints");
    return action.speed_waypoints.front().norm() / dt_speed;
}

double implied_first_accel(const DrivingAction& action, double dt_speed) {
    if (action.speed_waypoints.size() < 2) throw std::invalid_argument("need two speed waypoints");
    const double u0 = action.speed_waypoints[0].norm() / dt_speed;
    const double u1 = (action.speed_waypoints[1] - action.speed_waypoints[0]).norm() / dt_speed;
    return (u1 - u0) / dt_speed;
}

DrivingAction action_to_world(const DrivingAction& action, const Pose2D& emission_pose) {
    DrivingAction out;
    out.path_waypoints.reserve(action.path_waypoints.size());
    out.speed_waypoints.reserve(action.speed_waypoints.size());
    for (const auto& p : action.path_waypoints) out.path_waypoints.push_back(emission_pose.local_to_world(p));
    for (const auto& p : action.speed_waypoints) out.speed_waypoints.push_back(emission_pose.local_to_world(p));
    return out;
}

const char* to_string(MetaAction m) {
    switch (m) {
        case MetaAction::Follow: return "Follow";
        case MetaAction::Decelerate: return "Decelerate";
        case MetaAction::Stop: return "Stop";
        case MetaAction::Accelerate: return "Accelerate";
        case MetaAction::LaneChangeLeft: return "LaneChangeLeft";
        case MetaAction::LaneChangeRight: return "LaneChangeRight";
        case MetaAction::Wait: return "Wait";
        case MetaAction::Start: return "Start";
        case MetaAction::EmergencyStop: return "EmergencyStop";
    }
    return "?";
}

const char* to_string(Reason r) {
    switch (r) {
        case Reason::ClearRoad: return "ClearRoad";
        case Reason::LeadVehicle: return "LeadVehicle";
        case Reason::Obstacle: return "Obstacle";
        case Reason::CrossTraffic: return "CrossTraffic";
        case Reason::GapAvailable: return "GapAvailable";
        case Reason::NoGap: return "NoGap";
        case Reason::RouteTurn: return "RouteTurn";
        case Reason::CollisionRisk: return "CollisionRisk";
        case Reason::LeadVehicleClosing: return "LeadVehicleClosing";
    }
    return "?";
}

}  // namespace takevla
