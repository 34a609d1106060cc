#include "takevla/pid.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace takevla {

namespace {

bool all_points_coincident(const DrivingAction& a) {
    if (a.path_waypoints.empty()) return false;
    const Vec2 first = a.path_waypoints.front();
    for (const auto& p : a.path_waypoints) {
        if ((p - first).norm() > 1e-9) return false;
    }
    for (const auto& p : a.speed_waypoints) {
        if ((p - first).norm() > 1e-9) return false;
    }
    return true;
}

double target_speed_from_waypoints(const DrivingAction& a, const VehicleState& ego,
                                   double dt_speed) {
    const auto& wp = a.speed_waypoints;
    if (wp.size() < 2) return wp.empty() ? 0.0 : (wp[0] - ego.pose.position()).norm() / dt_speed;
    // Segment starting at the waypoint nearest the ego.
    std::size_t k = 0;
    double best = (wp[0] - ego.pose.position()).norm();
    for (std::size_t i = 1; i + 1 < wp.size(); ++i) {
        const double d = (wp[i] - ego.pose.position()).norm();
        if (d < best) {
            best = d;
            k = i;
        }
    }
    return (wp[k + 1] - wp[k]).norm() / dt_speed;
}

double pure_pursuit_steer(const DrivingAction& a, const VehicleState& ego, const PidConfig& cfg) {
    const double lookahead = std::max(cfg.lookahead_min, cfg.lookahead_gain * ego.speed);
    const auto& wp = a.path_waypoints;
    Vec2 target = wp.back();
    for (const auto& p : wp) {
        if ((p - ego.pose.position()).norm() >= lookahead) {
            target = p;
            break;
        }
    }
    const Vec2 local = ego.pose.world_to_local(target);
    const double d = local.norm();
    if (d < 1e-9) return 0.0;
    const double alpha = std::atan2(local.y, local.x);
    return std::atan2(2.0 * ego.wheelbase * std::sin(alpha), d);
}

}  // namespace

std::pair<ControlSignal, PidState> pid_actuate(const DrivingAction& action_world,
                                               const VehicleState& ego, const PidState& state,
                                               const PidConfig& cfg, const VehicleParams& vehicle) {
    if (action_world.path_waypoints.empty() || action_world.speed_waypoints.empty()) {
        throw std::invalid_argument("pid_actuate: empty action");
    }

    ControlSignal out;
    PidState next = state;

    if (all_points_coincident(action_world) &&
        (action_world.path_waypoints.front() - ego.pose.position()).norm() < 2.0) {
        out.brake = 1.0;
        next.speed_integral = 0.0;
        return {out, next};
    }

    double target = target_speed_from_waypoints(action_world, ego, cfg.dt_speed);
    if (target < cfg.stop_speed_eps) target = 0.0;

    const double err = target - ego.speed;
    next.speed_integral = std::clamp(next.speed_integral + err * cfg.dt, -cfg.integrator_clamp,
                                     cfg.integrator_clamp);
    const double u = cfg.kp * err + cfg.ki * next.speed_integral;
    if (u >= 0.0) {
        out.throttle = std::clamp(u, 0.0, 1.0);
    } else {
        out.brake = std::clamp(-u, 0.0, 1.0);
    }
    if (target == 0.0 && ego.speed < 0.5) {
        // hold at standstill
        out.throttle = 0.0;
        out.brake = 1.0;
        next.speed_integral = 0.0;
    }

    out.steer = std::clamp(pure_pursuit_steer(action_world, ego, cfg), -vehicle.steer_max,
                           vehicle.steer_max);
    if (out.throttle > 0.0 && out.brake > 0.0) out.brake = 0.0;
    return {out, next};
}

}  // namespace takevla
