#include "takevla/vehicle.hpp"

#include <algorithm>
#include <stdexcept>

namespace takevla {

VehicleState bicycle_step(const VehicleState& state, const ControlSignal& control, double dt,
                          const VehicleParams& params) {
    if (dt <= 0.0) throw std::invalid_argument("bicycle_step: dt must be positive");
    if (!std::isfinite(state.pose.x) || !std::isfinite(state.pose.y) ||
        !std::isfinite(state.pose.yaw) || !std::isfinite(state.speed) ||
        !std::isfinite(control.throttle) || !std::isfinite(control.brake) ||
        !std::isfinite(control.steer)) {
        throw std::invalid_argument("bicycle_step: non-finite input");
    }

    const double steer = std::clamp(control.steer, -params.steer_max, params.steer_max);
    const double accel = params.accel_max * std::clamp(control.throttle, 0.0, 1.0) -
                         params.brake_max * std::clamp(control.brake, 0.0, 1.0);

    VehicleState next = state;
    next.pose.x += state.speed * std::cos(state.pose.yaw) * dt;
    next.pose.y += state.speed * std::sin(state.pose.yaw) * dt;
    const double yaw_rate = state.speed * std::tan(steer) / state.wheelbase;
    next.pose.yaw = normalize_angle(state.pose.yaw + yaw_rate * dt);
    next.speed = std::max(0.0, state.speed + accel * dt);
    return next;
}

}  // namespace takevla
