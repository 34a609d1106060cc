#pragma once

#include <algorithm>
#include <cmath>

namespace takevla {

/// Intelligent Driver Model parameters. The desired free-flow speed v0 is
/// passed per call (it comes from the lane speed limit).
struct IdmParams {
    double time_headway = 1.5;   // T [s]
    double accel = 1.5;          // a [m/s^2]
    double decel = 2.0;          // b [m/s^2] comfortable braking
    double min_gap = 2.0;        // s0 [m]
    double decel_cap = 8.0;      // hard floor on commanded deceleration
};

/// IDM acceleration for speed v against a leader at bumper gap `gap` moving
/// at v_lead. gap < 0 (no leader) gives the free-road term only.
inline double idm_accel(double v, double v_lead, double gap, double v0, const IdmParams& p = {}) {
    const double free_term = (v0 > 0.0) ? std::pow(v / v0, 4.0) : 1.0;
    double interaction = 0.0;
    if (gap >= 0.0) {
        const double dv = v - v_lead;
        const double s_star =
            p.min_gap + std::max(0.0, v * p.time_headway + v * dv / (2.0 * std::sqrt(p.accel * p.decel)));
        const double denom = std::max(gap, 0.1);
        interaction = (s_star / denom) * (s_star / denom);
    }
    const double a = p.accel * (1.0 - free_term - interaction);
    return std::clamp(a, -p.decel_cap, p.accel);
}

}  // namespace takevla
