#include "takevla/scene.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace takevla {

const Lane* Scene::lane_by_id(int id) const {
    for (const auto& l : lanes) {
        if (l.id == id) return &l;
    }
    return nullptr;
}

const Lane& Scene::lane_by_id_or_throw(int id) const {
    const Lane* l = lane_by_id(id);
    if (!l) throw std::out_of_range("unknown lane id " + std::to_string(id));
    return *l;
}

const Lane* Scene::lane_containing(const Vec2& p, double slack) const {
    const Lane* best = nullptr;
    double best_abs = std::numeric_limits<double>::infinity();
    for (const auto& l : lanes) {
        const auto proj = l.project(p);
        const double abs_lat = std::fabs(proj.lateral);
        if (abs_lat <= l.width * 0.5 + slack && abs_lat < best_abs) {
            best = &l;
            best_abs = abs_lat;
        }
    }
    return best;
}

bool ego_collides(const Scene& scene) {
    for (const auto& a : scene.agents) {
        if (obb_overlap(scene.ego, a.state)) return true;
    }
    return false;
}

namespace {

// Nearest vehicle ahead of `self` in its lane corridor; returns (bumper gap, speed).
struct LeadInfo {
    double gap = -1.0;
    double speed = 0.0;
};

LeadInfo find_lead(const Scene& scene, const Agent& self, const Lane& lane) {
    LeadInfo lead;
    double best_ds = std::numeric_limits<double>::infinity();
    auto consider = [&](const VehicleState& v) {
        const auto proj = lane.project(v.pose.position());
        if (std::fabs(proj.lateral) > lane.width * 0.5) return;
        const double ds = proj.s - self.behavior.s;
        if (ds <= 0.0 || ds >= best_ds) return;
        best_ds = ds;
        lead.gap = ds - 0.5 * (v.length + self.state.length);
        lead.speed = v.speed;
    };
    consider(scene.ego);
    for (const auto& other : scene.agents) {
        if (other.id != self.id) consider(other.state);
    }
    return lead;
}

void place_on_lane(Agent& agent, const Lane& lane) {
    const Vec2 p = lane.point_at(agent.behavior.s);
    agent.state.pose.x = p.x;
    agent.state.pose.y = p.y;
    agent.state.pose.yaw = normalize_angle(lane.heading_at(agent.behavior.s));
}

void step_agent(const Scene& before, Agent& agent, double dt) {
    auto& b = agent.behavior;
    const Lane& lane = before.lane_by_id_or_throw(b.lane_id);
    double v = agent.state.speed;

    switch (b.kind) {
        case BehaviorKind::Stationary:
            return;
        case BehaviorKind::Idm: {
            const LeadInfo lead = find_lead(before, agent, lane);
            const double v0 = std::min(b.target_speed > 0.0 ? b.target_speed : lane.speed_limit,
                                       lane.speed_limit);
            const double a = idm_accel(v, lead.speed, lead.gap, v0);
            b.s += v * dt;
            v = std::max(0.0, v + a * dt);
            break;
        }
        case BehaviorKind::HardBrake: {
            b.s += v * dt;
            if (before.time >= b.trigger_time) {
                v = std::max(0.0, v - b.brake_decel * dt);
            }
            break;
        }
        case BehaviorKind::CrossTraffic: {
            if (before.time >= b.trigger_time) {
                b.s += v * dt;
                v = b.target_speed;
            }
            break;
        }
    }
    agent.state.speed = v;
    place_on_lane(agent, lane);
}

}  // namespace

Scene step_world(const Scene& scene, const ControlSignal& ego_control, double dt) {
    if (dt <= 0.0) throw std::invalid_argument("step_world: dt must be positive");
    Scene next = scene;

    for (auto& ev : next.scripted_events) {
        if (ev.fired || scene.time < ev.trigger_time) continue;
        for (auto& agent : next.agents) {
            if (agent.id != ev.agent_id) continue;
            switch (ev.kind) {
                case EventKind::AgentHardBrake:
                    agent.behavior.kind = BehaviorKind::HardBrake;
                    agent.behavior.trigger_time = scene.time;
                    agent.behavior.brake_decel = ev.value;
                    break;
                case EventKind::AgentSetSpeed:
                    agent.behavior.target_speed = ev.value;
                    break;
            }
        }
        ev.fired = true;
    }

    next.ego = bicycle_step(scene.ego, ego_control, dt, scene.vehicle_params);
    // Agents read the pre-step snapshot so update order does not matter.
    for (auto& agent : next.agents) step_agent(scene, agent, dt);
    next.time = scene.time + dt;
    return next;
}

}  // namespace takevla
