#include "takevla/expert.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace takevla {

const char* to_string(ExpertIntent i) {
    switch (i) {
        case ExpertIntent::FollowLane: return "FollowLane";
        case ExpertIntent::FollowLead: return "FollowLead";
        case ExpertIntent::Stop: return "Stop";
        case ExpertIntent::ChangeLaneLeft: return "ChangeLaneLeft";
        case ExpertIntent::ChangeLaneRight: return "ChangeLaneRight";
        case ExpertIntent::EmergencyStop: return "EmergencyStop";
        case ExpertIntent::Wait: return "Wait";
    }
    return "?";
}

namespace {

struct LaneLead {
    bool present = false;
    double gap = 0.0;    // bumper gap [m]
    double speed = 0.0;
};

LaneLead lead_on_lane(const Scene& scene, const Lane& lane, double ego_s) {
    LaneLead lead;
    double best = std::numeric_limits<double>::infinity();
    for (const auto& agent : scene.agents) {
        const auto proj = lane.project(agent.state.pose.position());
        if (std::fabs(proj.lateral) > lane.width * 0.5) continue;
        const double ds = proj.s - ego_s;
        if (ds <= 0.0 || ds >= best) continue;
        best = ds;
        lead.present = true;
        lead.gap = ds - 0.5 * (agent.state.length + scene.ego.length);
        lead.speed = agent.state.speed;
    }
    return lead;
}

struct LaneRear {
    bool present = false;
    double gap = 0.0;
    double speed = 0.0;
};

LaneRear rear_on_lane(const Scene& scene, const Lane& lane, double ego_s) {
    LaneRear rear;
    double best = std::numeric_limits<double>::infinity();
    for (const auto& agent : scene.agents) {
        const auto proj = lane.project(agent.state.pose.position());
        if (std::fabs(proj.lateral) > lane.width * 0.5) continue;
        const double ds = ego_s - proj.s;
        if (ds <= 0.0 || ds >= best) continue;
        best = ds;
        rear.present = true;
        rear.gap = ds - 0.5 * (agent.state.length + scene.ego.length);
        rear.speed = agent.state.speed;
    }
    return rear;
}

bool gap_acceptable(const Scene& scene, const Lane& target, double ego_s, const ExpertConfig& cfg) {
    const LaneLead front = lead_on_lane(scene, target, ego_s);
    if (front.present && front.gap < cfg.front_gap_min) return false;
    const LaneRear rear = rear_on_lane(scene, target, ego_s);
    if (rear.present) {
        const double closing = std::max(0.0, rear.speed - scene.ego.speed);
        if (rear.gap < cfg.rear_gap_min + cfg.rear_closing_margin * closing) return false;
    }
    return true;
}

bool lane_in_route(const Route& route, int lane_id) {
    return std::find(route.lane_ids.begin(), route.lane_ids.end(), lane_id) != route.lane_ids.end();
}

// Path waypoints along `lane` from arc position s0, decaying the initial
// lateral offset to the centerline over the blend distance. Ego frame.
std::vector<Vec2> path_along(const Lane& lane, double s0, double lateral0, double blend,
                             const Pose2D& ego_pose, const ActionSpec& spec) {
    std::vector<Vec2> pts;
    pts.reserve(spec.n_path);
    for (int i = 0; i < spec.n_path; ++i) {
        const double ds = (i + 1) * spec.s_path;
        const double s = s0 + ds;
        const double lat = lateral0 * std::max(0.0, 1.0 - ds / blend);
        const Vec2 c = lane.point_at(s);
        const double h = lane.heading_at(s);
        const Vec2 world{c.x - std::sin(h) * lat, c.y + std::cos(h) * lat};
        pts.push_back(ego_pose.world_to_local(world));
    }
    return pts;
}

// Speed waypoints by integrating IDM with end-of-interval speeds, so the
// first waypoint implies exactly the current IDM acceleration. Positions are
// placed along the path waypoints by cumulative distance. Ego frame.
std::vector<Vec2> speed_along(const std::vector<Vec2>& path_local, double v, double a0,
                              const LaneLead& lead, double v0, const IdmParams& idm,
                              const ActionSpec& spec) {
    std::vector<Vec2> pts;
    pts.reserve(spec.n_speed);
    const double dt = spec.dt_speed;
    double gap = lead.present ? lead.gap : -1.0;
    double u = std::max(0.0, v + a0 * dt);
    double dist = 0.0;
    // walk along the local path polyline (starting from the origin),
    // extrapolating along the last segment beyond the path end
    auto point_at_dist = [&](double d) {
        Vec2 prev{0.0, 0.0};
        Vec2 dir{1.0, 0.0};
        for (const auto& p : path_local) {
            const double seg = (p - prev).norm();
            if (seg > 0.0) dir = (p - prev) * (1.0 / seg);
            if (d <= seg && seg > 0.0) return prev + (p - prev) * (d / seg);
            d -= seg;
            prev = p;
        }
        return prev + dir * d;
    };
    for (int k = 0; k < spec.n_speed; ++k) {
        dist += u * dt;
        pts.push_back(point_at_dist(dist));
        if (lead.present) gap += (lead.speed - u) * dt;
        const double a = idm_accel(u, lead.speed, lead.present ? std::max(gap, 0.0) : -1.0, v0, idm);
        u = std::max(0.0, u + a * dt);
    }
    return pts;
}

// Speed waypoints for a deliberate stop: constant deceleration sized to halt
// with the minimum-gap margin before the blocker. Trailing points repeat the
// stop position.
std::vector<Vec2> speed_stopping(const std::vector<Vec2>& path_local, double v, double stop_dist,
                                 const IdmParams& idm, const ActionSpec& spec, double* first_accel) {
    std::vector<Vec2> pts;
    pts.reserve(spec.n_speed);
    const double dt = spec.dt_speed;
    double decel = idm.decel;
    if (stop_dist > 1e-6) {
        decel = std::max(decel, v * v / (2.0 * stop_dist));
    } else if (v > 0.0) {
        decel = idm.decel_cap;
    }
    decel = std::min(decel, idm.decel_cap);
    auto point_at_dist = [&](double d) {
        Vec2 prev{0.0, 0.0};
        Vec2 dir{1.0, 0.0};
        for (const auto& p : path_local) {
            const double seg = (p - prev).norm();
            if (seg > 0.0) dir = (p - prev) * (1.0 / seg);
            if (d <= seg && seg > 0.0) return prev + (p - prev) * (d / seg);
            d -= seg;
            prev = p;
        }
        return prev + dir * d;
    };
    double u = std::max(0.0, v - decel * dt);
    if (first_accel) *first_accel = (u - v) / dt;
    double dist = 0.0;
    for (int k = 0; k < spec.n_speed; ++k) {
        dist = std::min(dist + u * dt, std::max(stop_dist, 0.0));
        pts.push_back(point_at_dist(dist));
        u = std::max(0.0, u - decel * dt);
    }
    return pts;
}

LanguageAction language_for(ExpertIntent intent, const LaneLead& lead, double a0, double ego_speed,
                            bool route_demanded) {
    LanguageAction out;
    switch (intent) {
        case ExpertIntent::FollowLane:
            if (ego_speed < 0.3) {
                out = {MetaAction::Start, Reason::ClearRoad};
            } else if (a0 > 0.3) {
                out = {MetaAction::Accelerate, Reason::ClearRoad};
            } else {
                out = {MetaAction::Follow, Reason::ClearRoad};
            }
            break;
        case ExpertIntent::FollowLead:
            out = {a0 < -0.3 ? MetaAction::Decelerate : MetaAction::Follow, Reason::LeadVehicle};
            break;
        case ExpertIntent::Stop:
            out = {MetaAction::Stop, lead.speed < 0.5 ? Reason::Obstacle : Reason::LeadVehicle};
            break;
        case ExpertIntent::EmergencyStop:
            out = {MetaAction::Stop, Reason::Obstacle};
            break;
        case ExpertIntent::ChangeLaneLeft:
            out = {MetaAction::LaneChangeLeft,
                   route_demanded ? Reason::RouteTurn : Reason::GapAvailable};
            break;
        case ExpertIntent::ChangeLaneRight:
            out = {MetaAction::LaneChangeRight,
                   route_demanded ? Reason::RouteTurn : Reason::GapAvailable};
            break;
        case ExpertIntent::Wait:
            out = {MetaAction::Wait, Reason::NoGap};
            break;
    }
    return out;
}

}  // namespace

ExpertDecision expert_decide(const Scene& scene, const ExpertConfig& cfg) {
    if (scene.route.lane_ids.empty()) throw PlannerFailure("expert_decide: empty route");
    const Lane* current = scene.lane_containing(scene.ego.pose.position());
    if (!current) throw PlannerFailure("expert_decide: ego off all lanes");

    const auto ego_proj = current->project(scene.ego.pose.position());
    const LaneLead lead = lead_on_lane(scene, *current, ego_proj.s);
    const double v = scene.ego.speed;
    const double v0 = current->speed_limit;
    const double a_here = idm_accel(v, lead.speed, lead.present ? lead.gap : -1.0, v0, cfg.idm);

    // Lane-change demand: route prefers another lane, or the current lane is
    // blocked by a stopped vehicle.
    const bool route_demands = !lane_in_route(scene.route, current->id);
    const bool blocked =
        lead.present && lead.speed < cfg.blocked_speed && lead.gap < cfg.blocked_gap;
    const Lane* target = nullptr;
    bool change_left = false;
    if (route_demands || blocked) {
        for (const int neighbour : {current->left_id, current->right_id}) {
            if (neighbour < 0) continue;
            const Lane* cand = scene.lane_by_id(neighbour);
            if (!cand) continue;
            if (route_demands && !lane_in_route(scene.route, cand->id)) continue;
            if (target == nullptr) {
                target = cand;
                change_left = (neighbour == current->left_id);
            }
        }
    }

    ExpertDecision out;
    const Lane* plan_lane = current;
    double plan_lateral = ego_proj.lateral;
    bool change_accepted = false;
    if (target && gap_acceptable(scene, *target, target->project(scene.ego.pose.position()).s, cfg)) {
        change_accepted = true;
        plan_lane = target;
        plan_lateral = target->project(scene.ego.pose.position()).lateral;
    }

    // Intent from the governing branch.
    if (change_accepted) {
        out.intent = change_left ? ExpertIntent::ChangeLaneLeft : ExpertIntent::ChangeLaneRight;
    } else if ((route_demands || blocked) && target && v < 0.5) {
        out.intent = ExpertIntent::Wait;
    } else if (lead.present && a_here < -cfg.emergency_decel) {
        out.intent = ExpertIntent::EmergencyStop;
    } else if (blocked) {
        out.intent = ExpertIntent::Stop;
    } else if (lead.present) {
        out.intent = ExpertIntent::FollowLead;
    } else {
        out.intent = ExpertIntent::FollowLane;
    }

    const auto plan_proj = plan_lane->project(scene.ego.pose.position());
    out.action.path_waypoints = path_along(*plan_lane, plan_proj.s, plan_lateral,
                                           cfg.lane_change_blend, scene.ego.pose, cfg.action_spec);
    // Longitudinal plan follows the lead on the plan lane (equals `lead`
    // unless a change was accepted).
    const LaneLead plan_lead = change_accepted ? lead_on_lane(scene, *plan_lane, plan_proj.s) : lead;
    const double a0 =
        idm_accel(v, plan_lead.speed, plan_lead.present ? plan_lead.gap : -1.0,
                  plan_lane->speed_limit, cfg.idm);
    out.idm_accel = a0;
    if (out.intent == ExpertIntent::Stop || out.intent == ExpertIntent::EmergencyStop ||
        out.intent == ExpertIntent::Wait) {
        const double stop_dist =
            plan_lead.present ? std::max(plan_lead.gap - cfg.idm.min_gap, 0.0) : 0.0;
        out.action.speed_waypoints = speed_stopping(out.action.path_waypoints, v, stop_dist,
                                                    cfg.idm, cfg.action_spec, &out.idm_accel);
    } else {
        out.action.speed_waypoints = speed_along(out.action.path_waypoints, v, a0, plan_lead,
                                                 plan_lane->speed_limit, cfg.idm, cfg.action_spec);
    }
    out.language = language_for(out.intent, plan_lead, a0, v, route_demands);
    return out;
}

std::vector<ExpertDriveTick> expert_drive(const Scene& scene, int horizon_ticks,
                                          const ExpertConfig& cfg) {
    if (horizon_ticks < 1) throw std::invalid_argument("expert_drive: horizon_ticks must be >= 1");
    std::vector<ExpertDriveTick> out;
    out.reserve(horizon_ticks);
    Scene cur = scene;
    PidState pid;
    PidConfig pid_cfg;
    pid_cfg.dt = kWorldDt;
    pid_cfg.dt_speed = cfg.action_spec.dt_speed;
    for (int i = 0; i < horizon_ticks; ++i) {
        ExpertDriveTick tick;
        tick.scene_before = cur;
        tick.decision = expert_decide(cur, cfg);
        const DrivingAction world_action = action_to_world(tick.decision.action, cur.ego.pose);
        auto [control, next_pid] = pid_actuate(world_action, cur.ego, pid, pid_cfg,
                                               cur.vehicle_params);
        pid = next_pid;
        cur = step_world(cur, control, kWorldDt);
        tick.scene_after = cur;
        out.push_back(std::move(tick));
    }
    return out;
}

std::vector<TrajectoryPoint> expert_rollout(const Scene& scene, int horizon_ticks,
                                            const ExpertConfig& cfg) {
    const auto ticks = expert_drive(scene, horizon_ticks, cfg);
    std::vector<TrajectoryPoint> traj;
    traj.reserve(ticks.size());
    for (const auto& t : ticks) {
        traj.push_back({t.scene_after.ego.pose.x, t.scene_after.ego.pose.y,
                        t.scene_after.ego.pose.yaw, t.scene_after.ego.speed});
    }
    return traj;
}

}  // namespace takevla
