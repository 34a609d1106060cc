#include "takevla/takeover.hpp"

#include <cmath>

namespace takevla {

const char* to_string(TriggerKind t) {
    switch (t) {
        case TriggerKind::Follow: return "Follow";
        case TriggerKind::Collision: return "Collision";
        case TriggerKind::Restart: return "Restart";
    }
    return "?";
}

bool predict_collision(const Scene& scene, double horizon, double dt) {
    const int substeps = static_cast<int>(std::round(horizon / dt));
    for (int k = 1; k <= substeps; ++k) {
        const double t = k * dt;
        VehicleState ego = scene.ego;
        ego.pose.x += ego.speed * std::cos(ego.pose.yaw) * t;
        ego.pose.y += ego.speed * std::sin(ego.pose.yaw) * t;
        const Obb ego_box = ego.footprint();
        for (const auto& agent : scene.agents) {
            VehicleState a = agent.state;
            a.pose.x += a.speed * std::cos(a.pose.yaw) * t;
            a.pose.y += a.speed * std::sin(a.pose.yaw) * t;
            if (obb_intersect(ego_box, a.footprint())) return true;
        }
    }
    return false;
}

namespace {

bool expert_demands_decel(const ExpertDecision& d, const MonitorConfig& cfg) {
    switch (d.intent) {
        case ExpertIntent::FollowLead:
        case ExpertIntent::Stop:
        case ExpertIntent::EmergencyStop:
        case ExpertIntent::Wait:
            return d.idm_accel < cfg.follow_expert_decel;
        default:
            return false;
    }
}

bool expert_signals_go(const ExpertDecision& d) {
    return d.intent == ExpertIntent::ChangeLaneLeft || d.intent == ExpertIntent::ChangeLaneRight ||
           d.language.meta == MetaAction::Start;
}

}  // namespace

std::optional<TriggerKind> check_triggers(const Scene& scene, const DrivingAction& policy_action,
                                          const ExpertDecision& expert_decision, MonitorState& mon,
                                          const MonitorConfig& cfg) {
    if (mon.cooldown_ticks > 0) {
        --mon.cooldown_ticks;
        mon.follow_nonresponse_ticks = 0;
        mon.restart_stuck_ticks = 0;
        mon.restart_go_signal = false;
        return std::nullopt;
    }

    // Follow: expert wants deceleration, policy keeps its foot down.
    const double policy_accel = implied_first_accel(policy_action, cfg.dt_speed);
    if (expert_demands_decel(expert_decision, cfg) && policy_accel > cfg.follow_policy_accel) {
        ++mon.follow_nonresponse_ticks;
    } else {
        mon.follow_nonresponse_ticks = 0;
    }

    // Restart: ego stuck while the expert sees a way to move.
    if (scene.ego.speed < cfg.restart_speed) {
        ++mon.restart_stuck_ticks;
        if (expert_signals_go(expert_decision)) mon.restart_go_signal = true;
    } else {
        mon.restart_stuck_ticks = 0;
        mon.restart_go_signal = false;
    }

    if (predict_collision(scene, cfg.collision_horizon, cfg.collision_dt)) {
        return TriggerKind::Collision;
    }
    if (mon.follow_nonresponse_ticks >= cfg.follow_ticks) return TriggerKind::Follow;
    if (mon.restart_stuck_ticks >= cfg.restart_ticks && mon.restart_go_signal) {
        return TriggerKind::Restart;
    }
    return std::nullopt;
}

TakeoverExecution execute_takeover(const Scene& scene, const TakeoverEvent& event,
                                   const ExpertConfig& cfg) {
    if (event.takeover_ticks < 1) throw std::invalid_argument("execute_takeover: takeover_ticks < 1");
    TakeoverExecution out;
    out.trigger = event.trigger;
    out.ticks = expert_drive(scene, event.takeover_ticks, cfg);
    out.final_scene = out.ticks.back().scene_after;
    return out;
}

LanguageAction enhance_label(const LanguageAction& original, TriggerKind trigger) {
    LanguageAction out = original;
    switch (trigger) {
        case TriggerKind::Collision:
            out.meta = MetaAction::EmergencyStop;
            out.reason = Reason::CollisionRisk;
            break;
        case TriggerKind::Follow:
            out.meta = MetaAction::Decelerate;
            out.reason = Reason::LeadVehicleClosing;
            break;
        case TriggerKind::Restart:
            if (out.meta != MetaAction::LaneChangeLeft && out.meta != MetaAction::LaneChangeRight) {
                out.meta = MetaAction::Start;
            }
            out.reason = Reason::GapAvailable;
            break;
    }
    return out;
}

PreTakeoverWindow extract_pre_takeover(const std::vector<ShadowTick>& episode_log,
                                       const TakeoverEvent& event) {
    PreTakeoverWindow out;
    const int end = std::min<int>(event.t_trigger, static_cast<int>(episode_log.size()));
    const int begin = std::max(0, event.t_trigger - event.pre_ticks);
    out.truncated = (end - begin) < event.pre_ticks;
    out.records.reserve(static_cast<std::size_t>(std::max(0, end - begin)));
    for (int i = begin; i < end; ++i) {
        out.records.push_back(
            {episode_log[i].scene, enhance_label(episode_log[i].expert.language, event.trigger)});
    }
    return out;
}

}  // namespace takevla
