#pragma once

#include <optional>
#include <vector>

#include "takevla/expert.hpp"
#include "takevla/scene.hpp"

namespace takevla {

enum class TriggerKind : std::uint8_t {
    Follow = 0,
    Collision,
    Restart,
};

const char* to_string(TriggerKind t);

struct TakeoverEvent {
    TriggerKind trigger = TriggerKind::Follow;
    int t_trigger = 0;        // tick index at 20 Hz
    int takeover_ticks = 50;  // 2.5 s of expert control
    int pre_ticks = 20;       // 1 s pre-takeover window
};

/// Shadow-monitor bookkeeping, one instance per episode.
struct MonitorState {
    int follow_nonresponse_ticks = 0;
    int restart_stuck_ticks = 0;
    bool restart_go_signal = false;  // expert offered a way out during the stuck window
    int cooldown_ticks = 0;          // suppresses re-triggering right after handback

    /// Called when control returns to the policy after a takeover.
    void reset_after_takeover(int cooldown = 20) {
        follow_nonresponse_ticks = 0;
        restart_stuck_ticks = 0;
        restart_go_signal = false;
        cooldown_ticks = cooldown;
    }
};

struct MonitorConfig {
    double follow_expert_decel = -0.5;   // [m/s^2] expert demand below this counts
    double follow_policy_accel = -0.1;   // [m/s^2] policy response above this counts
    int follow_ticks = 10;               // 0.5 s at 20 Hz
    double collision_horizon = 1.0;      // [s] constant-velocity look-ahead
    double collision_dt = 0.05;          // [s] propagation substep
    double restart_speed = 0.3;          // [m/s] stuck threshold
    int restart_ticks = 60;              // 3 s at 20 Hz
    double dt_speed = 0.2;               // [s] spacing of policy speed waypoints
};

/// Constant-velocity collision forecast: propagates ego and agents along their
/// current headings and reports whether any substep within the horizon
/// overlaps. This is the trigger's ground truth, exposed for oracle testing.
bool predict_collision(const Scene& scene, double horizon = 1.0, double dt = 0.05);

/// One shadow-monitoring step. Updates counters from the expert's shadow
/// decision and the policy's action; returns the highest-priority trigger
/// that fired (Collision > Follow > Restart), if any.
std::optional<TriggerKind> check_triggers(const Scene& scene, const DrivingAction& policy_action,
                                          const ExpertDecision& expert_decision, MonitorState& mon,
                                          const MonitorConfig& cfg = {});

struct TakeoverExecution {
    TriggerKind trigger;
    std::vector<ExpertDriveTick> ticks;  // exactly takeover_ticks entries
    Scene final_scene;                   // world state at handback
};

/// Expert drives for `event.takeover_ticks` starting from `scene`; every tick
/// is logged for dataset construction. Throws PlannerFailure if the expert
/// cannot plan.
TakeoverExecution execute_takeover(const Scene& scene, const TakeoverEvent& event,
                                   const ExpertConfig& cfg = {});

/// Rewrites an expert shadow label according to the trigger that fired.
/// Deterministic and idempotent.
LanguageAction enhance_label(const LanguageAction& original, TriggerKind trigger);

/// One tick of shadow-mode history while the policy was driving.
struct ShadowTick {
    Scene scene;
    ExpertDecision expert;
};

struct PreTakeoverRecordLite {
    Scene scene;
    LanguageAction label;  // enhanced with the impending trigger
};

struct PreTakeoverWindow {
    std::vector<PreTakeoverRecordLite> records;
    bool truncated = false;  // history was shorter than pre_ticks
};

/// Extracts the `pre_ticks` shadow ticks immediately before `event.t_trigger`
/// from `episode_log` (indexed by tick). Labels carry the enhanced language;
/// no expert action is attached (mask m=1 downstream).
PreTakeoverWindow extract_pre_takeover(const std::vector<ShadowTick>& episode_log,
                                       const TakeoverEvent& event);

}  // namespace takevla
