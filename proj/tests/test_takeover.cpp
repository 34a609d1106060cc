#include <cmath>

#include "doctest.h"
#include "takevla/takeover.hpp"

using namespace takevla;

namespace {

Scene base_scene(double ego_speed) {
    Scene s;
    Lane l;
    l.id = 0;
    l.centerline = {{0.0, 0.0}, {600.0, 0.0}};
    s.lanes.push_back(l);
    s.route.lane_ids = {0};
    s.route.goal = {550.0, 0.0};
    s.ego.pose = {20.0, 0.0, 0.0};
    s.ego.speed = ego_speed;
    return s;
}

Agent agent_at(int id, double x, double speed, double y = 0.0, double yaw = 0.0) {
    Agent a;
    a.id = id;
    a.state.pose = {x, y, yaw};
    a.state.speed = speed;
    a.behavior = {speed > 0.0 ? BehaviorKind::Idm : BehaviorKind::Stationary, 0, x, speed, 0.0, 6.0};
    return a;
}

// Policy action holding a constant speed profile (implied acceleration 0).
DrivingAction constant_speed_action(double v) {
    DrivingAction a;
    for (int k = 0; k < 10; ++k) {
        a.path_waypoints.push_back({static_cast<double>(k + 1), 0.0});
        a.speed_waypoints.push_back({v * 0.2 * (k + 1), 0.0});
    }
    return a;
}

// Policy action braking at `decel` (implied acceleration clearly negative).
DrivingAction braking_action(double v, double decel) {
    DrivingAction a;
    double u = v, s = 0.0;
    for (int k = 0; k < 10; ++k) {
        u = std::max(0.0, u - decel * 0.2);
        s += u * 0.2;
        a.path_waypoints.push_back({static_cast<double>(k + 1), 0.0});
        a.speed_waypoints.push_back({s, 0.0});
    }
    return a;
}

// Independent constant-velocity propagation oracle, written directly from the
// trigger definition: advance every vehicle along its heading and test overlap
// at each 0.05 s substep over 1 s.
bool oracle_collision(const Scene& s) {
    for (int k = 1; k <= 20; ++k) {
        const double t = 0.05 * k;
        VehicleState ego = s.ego;
        ego.pose.x += ego.speed * std::cos(ego.pose.yaw) * t;
        ego.pose.y += ego.speed * std::sin(ego.pose.yaw) * t;
        for (const auto& agent : s.agents) {
            VehicleState o = agent.state;
            o.pose.x += o.speed * std::cos(o.pose.yaw) * t;
            o.pose.y += o.speed * std::sin(o.pose.yaw) * t;
            if (obb_intersect(ego.footprint(), o.footprint())) return true;
        }
    }
    return false;
}

}  // namespace

TEST_CASE("check_triggers: free road with matching policy never fires") {
    Scene s = base_scene(6.0);
    MonitorState mon;
    const auto expert = expert_decide(s);
    for (int i = 0; i < 40; ++i) {
        const auto fired = check_triggers(s, expert.action, expert, mon);
        CHECK(!fired.has_value());
    }
    CHECK(mon.follow_nonresponse_ticks == 0);
    CHECK(mon.restart_stuck_ticks == 0);
}

TEST_CASE("check_triggers: Follow fires after 10 non-responsive ticks") {
    Scene s = base_scene(8.0);
    s.agents.push_back(agent_at(1, 20.0 + 10.0 + 4.0, 2.0));  // 10 m bumper gap, slow lead
    const auto expert = expert_decide(s);
    REQUIRE(expert.idm_accel < -0.5);

    MonitorState mon;
    const auto policy = constant_speed_action(8.0);
    for (int i = 1; i <= 9; ++i) {
        CHECK(!check_triggers(s, policy, expert, mon).has_value());
        CHECK(mon.follow_nonresponse_ticks == i);
    }
    const auto fired = check_triggers(s, policy, expert, mon);
    REQUIRE(fired.has_value());
    CHECK(*fired == TriggerKind::Follow);
}

TEST_CASE("check_triggers: Follow counter resets when the policy brakes") {
    Scene s = base_scene(8.0);
    s.agents.push_back(agent_at(1, 20.0 + 10.0 + 4.0, 2.0));
    const auto expert = expert_decide(s);
    MonitorState mon;
    const auto hold = constant_speed_action(8.0);
    for (int i = 0; i < 8; ++i) check_triggers(s, hold, expert, mon);
    CHECK(mon.follow_nonresponse_ticks == 8);
    check_triggers(s, braking_action(8.0, 2.0), expert, mon);
    CHECK(mon.follow_nonresponse_ticks == 0);
}

TEST_CASE("check_triggers: Collision fires for stopped obstacle inside 1 s reach") {
    Scene s = base_scene(10.0);
    // 8 m bumper gap: ego covers 10 m at constant velocity, so overlap occurs
    s.agents.push_back(agent_at(1, 20.0 + 8.0 + 4.0, 0.0));
    REQUIRE(oracle_collision(s));
    MonitorState mon;
    const auto expert = expert_decide(s);
    const auto fired = check_triggers(s, constant_speed_action(10.0), expert, mon);
    REQUIRE(fired.has_value());
    CHECK(*fired == TriggerKind::Collision);
}

TEST_CASE("check_triggers: Collision agrees exactly with the substep oracle") {
    std::uint64_t state = 12345;
    auto next = [&state] {
        state = state * 6364136223846793005ULL + 1442695040888963407ULL;
        return static_cast<double>(state >> 11) * 0x1.0p-53;
    };
    int hits = 0;
    for (int trial = 0; trial < 300; ++trial) {
        Scene s = base_scene(next() * 12.0);
        s.ego.pose.yaw = (next() - 0.5) * 0.4;
        Agent a = agent_at(1, 20.0 + next() * 25.0, next() * 10.0, (next() - 0.5) * 6.0,
                           (next() - 0.5) * 3.0);
        s.agents.push_back(a);
        CHECK(predict_collision(s) == oracle_collision(s));
        if (oracle_collision(s)) ++hits;
    }
    CHECK(hits > 10);  // the sweep must actually exercise both outcomes
    CHECK(hits < 290);
}

TEST_CASE("check_triggers: Restart fires when stuck with an expert go signal") {
    Scene s = base_scene(0.0);  // standstill on a free road; expert says Start
    MonitorState mon;
    const auto expert = expert_decide(s);
    REQUIRE(expert.language.meta == MetaAction::Start);
    const auto policy = constant_speed_action(0.0);
    for (int i = 1; i < 60; ++i) CHECK(!check_triggers(s, policy, expert, mon).has_value());
    const auto fired = check_triggers(s, policy, expert, mon);
    REQUIRE(fired.has_value());
    CHECK(*fired == TriggerKind::Restart);
}

TEST_CASE("check_triggers: cooldown suppresses retriggering after handback") {
    Scene s = base_scene(10.0);
    s.agents.push_back(agent_at(1, 20.0 + 8.0 + 4.0, 0.0));  // imminent collision
    MonitorState mon;
    mon.reset_after_takeover(20);
    const auto expert = expert_decide(s);
    const auto policy = constant_speed_action(10.0);
    for (int i = 0; i < 20; ++i) CHECK(!check_triggers(s, policy, expert, mon).has_value());
    const auto fired = check_triggers(s, policy, expert, mon);
    REQUIRE(fired.has_value());
    CHECK(*fired == TriggerKind::Collision);
}

TEST_CASE("execute_takeover: 50 logged ticks spanning 2.5 s without collision") {
    Scene s = base_scene(8.0);
    s.agents.push_back(agent_at(1, 20.0 + 15.0 + 4.0, 2.0));
    TakeoverEvent event{TriggerKind::Follow, 100, 50, 20};
    const auto exec = execute_takeover(s, event);
    CHECK(exec.ticks.size() == 50);
    CHECK(exec.final_scene.time == doctest::Approx(s.time + 2.5).epsilon(1e-9));
    for (const auto& tick : exec.ticks) {
        CHECK(!ego_collides(tick.scene_after));
    }
    CHECK(exec.trigger == TriggerKind::Follow);
}

TEST_CASE("enhance_label: trigger table and idempotence") {
    const LanguageAction in{MetaAction::Decelerate, Reason::LeadVehicle};
    const auto col = enhance_label(in, TriggerKind::Collision);
    CHECK(col.meta == MetaAction::EmergencyStop);
    CHECK(col.reason == Reason::CollisionRisk);

    const auto fol = enhance_label({MetaAction::Follow, Reason::ClearRoad}, TriggerKind::Follow);
    CHECK(fol.meta == MetaAction::Decelerate);
    CHECK(fol.reason == Reason::LeadVehicleClosing);

    const auto res = enhance_label({MetaAction::Wait, Reason::NoGap}, TriggerKind::Restart);
    CHECK(res.meta == MetaAction::Start);
    CHECK(res.reason == Reason::GapAvailable);
    const auto res_lc =
        enhance_label({MetaAction::LaneChangeLeft, Reason::NoGap}, TriggerKind::Restart);
    CHECK(res_lc.meta == MetaAction::LaneChangeLeft);
    CHECK(res_lc.reason == Reason::GapAvailable);

    // idempotence over the whole label space
    for (int m = 0; m < kMetaVocabSize; ++m) {
        for (int r = 0; r < kReasonVocabSize; ++r) {
            for (TriggerKind t : {TriggerKind::Follow, TriggerKind::Collision, TriggerKind::Restart}) {
                const LanguageAction x{static_cast<MetaAction>(m), static_cast<Reason>(r)};
                const auto once = enhance_label(x, t);
                const auto twice = enhance_label(once, t);
                CHECK(once.meta == twice.meta);
                CHECK(once.reason == twice.reason);
            }
        }
    }
}

TEST_CASE("extract_pre_takeover: window size, truncation, enhanced labels") {
    Scene s = base_scene(6.0);
    std::vector<ShadowTick> log;
    for (int i = 0; i < 40; ++i) {
        ShadowTick tick;
        tick.scene = s;
        tick.scene.time = i * kWorldDt;
        tick.expert = expert_decide(tick.scene);
        log.push_back(tick);
    }

    TakeoverEvent event{TriggerKind::Collision, 40, 50, 20};
    const auto win = extract_pre_takeover(log, event);
    CHECK(win.records.size() == 20);
    CHECK(!win.truncated);
    CHECK(win.records.back().scene.time - win.records.front().scene.time ==
          doctest::Approx(19 * kWorldDt));
    for (const auto& r : win.records) {
        CHECK(r.label.meta == MetaAction::EmergencyStop);
        CHECK(r.label.reason == Reason::CollisionRisk);
    }

    TakeoverEvent early{TriggerKind::Follow, 5, 50, 20};
    const auto short_win = extract_pre_takeover(log, early);
    CHECK(short_win.records.size() == 5);
    CHECK(short_win.truncated);

    TakeoverEvent none{TriggerKind::Follow, 40, 50, 0};
    CHECK(extract_pre_takeover(log, none).records.empty());
}
