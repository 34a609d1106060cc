#include <cmath>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "takevla/datastore.hpp"

using namespace takevla;

namespace {

Scene small_scene() {
    Scene s;
    Lane l;
    l.id = 0;
    l.centerline = {{0.0, 0.0}, {600.0, 0.0}};
    s.lanes.push_back(l);
    s.route.lane_ids = {0};
    s.route.goal = {550.0, 0.0};
    s.ego.pose = {20.0, 0.0, 0.0};
    s.ego.speed = 5.0;
    return s;
}

DrivingAction some_action(double scale) {
    DrivingAction a;
    for (int k = 0; k < 10; ++k) {
        a.path_waypoints.push_back({scale * (k + 1), 0.1 * k});
        a.speed_waypoints.push_back({scale * 0.2 * (k + 1), 0.0});
    }
    return a;
}

TakeoverRecord make_record(std::uint64_t id, RecordSource source,
                           std::optional<TriggerKind> trigger, ExpertIntent intent) {
    TakeoverRecord r;
    r.record_id = id;
    r.round = 1;
    r.source = source;
    r.trigger = trigger;
    for (int i = 0; i < kFeatureDim; ++i) {
        r.obs.values[i] = std::sin(0.1 * static_cast<double>(id) + i);  // arbitrary exact payload
    }
    r.obs.nav = NavCommand::Straight;
    r.scene_snapshot = small_scene();
    r.scene_snapshot.time = 0.05 * static_cast<double>(id);
    r.language_label = {MetaAction::Follow, Reason::ClearRoad};
    r.mask_m = source == RecordSource::PreTakeover ? 1 : 0;
    if (r.mask_m == 0) r.expert_action = some_action(1.0 + 0.001 * static_cast<double>(id));
    r.expert_intent = intent;
    for (int a = 0; a < 2; ++a) {
        AgentFuture af;
        af.agent_id = a + 1;
        for (int k = 0; k < 10; ++k) af.poses.push_back({30.0 + k + a, 0.5 * a, 0.01 * k});
        r.agent_futures.push_back(af);
    }
    for (int k = 0; k < 10; ++k) r.reference_trajectory.push_back({20.0 + k, 0.0});
    return r;
}

std::filesystem::path tmp_file(const char* name) {
    return std::filesystem::temp_directory_path() / name;
}

}  // namespace

TEST_CASE("dataset: 1000 records round-trip bit-exactly") {
    const auto path = tmp_file("takevla_ds_roundtrip.bin");
    std::vector<TakeoverRecord> written;
    {
        DatasetWriter w(path, 1);
        for (int i = 0; i < 1000; ++i) {
            const auto source = static_cast<RecordSource>(i % 3);
            std::optional<TriggerKind> trig;
            if (source != RecordSource::Pretrain) trig = static_cast<TriggerKind>(i % 3 == 1 ? i % 2 : 2);
            auto r = make_record(static_cast<std::uint64_t>(i), source, trig,
                                 static_cast<ExpertIntent>(i % 7));
            w.append(r);
            written.push_back(std::move(r));
        }
        w.close();
    }

    const auto loaded = load_dataset(path);
    REQUIRE(loaded.size() == written.size());
    for (std::size_t i = 0; i < loaded.size(); ++i) {
        const auto& a = written[i];
        const auto& b = loaded[i];
        CHECK(a.record_id == b.record_id);
        CHECK(a.source == b.source);
        CHECK(a.trigger == b.trigger);
        CHECK(a.mask_m == b.mask_m);
        CHECK(a.expert_intent == b.expert_intent);
        for (int k = 0; k < kFeatureDim; ++k) CHECK(a.obs.values[k] == b.obs.values[k]);
        CHECK(a.scene_snapshot.time == b.scene_snapshot.time);
        CHECK(a.scene_snapshot.ego.pose.x == b.scene_snapshot.ego.pose.x);
        REQUIRE(a.scene_snapshot.lanes.size() == b.scene_snapshot.lanes.size());
        CHECK(a.expert_action.has_value() == b.expert_action.has_value());
        if (a.expert_action) {
            for (std::size_t k = 0; k < a.expert_action->speed_waypoints.size(); ++k) {
                CHECK(a.expert_action->speed_waypoints[k].x == b.expert_action->speed_waypoints[k].x);
            }
        }
        REQUIRE(a.agent_futures.size() == b.agent_futures.size());
        for (std::size_t j = 0; j < a.agent_futures.size(); ++j) {
            for (int k = 0; k < 10; ++k) {
                CHECK(a.agent_futures[j].poses[k].x == b.agent_futures[j].poses[k].x);
                CHECK(a.agent_futures[j].poses[k].yaw == b.agent_futures[j].poses[k].yaw);
            }
        }
        for (int k = 0; k < 10; ++k) {
            CHECK(a.reference_trajectory[k].x == b.reference_trajectory[k].x);
        }
    }
    std::filesystem::remove(path);
    std::filesystem::remove(path.string() + ".manifest");
}

TEST_CASE("dataset: empty file loads as empty") {
    const auto path = tmp_file("takevla_ds_empty.bin");
    {
        DatasetWriter w(path, 0);
        w.close();
    }
    CHECK(load_dataset(path).empty());
    std::filesystem::remove(path);
    std::filesystem::remove(path.string() + ".manifest");
}

TEST_CASE("dataset: truncated file reports offset and last valid record") {
    const auto path = tmp_file("takevla_ds_trunc.bin");
    {
        DatasetWriter w(path, 0);
        for (int i = 0; i < 3; ++i) {
            w.append(make_record(static_cast<std::uint64_t>(i), RecordSource::Pretrain, std::nullopt,
                                 ExpertIntent::FollowLane));
        }
        w.close();
    }
    const auto full_size = std::filesystem::file_size(path);
    std::filesystem::resize_file(path, full_size - 10);  // cut into the last record
    try {
        load_dataset(path);
        FAIL("expected DatasetParseError");
    } catch (const DatasetParseError& e) {
        CHECK(e.last_valid_record == 1);
        CHECK(e.byte_offset > 12);
        CHECK(e.byte_offset < full_size);
    }
    std::filesystem::remove(path);
    std::filesystem::remove(path.string() + ".manifest");
}

TEST_CASE("dataset: appending an inconsistent record throws") {
    const auto path = tmp_file("takevla_ds_bad.bin");
    DatasetWriter w(path, 0);
    auto r = make_record(0, RecordSource::PreTakeover, TriggerKind::Follow, ExpertIntent::Stop);
    r.expert_action = some_action(1.0);  // masked record must not carry an action
    CHECK_THROWS_AS(w.append(r), std::invalid_argument);
    w.close();
    std::filesystem::remove(path);
    std::filesystem::remove(path.string() + ".manifest");
}

TEST_CASE("buckets: every record lands in exactly one bucket of its family") {
    std::vector<TakeoverRecord> records;
    for (int i = 0; i < 60; ++i) {
        const auto source = static_cast<RecordSource>(i % 3);
        std::optional<TriggerKind> trig;
        if (source != RecordSource::Pretrain) trig = static_cast<TriggerKind>(i % 3);
        records.push_back(make_record(static_cast<std::uint64_t>(i), source, trig,
                                      static_cast<ExpertIntent>(i % 7)));
    }
    const auto buckets = build_buckets(records);
    std::vector<int> seen(records.size(), 0);
    for (const auto& b : buckets.pretrain) {
        for (auto i : b.members) ++seen[i];
    }
    for (const auto& b : buckets.takeover) {
        for (auto i : b.members) ++seen[i];
    }
    for (int count : seen) CHECK(count == 1);
    CHECK(!buckets.pretrain.empty());
    CHECK(!buckets.takeover.empty());
}

TEST_CASE("sample_batch: p extremes, binomial statistics, reproducibility") {
    std::vector<TakeoverRecord> records;
    for (int i = 0; i < 30; ++i) {
        const auto source = i < 15 ? RecordSource::Pretrain
                                   : (i % 2 ? RecordSource::Takeover : RecordSource::PreTakeover);
        std::optional<TriggerKind> trig;
        if (source != RecordSource::Pretrain) trig = static_cast<TriggerKind>(i % 3);
        records.push_back(make_record(static_cast<std::uint64_t>(i), source, trig,
                                      static_cast<ExpertIntent>(i % 7)));
    }
    const auto buckets = build_buckets(records);
    auto is_takeover_family = [&](std::size_t i) {
        return records[i].source != RecordSource::Pretrain;
    };

    Rng rng(7);
    for (auto i : sample_batch(buckets, 0.0, 200, rng)) CHECK(!is_takeover_family(i));
    for (auto i : sample_batch(buckets, 1.0, 200, rng)) CHECK(is_takeover_family(i));

    const int n = 100000;
    int takeover_hits = 0;
    for (auto i : sample_batch(buckets, 0.2, n, rng)) takeover_hits += is_takeover_family(i);
    const double sd = std::sqrt(n * 0.2 * 0.8);
    CHECK(std::fabs(takeover_hits - 0.2 * n) <= 3.0 * sd);

    Rng r1(42), r2(42);
    CHECK(sample_batch(buckets, 0.2, 64, r1) == sample_batch(buckets, 0.2, 64, r2));

    BucketSet no_takeover;
    no_takeover.pretrain = buckets.pretrain;
    CHECK_THROWS_AS(sample_batch(no_takeover, 0.2, 8, rng), std::runtime_error);
}

TEST_CASE("record_futures: subsampling, spacing, and insufficient-history cases") {
    Scene s = small_scene();
    Agent moving;
    moving.id = 1;
    moving.state.pose = {60.0, 0.0, 0.0};
    moving.state.speed = 5.0;
    moving.behavior = {BehaviorKind::Idm, 0, 60.0, 5.0, 0.0, 6.0};
    s.agents.push_back(moving);
    Agent parked;
    parked.id = 2;
    parked.state.pose = {5.0, 0.0, 0.0};  // behind the ego: no one follows it
    parked.state.speed = 0.0;
    parked.behavior = {BehaviorKind::Stationary, 0, 5.0, 0.0, 0.0, 6.0};
    s.agents.push_back(parked);

    std::vector<Scene> log{s};
    for (int i = 0; i < 44; ++i) log.push_back(step_world(log.back(), {0.0, 0.0, 0.0}));

    const auto futures = record_futures(log, 0);
    REQUIRE(futures.has_value());
    REQUIRE(futures->agent_futures.size() == 2);
    REQUIRE(futures->reference_trajectory.size() == 10);

    const auto& mv = futures->agent_futures[0];
    // constant 5 m/s at 5 Hz: consecutive future points exactly 1.0 m apart
    for (int k = 1; k < 10; ++k) {
        CHECK(mv.poses[k].x - mv.poses[k - 1].x == doctest::Approx(1.0).epsilon(1e-9));
    }
    // subsampling hits the 20 Hz log at tick 4(k+1) exactly
    for (int k = 0; k < 10; ++k) {
        CHECK(mv.poses[k].x == log[static_cast<std::size_t>(4 * (k + 1))].agents[0].state.pose.x);
    }
    const auto& st = futures->agent_futures[1];
    for (int k = 0; k < 10; ++k) {
        CHECK(st.poses[k].x == 5.0);
        CHECK(st.poses[k].y == 0.0);
    }

    CHECK(!record_futures(log, 5).has_value());   // only 39 ticks of future left
    CHECK(record_futures(log, 4).has_value());    // exactly 40 ticks of future
    CHECK(!record_futures(log, -1).has_value());
}
