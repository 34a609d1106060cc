#include "takevla/datastore.hpp"

#include <cstring>
#include <fstream>

namespace takevla {

const char* to_string(RecordSource s) {
    switch (s) {
        case RecordSource::Pretrain: return "Pretrain";
        case RecordSource::Takeover: return "Takeover";
        case RecordSource::PreTakeover: return "PreTakeover";
    }
    return "?";
}

bool TakeoverRecord::consistent() const {
    const bool masked = mask_m == 1;
    if (masked != (source == RecordSource::PreTakeover)) return false;
    if (masked == expert_action.has_value()) return false;
    if (source == RecordSource::Pretrain && trigger.has_value()) return false;
    if (source != RecordSource::Pretrain && !trigger.has_value()) return false;
    for (const auto& af : agent_futures) {
        if (af.poses.size() != 10) return false;
    }
    return reference_trajectory.size() == 10;
}

DatasetParseError::DatasetParseError(const std::string& msg, std::uint64_t offset,
                                     std::int64_t last_valid)
    : std::runtime_error(msg + " (byte offset " + std::to_string(offset) +
                         ", last valid record " + std::to_string(last_valid) + ")"),
      byte_offset(offset),
      last_valid_record(last_valid) {}

namespace {

constexpr char kDatasetMagic[4] = {'T', 'V', 'D', 'S'};
constexpr std::uint32_t kDatasetVersion = 1;

// ---- byte buffer encoding -------------------------------------------------

struct Encoder {
    std::string& out;
    template <typename T>
    void pod(const T& v) {
        out.append(reinterpret_cast<const char*>(&v), sizeof(T));
    }
    void u8(std::uint8_t v) { pod(v); }
    void i32(std::int32_t v) { pod(v); }
    void u64(std::uint64_t v) { pod(v); }
    void f64(double v) { pod(v); }
    void vec2(const Vec2& v) {
        f64(v.x);
        f64(v.y);
    }
    void size(std::size_t n) { i32(static_cast<std::int32_t>(n)); }
};

struct Decoder {
    const char* data;
    std::size_t len;
    std::size_t pos = 0;

    template <typename T>
    T pod() {
        if (pos + sizeof(T) > len) throw std::runtime_error("record payload truncated");
        T v;
        std::memcpy(&v, data + pos, sizeof(T));
        pos += sizeof(T);
        return v;
    }
    std::uint8_t u8() { return pod<std::uint8_t>(); }
    std::int32_t i32() { return pod<std::int32_t>(); }
    std::uint64_t u64() { return pod<std::uint64_t>(); }
    double f64() { return pod<double>(); }
    Vec2 vec2() {
        Vec2 v;
        v.x = f64();
        v.y = f64();
        return v;
    }
    std::size_t size() {
        const std::int32_t n = i32();
        if (n < 0 || static_cast<std::size_t>(n) > len) throw std::runtime_error("bad length field");
        return static_cast<std::size_t>(n);
    }
};

void encode_vehicle(Encoder& e, const VehicleState& v) {
    e.f64(v.pose.x);
    e.f64(v.pose.y);
    e.f64(v.pose.yaw);
    e.f64(v.speed);
    e.f64(v.length);
    e.f64(v.width);
    e.f64(v.wheelbase);
}

VehicleState decode_vehicle(Decoder& d) {
    VehicleState v;
    v.pose.x = d.f64();
    v.pose.y = d.f64();
    v.pose.yaw = d.f64();
    v.speed = d.f64();
    v.length = d.f64();
    v.width = d.f64();
    v.wheelbase = d.f64();
    return v;
}

void encode_scene(Encoder& e, const Scene& s) {
    e.f64(s.time);
    encode_vehicle(e, s.ego);
    e.size(s.agents.size());
    for (const auto& a : s.agents) {
        e.i32(a.id);
        encode_vehicle(e, a.state);
        e.u8(static_cast<std::uint8_t>(a.behavior.kind));
        e.i32(a.behavior.lane_id);
        e.f64(a.behavior.s);
        e.f64(a.behavior.target_speed);
        e.f64(a.behavior.trigger_time);
        e.f64(a.behavior.brake_decel);
    }
    e.size(s.lanes.size());
    for (const auto& l : s.lanes) {
        e.i32(l.id);
        e.size(l.centerline.size());
        for (const auto& p : l.centerline) e.vec2(p);
        e.f64(l.width);
        e.f64(l.speed_limit);
        e.i32(l.left_id);
        e.i32(l.right_id);
    }
    e.size(s.route.lane_ids.size());
    for (int id : s.route.lane_ids) e.i32(id);
    e.vec2(s.route.goal);
    e.size(s.scripted_events.size());
    for (const auto& ev : s.scripted_events) {
        e.f64(ev.trigger_time);
        e.u8(static_cast<std::uint8_t>(ev.kind));
        e.i32(ev.agent_id);
        e.f64(ev.value);
        e.u8(ev.fired ? 1 : 0);
    }
    e.f64(s.vehicle_params.accel_max);
    e.f64(s.vehicle_params.brake_max);
    e.f64(s.vehicle_params.steer_max);
}

Scene decode_scene(Decoder& d) {
    Scene s;
    s.time = d.f64();
    s.ego = decode_vehicle(d);
    s.agents.resize(d.size());
    for (auto& a : s.agents) {
        a.id = d.i32();
        a.state = decode_vehicle(d);
        a.behavior.kind = static_cast<BehaviorKind>(d.u8());
        a.behavior.lane_id = d.i32();
        a.behavior.s = d.f64();
        a.behavior.target_speed = d.f64();
        a.behavior.trigger_time = d.f64();
        a.behavior.brake_decel = d.f64();
    }
    s.lanes.resize(d.size());
    for (auto& l : s.lanes) {
        l.id = d.i32();
        l.centerline.resize(d.size());
        for (auto& p : l.centerline) p = d.vec2();
        l.width = d.f64();
        l.speed_limit = d.f64();
        l.left_id = d.i32();
        l.right_id = d.i32();
    }
    s.route.lane_ids.resize(d.size());
    for (auto& id : s.route.lane_ids) id = d.i32();
    s.route.goal = d.vec2();
    s.scripted_events.resize(d.size());
    for (auto& ev : s.scripted_events) {
        ev.trigger_time = d.f64();
        ev.kind = static_cast<EventKind>(d.u8());
        ev.agent_id = d.i32();
        ev.value = d.f64();
        ev.fired = d.u8() != 0;
    }
    s.vehicle_params.accel_max = d.f64();
    s.vehicle_params.brake_max = d.f64();
    s.vehicle_params.steer_max = d.f64();
    return s;
}

void encode_action(Encoder& e, const DrivingAction& a) {
    e.size(a.path_waypoints.size());
    for (const auto& p : a.path_waypoints) e.vec2(p);
    e.size(a.speed_waypoints.size());
    for (const auto& p : a.speed_waypoints) e.vec2(p);
}

DrivingAction decode_action(Decoder& d) {
    DrivingAction a;
    a.path_waypoints.resize(d.size());
    for (auto& p : a.path_waypoints) p = d.vec2();
    a.speed_waypoints.resize(d.size());
    for (auto& p : a.speed_waypoints) p = d.vec2();
    return a;
}

std::string encode_record(const TakeoverRecord& r) {
    std::string payload;
    Encoder e{payload};
    e.u64(r.record_id);
    e.i32(r.round);
    e.u8(static_cast<std::uint8_t>(r.source));
    e.u8(r.trigger ? static_cast<std::uint8_t>(*r.trigger) + 1 : 0);
    for (double v : r.obs.values) e.f64(v);
    e.u8(static_cast<std::uint8_t>(r.obs.nav));
    encode_scene(e, r.scene_snapshot);
    e.u8(static_cast<std::uint8_t>(r.language_label.meta));
    e.u8(static_cast<std::uint8_t>(r.language_label.reason));
    e.u8(r.expert_action ? 1 : 0);
    if (r.expert_action) encode_action(e, *r.expert_action);
    e.u8(static_cast<std::uint8_t>(r.mask_m));
    e.u8(static_cast<std::uint8_t>(r.expert_intent));
    e.size(r.agent_futures.size());
    for (const auto& af : r.agent_futures) {
        e.i32(af.agent_id);
        e.size(af.poses.size());
        for (const auto& p : af.poses) {
            e.f64(p.x);
            e.f64(p.y);
            e.f64(p.yaw);
        }
    }
    e.size(r.reference_trajectory.size());
    for (const auto& p : r.reference_trajectory) e.vec2(p);
    return payload;
}

TakeoverRecord decode_record(const char* data, std::size_t len) {
    Decoder d{data, len};
    TakeoverRecord r;
    r.record_id = d.u64();
    r.round = d.i32();
    r.source = static_cast<RecordSource>(d.u8());
    const std::uint8_t trig = d.u8();
    if (trig > 0) r.trigger = static_cast<TriggerKind>(trig - 1);
    for (double& v : r.obs.values) v = d.f64();
    r.obs.nav = static_cast<NavCommand>(d.u8());
    r.scene_snapshot = decode_scene(d);
    r.language_label.meta = static_cast<MetaAction>(d.u8());
    r.language_label.reason = static_cast<Reason>(d.u8());
    if (d.u8() != 0) r.expert_action = decode_action(d);
    r.mask_m = d.u8();
    r.expert_intent = static_cast<ExpertIntent>(d.u8());
    r.agent_futures.resize(d.size());
    for (auto& af : r.agent_futures) {
        af.agent_id = d.i32();
        af.poses.resize(d.size());
        for (auto& p : af.poses) {
            p.x = d.f64();
            p.y = d.f64();
            p.yaw = d.f64();
        }
    }
    r.reference_trajectory.resize(d.size());
    for (auto& p : r.reference_trajectory) p = d.vec2();
    if (d.pos != len) throw std::runtime_error("trailing bytes after record payload");
    return r;
}

}  // namespace

DatasetWriter::DatasetWriter(std::filesystem::path path, int round)
    : path_(std::move(path)), round_(round), source_counts_(3, 0) {
    Encoder e{buffer_};
    buffer_.append(kDatasetMagic, 4);
    e.pod(kDatasetVersion);
    e.i32(round_);
}

DatasetWriter::~DatasetWriter() {
    try {
        close();
    } catch (...) {
        // destructor must not throw; an explicit close() reports errors
    }
}

void DatasetWriter::append(const TakeoverRecord& record) {
    if (closed_) throw std::logic_error("DatasetWriter: append after close");
    if (!record.consistent()) throw std::invalid_argument("DatasetWriter: inconsistent record");
    const std::string payload = encode_record(record);
    Encoder e{buffer_};
    e.pod(static_cast<std::uint32_t>(payload.size()));
    buffer_ += payload;
    ++count_;
    ++source_counts_[static_cast<int>(record.source)];
}

void DatasetWriter::close() {
    if (closed_) return;
    closed_ = true;
    std::ofstream out(path_, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("DatasetWriter: cannot open " + path_.string());
    out.write(buffer_.data(), static_cast<std::streamsize>(buffer_.size()));
    if (!out) throw std::runtime_error("DatasetWriter: write failed " + path_.string());
    out.close();

    std::ofstream manifest(path_.string() + ".manifest", std::ios::trunc);
    manifest << "round " << round_ << "\n";
    manifest << "records " << count_ << "\n";
    manifest << "pretrain " << source_counts_[0] << "\n";
    manifest << "takeover " << source_counts_[1] << "\n";
    manifest << "pre_takeover " << source_counts_[2] << "\n";
}

std::vector<TakeoverRecord> load_dataset(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("load_dataset: cannot open " + path.string());
    std::string data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

    if (data.size() < 12 || std::memcmp(data.data(), kDatasetMagic, 4) != 0) {
        throw DatasetParseError("bad dataset header", 0, -1);
    }
    std::uint32_t version;
    std::memcpy(&version, data.data() + 4, 4);
    if (version != kDatasetVersion) throw DatasetParseError("unsupported dataset version", 4, -1);

    std::vector<TakeoverRecord> records;
    std::size_t pos = 12;
    while (pos < data.size()) {
        const std::int64_t last = static_cast<std::int64_t>(records.size()) - 1;
        if (pos + 4 > data.size()) {
            throw DatasetParseError("truncated record length prefix", pos, last);
        }
        std::uint32_t len;
        std::memcpy(&len, data.data() + pos, 4);
        if (pos + 4 + len > data.size()) {
            throw DatasetParseError("truncated record payload", pos, last);
        }
        TakeoverRecord r;
        try {
            r = decode_record(data.data() + pos + 4, len);
        } catch (const std::exception& ex) {
            throw DatasetParseError(std::string("corrupt record: ") + ex.what(), pos, last);
        }
        if (!r.consistent()) {
            throw DatasetParseError("record violates mask/source/action invariant", pos, last);
        }
        records.push_back(std::move(r));
        pos += 4 + len;
    }
    return records;
}

BucketSet build_buckets(const std::vector<TakeoverRecord>& records) {
    BucketSet out;
    const char* intents[] = {"FollowLane", "FollowLead", "Stop",         "ChangeLaneLeft",
                             "ChangeLaneRight", "EmergencyStop", "Wait"};
    std::vector<Bucket> pretrain(7);
    for (int i = 0; i < 7; ++i) pretrain[i].name = std::string("pretrain/") + intents[i];
    std::vector<Bucket> takeover(6);
    for (int t = 0; t < 3; ++t) {
        takeover[2 * t].name = std::string("takeover/") + to_string(static_cast<TriggerKind>(t));
        takeover[2 * t + 1].name =
            std::string("pre_takeover/") + to_string(static_cast<TriggerKind>(t));
    }

    for (std::size_t i = 0; i < records.size(); ++i) {
        const auto& r = records[i];
        if (r.source == RecordSource::Pretrain) {
            pretrain[static_cast<int>(r.expert_intent)].members.push_back(i);
        } else {
            const int t = static_cast<int>(*r.trigger);
            const int offset = r.source == RecordSource::Takeover ? 0 : 1;
            takeover[2 * t + offset].members.push_back(i);
        }
    }
    for (auto& b : pretrain) {
        if (!b.members.empty()) out.pretrain.push_back(std::move(b));
    }
    for (auto& b : takeover) {
        if (!b.members.empty()) out.takeover.push_back(std::move(b));
    }
    return out;
}

std::vector<std::size_t> sample_batch(const BucketSet& buckets, double p, int batch_size, Rng& rng) {
    if (p < 0.0 || p > 1.0) throw std::invalid_argument("sample_batch: p out of [0,1]");
    if (p > 0.0 && buckets.takeover.empty()) {
        throw std::runtime_error("sample_batch: takeover family empty with p > 0");
    }
    if (p < 1.0 && buckets.pretrain.empty()) {
        throw std::runtime_error("sample_batch: pretrain family empty with p < 1");
    }
    std::vector<std::size_t> out;
    out.reserve(static_cast<std::size_t>(batch_size));
    for (int i = 0; i < batch_size; ++i) {
        const auto& family = (rng.uniform() < p) ? buckets.takeover : buckets.pretrain;
        const auto& bucket = family[rng.below(family.size())];
        out.push_back(bucket.members[rng.below(bucket.members.size())]);
    }
    return out;
}

std::optional<RecordedFutures> record_futures(const std::vector<Scene>& episode_log, int t,
                                              const ExpertConfig& cfg) {
    constexpr int kSteps = 10;
    constexpr int kStride = 4;  // 20 Hz log -> 5 Hz futures
    if (t < 0 || t + kSteps * kStride >= static_cast<int>(episode_log.size())) return std::nullopt;

    RecordedFutures out;
    const Scene& now = episode_log[static_cast<std::size_t>(t)];
    for (const auto& agent : now.agents) {
        AgentFuture af;
        af.agent_id = agent.id;
        af.poses.reserve(kSteps);
        for (int k = 0; k < kSteps; ++k) {
            const Scene& fut = episode_log[static_cast<std::size_t>(t + kStride * (k + 1))];
            bool found = false;
            for (const auto& fa : fut.agents) {
                if (fa.id != agent.id) continue;
                af.poses.push_back({fa.state.pose.x, fa.state.pose.y, fa.state.pose.yaw});
                found = true;
                break;
            }
            if (!found) return std::nullopt;  // agent left the log mid-horizon
        }
        out.agent_futures.push_back(std::move(af));
    }

    const auto ref = expert_rollout(now, kSteps * kStride, cfg);
    out.reference_trajectory.reserve(kSteps);
    for (int k = 0; k < kSteps; ++k) {
        const auto& pt = ref[static_cast<std::size_t>(kStride * (k + 1) - 1)];
        out.reference_trajectory.push_back({pt.x, pt.y});
    }
    return out;
}

}  // namespace takevla
