#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "takevla/policy.hpp"
#include "takevla/rng.hpp"
#include "takevla/takeover.hpp"

namespace takevla {

enum class RecordSource : std::uint8_t {
    Pretrain = 0,
    Takeover,
    PreTakeover,
};

const char* to_string(RecordSource s);

struct FuturePose {
    double x = 0.0;
    double y = 0.0;
    double yaw = 0.0;
};

struct AgentFuture {
    int agent_id = 0;
    std::vector<FuturePose> poses;  // 5 Hz over 2 s: exactly 10 entries
};

/// One persisted training frame. The expert action is present exactly when the
/// record is non-masked (mask_m = 0, i.e. Pretrain or Takeover).
struct TakeoverRecord {
    std::uint64_t record_id = 0;
    int round = 0;
    RecordSource source = RecordSource::Pretrain;
    std::optional<TriggerKind> trigger;
    ObservationFeatures obs;
    Scene scene_snapshot;
    LanguageAction language_label;
    std::optional<DrivingAction> expert_action;
    int mask_m = 0;
    ExpertIntent expert_intent = ExpertIntent::FollowLane;  // bucket key for Pretrain
    std::vector<AgentFuture> agent_futures;
    std::vector<Vec2> reference_trajectory;  // expert counterfactual, 10 points at 5 Hz

    /// mask/source/action consistency (checked on append and on load).
    bool consistent() const;
};

/// Structured load failure: byte offset of the corrupt record and the index of
/// the last record that parsed cleanly (-1 if none).
struct DatasetParseError : std::runtime_error {
    DatasetParseError(const std::string& msg, std::uint64_t offset, std::int64_t last_valid);
    std::uint64_t byte_offset;
    std::int64_t last_valid_record;
};

/// Append-only dataset writer: length-prefixed binary records behind a
/// versioned header, plus a plain-text manifest sidecar written on close.
class DatasetWriter {
  public:
    explicit DatasetWriter(std::filesystem::path path, int round = 0);
    ~DatasetWriter();

    void append(const TakeoverRecord& record);
    /// Flushes, writes the manifest, and closes the file. Idempotent.
    void close();
    std::size_t count() const { return count_; }

  private:
    std::filesystem::path path_;
    int round_;
    std::size_t count_ = 0;
    std::vector<std::size_t> source_counts_;
    std::string buffer_;
    bool closed_ = false;
};

std::vector<TakeoverRecord> load_dataset(const std::filesystem::path& path);

struct Bucket {
    std::string name;
    std::vector<std::size_t> members;  // indices into the record vector
};

/// The two bucket families used by DAgger-style mixing: takeover-family
/// buckets keyed by trigger x {Takeover, PreTakeover}, pretrain-family
/// buckets keyed by expert intent. Empty buckets are dropped; the remaining
/// buckets in a family share equal sampling weight.
struct BucketSet {
    std::vector<Bucket> pretrain;
    std::vector<Bucket> takeover;
};

BucketSet build_buckets(const std::vector<TakeoverRecord>& records);

/// Draws `batch_size` record indices: each slot picks the takeover family
/// with probability p, then a bucket uniformly within the family, then a
/// record uniformly within the bucket. Throws std::runtime_error when a
/// family with positive probability is empty.
std::vector<std::size_t> sample_batch(const BucketSet& buckets, double p, int batch_size, Rng& rng);

struct RecordedFutures {
    std::vector<AgentFuture> agent_futures;
    std::vector<Vec2> reference_trajectory;
};

/// Builds the 5 Hz futures for the frame at tick `t` of a 20 Hz episode log:
/// agent poses replayed from the log at ticks t+4(k+1), and the expert's
/// counterfactual rollout from the scene at t, subsampled identically.
/// Returns nullopt when the log does not extend 2 s beyond t.
std::optional<RecordedFutures> record_futures(const std::vector<Scene>& episode_log, int t,
                                              const ExpertConfig& cfg = {});

}  // namespace takevla
