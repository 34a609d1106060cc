#pragma once

#include <filesystem>
#include <optional>
#include <vector>

#include "takevla/datastore.hpp"
#include "takevla/policy.hpp"

namespace takevla {

struct SFTConfig {
    int batch_size = 64;
    int epochs = 8;
    double lr = 1e-3;  // toy-net scale; cosine-annealed to 0 over training
    double p = 0.2;    // takeover-family mixing probability
    double smooth_l1_beta = 1.0;      // [m]
    double language_weight = 1.0;     // language : action term weighting
    double momentum = 0.9;
    int samples_per_epoch = 2048;
    double temperature = 1.0;
};

/// Differentiable batch loss: mean over records of
///   w_lang * (CE(meta) + CE(reason)) + (1 - m) * SmoothL1(waypoints).
/// The waypoint head is teacher-forced on the label meta-action.
struct SFTLossNodes {
    ad::Tape::NodeId total;
    ad::Tape::NodeId language;
    ad::Tape::NodeId action;
};
SFTLossNodes build_sft_loss(ad::Tape& tape, PolicyParams& params,
                            const std::vector<const TakeoverRecord*>& batch,
                            const SFTConfig& cfg = {});

/// Loss values only (no gradient), e.g. for held-out evaluation.
struct SFTLossValue {
    double total = 0.0;
    double language = 0.0;
    double action = 0.0;
};
SFTLossValue sft_loss(PolicyParams& params, const std::vector<const TakeoverRecord*>& batch,
                      const SFTConfig& cfg = {});

struct SFTEpochMetrics {
    int epoch = 0;
    double train_loss = 0.0;
    double language_loss = 0.0;
    double action_loss = 0.0;
    double lr = 0.0;
    double takeover_fraction = 0.0;  // realized family mix in consumed batches
    double heldout_loss = 0.0;
};

struct SFTResult {
    std::vector<SFTEpochMetrics> epochs;
    bool diverged = false;  // params roll back to the last finite step when set
};

/// SGD-with-momentum training loop over DAgger-mixed batches with a cosine
/// learning-rate schedule. `heldout` (may be empty) is evaluated once per
/// epoch; `metrics_path`, when set, receives one JSON line per epoch.
SFTResult train_sft(PolicyParams& params, const std::vector<TakeoverRecord>& records,
                    const std::vector<TakeoverRecord>& heldout, const SFTConfig& cfg, Rng& rng,
                    const std::optional<std::filesystem::path>& metrics_path = std::nullopt);

}  // namespace takevla
