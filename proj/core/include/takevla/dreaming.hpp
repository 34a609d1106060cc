#pragma once

#include <filesystem>
#include <optional>
#include <vector>

#include "takevla/datastore.hpp"
#include "takevla/policy.hpp"

namespace takevla {

struct DreamRollout {
    PolicySample sample;                  // attached by the caller
    std::vector<TrajectoryPoint> ego_traj;  // 10 states at 5 Hz
    std::vector<double> per_step_rewards;   // 10 entries, all <= 0
    std::optional<int> collided_at;
    double return_R = 0.0;  // sum of gamma^tau * r_tau
};

struct GRPOConfig {
    int group_size = 8;
    double kl_weight = 0.1;
    double gamma = 0.9;
    double temperature = 1.0;
    int epochs = 1;
    int batch_size = 32;
    double collision_penalty = 30.0;
    double std_floor = 1e-6;
    double lr = 1e-3;  // toy-net scale, single plain-SGD update per step
};

/// Replays `record`'s 2 s future at 5 Hz with the candidate action held fixed:
/// the PID tracks the action, the bicycle model integrates at 0.2 s, and
/// agents teleport along their recorded futures. Reward per step is the
/// negated distance to the expert reference minus the collision penalty; the
/// rollout terminates at the first collision. Deterministic.
DreamRollout pseudo_simulate(const TakeoverRecord& record, const DrivingAction& action,
                             const GRPOConfig& cfg = {});

/// Normalized group-relative advantages: (R_j - mean) / max(pop_std, floor);
/// all zero when the group is degenerate (std below the floor).
std::vector<double> group_advantages(const std::vector<double>& returns, double std_floor = 1e-6);

struct GroupSample {
    PolicySample sample;   // drawn from the old policy on this observation
    double advantage = 0.0;
    double logprob_old = 0.0;  // constant in the loss
};

/// Per-record GRPO objective on the tape:
///   -(1/G) sum_j A_j exp(lp_j - lp_old_j) + lambda * KL(pi || pi_ref),
/// with KL = categorical KL on both language heads plus the closed-form
/// Gaussian waypoint KL averaged over the group's meta-actions.
ad::Tape::NodeId build_grpo_loss(ad::Tape& tape, PolicyParams& params,
                                 const PolicyParams& params_ref, const ObservationFeatures& obs,
                                 const std::vector<GroupSample>& group, const GRPOConfig& cfg);

/// Loss value only (no gradient).
double grpo_loss(PolicyParams& params, const PolicyParams& params_ref,
                 const ObservationFeatures& obs, const std::vector<GroupSample>& group,
                 const GRPOConfig& cfg);

struct RFTStepMetrics {
    int step = 0;
    double mean_return = 0.0;
    double fraction_collided = 0.0;
    double mean_kl = 0.0;
    double degenerate_group_rate = 0.0;
    double loss = 0.0;
};

struct RFTResult {
    std::vector<RFTStepMetrics> steps;
    bool diverged = false;
};

/// GRPO training loop: per step, snapshot pi_old, draw G candidates per record
/// from it, score them in the pseudo-simulation, and take exactly one gradient
/// step on the batch-mean loss. `params_ref` stays frozen throughout.
RFTResult train_rft(PolicyParams& params, const PolicyParams& params_ref,
                    const std::vector<TakeoverRecord>& records, const GRPOConfig& cfg, Rng& rng,
                    const std::optional<std::filesystem::path>& metrics_path = std::nullopt);

}  // namespace takevla
