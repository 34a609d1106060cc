#pragma once

#include <array>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <vector>

#include "takevla/action.hpp"
#include "takevla/autograd.hpp"
#include "takevla/rng.hpp"
#include "takevla/scene.hpp"

namespace takevla {

struct FeaturizeError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

constexpr int kFeatureDim = 32;

enum class NavCommand : std::uint8_t {
    Straight = 0,
    ChangeLeft,
    ChangeRight,
    NearGoal,
};

/// Fixed-length observation vector for the policy network. Distances are
/// clipped to [0, 100] m; empty slots carry the 100 m gap sentinel.
struct ObservationFeatures {
    std::array<double, kFeatureDim> values{};
    NavCommand nav = NavCommand::Straight;
};

ObservationFeatures featurize(const Scene& scene);

struct PolicyConfig {
    int hidden = 64;
    int meta_embed_dim = 8;
    ActionSpec action_spec;
    double sigma_w = 0.3;  // [m] fixed waypoint sampling stddev

    int waypoint_dim() const { return 2 * (action_spec.n_path + action_spec.n_speed); }
};

/// Weights of the language-conditioned waypoint policy: a shared tanh trunk,
/// categorical meta/reason heads, and a waypoint head conditioned on the
/// meta-action via a learned embedding.
struct PolicyParams {
    PolicyConfig cfg;
    ad::Tensor w1, b1, w2, b2;            // trunk
    ad::Tensor w_meta, b_meta;            // meta-action head
    ad::Tensor w_reason, b_reason;        // reason head
    ad::Tensor meta_embedding;            // meta vocab x embed_dim
    ad::Tensor w_wp, b_wp;                // waypoint head on trunk (+) embedding

    std::vector<ad::Tensor*> tensors();
    std::vector<const ad::Tensor*> tensors() const;
    void zero_grad();
    bool all_finite() const;

    static PolicyParams init(const PolicyConfig& cfg, std::uint64_t seed);

    /// Versioned binary checkpoint; round-trips bit-exactly.
    void save(const std::filesystem::path& path) const;
    static PolicyParams load(const std::filesystem::path& path);
};

/// Forward-pass distribution handles: logits for the categorical heads plus
/// the trunk features needed to condition waypoint means on a meta-action.
struct PolicyForward {
    std::vector<double> trunk;         // hidden features
    std::vector<double> meta_logits;
    std::vector<double> reason_logits;
    double temperature = 1.0;

    std::vector<double> meta_probs() const;
    std::vector<double> reason_probs() const;
};

PolicyForward forward(const PolicyParams& params, const ObservationFeatures& obs,
                      double temperature = 1.0);

/// Waypoint means conditioned on `meta`, flattened [path xy..., speed xy...].
std::vector<double> waypoint_means(const PolicyParams& params, const PolicyForward& fwd,
                                   MetaAction meta);

DrivingAction unflatten_action(const std::vector<double>& coords, const ActionSpec& spec);
std::vector<double> flatten_action(const DrivingAction& action);

struct PolicySample {
    LanguageAction language;
    DrivingAction action;
    double logprob = 0.0;  // joint: meta + reason + waypoint Gaussian
};

/// Draws (language, waypoints) from the joint distribution at `temperature`.
/// greedy=true takes argmax language and mean waypoints (logprob still
/// evaluated under the stochastic model).
PolicySample sample(const PolicyParams& params, const ObservationFeatures& obs, double temperature,
                    Rng& rng, bool greedy = false);

/// Exact joint log-density of `s` under the current parameters.
double logprob(const PolicyParams& params, const ObservationFeatures& obs, const PolicySample& s,
               double temperature = 1.0);

/// Differentiable graph pieces used by the training losses.
struct PolicyGraph {
    ad::Tape::NodeId trunk;
    ad::Tape::NodeId meta_logits;
    ad::Tape::NodeId reason_logits;
};
PolicyGraph build_forward(ad::Tape& tape, PolicyParams& params, const ObservationFeatures& obs);
ad::Tape::NodeId build_waypoint_means(ad::Tape& tape, PolicyParams& params,
                                      const PolicyGraph& graph, MetaAction meta);
/// Scalar node for the joint log-density of `s` (differentiable w.r.t. params).
ad::Tape::NodeId build_logprob(ad::Tape& tape, PolicyParams& params, const PolicyGraph& graph,
                               const PolicySample& s, double temperature);

}  // namespace takevla
