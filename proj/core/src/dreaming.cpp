#include "takevla/dreaming.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "json.hpp"

namespace takevla {

DreamRollout pseudo_simulate(const TakeoverRecord& record, const DrivingAction& action,
                             const GRPOConfig& cfg) {
    constexpr int kHorizon = 10;
    constexpr double kDreamDt = 0.2;  // 5 Hz
    if (record.reference_trajectory.size() != kHorizon) {
        throw std::invalid_argument("pseudo_simulate: record lacks a reference trajectory");
    }
    for (const auto& af : record.agent_futures) {
        if (af.poses.size() != kHorizon) {
            throw std::invalid_argument("pseudo_simulate: record lacks complete agent futures");
        }
    }

    const Scene& snap = record.scene_snapshot;
    VehicleState ego = snap.ego;
    const DrivingAction world_action = action_to_world(action, ego.pose);
    PidConfig pid_cfg;
    pid_cfg.dt = kDreamDt;
    PidState pid_state;

    DreamRollout out;
    out.ego_traj.reserve(kHorizon);
    out.per_step_rewards.assign(kHorizon, 0.0);

    double discount = 1.0;
    for (int tau = 0; tau < kHorizon; ++tau, discount *= cfg.gamma) {
        const auto [control, next_pid] =
            pid_actuate(world_action, ego, pid_state, pid_cfg, snap.vehicle_params);
        pid_state = next_pid;
        ego = bicycle_step(ego, control, kDreamDt, snap.vehicle_params);
        out.ego_traj.push_back({ego.pose.x, ego.pose.y, ego.pose.yaw, ego.speed});

        const Vec2 ref = record.reference_trajectory[static_cast<std::size_t>(tau)];
        double reward = -(ego.pose.position() - ref).norm();

        bool collided = false;
        const Obb ego_box = ego.footprint();
        for (const auto& af : record.agent_futures) {
            const auto& p = af.poses[static_cast<std::size_t>(tau)];
            VehicleState other;
            // replayed agents keep the recorded footprint dimensions
            for (const auto& agent : snap.agents) {
                if (agent.id == af.agent_id) {
                    other = agent.state;
                    break;
                }
            }
            other.pose = {p.x, p.y, p.yaw};
            if (obb_intersect(ego_box, other.footprint())) {
                collided = true;
                break;
            }
        }
        if (collided) {
            reward -= cfg.collision_penalty;
            out.collided_at = tau;
        }
        out.per_step_rewards[static_cast<std::size_t>(tau)] = reward;
        out.return_R += discount * reward;
        if (collided) break;  // later rewards stay 0
    }
    return out;
}

std::vector<double> group_advantages(const std::vector<double>& returns, double std_floor) {
    const auto n = returns.size();
    if (n < 2) throw std::invalid_argument("group_advantages: need at least 2 returns");
    double mean = 0.0;
    for (double r : returns) mean += r;
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (double r : returns) var += (r - mean) * (r - mean);
    const double std = std::sqrt(var / static_cast<double>(n));

    std::vector<double> adv(n, 0.0);
    if (std < std_floor) return adv;  // degenerate group carries no signal
    for (std::size_t i = 0; i < n; ++i) adv[i] = (returns[i] - mean) / std;
    return adv;
}

ad::Tape::NodeId build_grpo_loss(ad::Tape& tape, PolicyParams& params,
                                 const PolicyParams& params_ref, const ObservationFeatures& obs,
                                 const std::vector<GroupSample>& group, const GRPOConfig& cfg) {
    if (group.empty()) throw std::invalid_argument("grpo_loss: empty group");
    const auto graph = build_forward(tape, params, obs);
    const auto ref_fwd = forward(params_ref, obs, cfg.temperature);

    std::vector<ad::Tape::NodeId> ratio_terms;
    std::vector<ad::Tape::NodeId> gaussian_kls;
    ratio_terms.reserve(group.size());
    for (const auto& g : group) {
        const auto lp = build_logprob(tape, params, graph, g.sample, cfg.temperature);
        if (!std::isfinite(g.logprob_old) || !std::isfinite(tape.scalar(lp))) {
            std::ostringstream msg;
            msg << "grpo_loss: non-finite logprob (current=" << tape.scalar(lp)
                << ", old=" << g.logprob_old << ", meta=" << to_string(g.sample.language.meta)
                << ")";
            throw std::runtime_error(msg.str());
        }
        const auto ratio = tape.exp(tape.add_const(lp, -g.logprob_old));
        if (!std::isfinite(tape.scalar(ratio))) {
            throw std::runtime_error("grpo_loss: non-finite importance ratio");
        }
        ratio_terms.push_back(tape.scale(ratio, g.advantage));

        const auto mu = build_waypoint_means(tape, params, graph, g.sample.language.meta);
        const auto mu_ref = waypoint_means(params_ref, ref_fwd, g.sample.language.meta);
        gaussian_kls.push_back(tape.gaussian_kl(mu, mu_ref, params.cfg.sigma_w));
    }

    const auto l_grpo = tape.scale(tape.mean(ratio_terms), -1.0);
    const auto kl = tape.sum({tape.kl_categorical(graph.meta_logits, ref_fwd.meta_logits,
                                                  cfg.temperature),
                              tape.kl_categorical(graph.reason_logits, ref_fwd.reason_logits,
                                                  cfg.temperature),
                              tape.mean(gaussian_kls)});
    return tape.add(l_grpo, tape.scale(kl, cfg.kl_weight));
}

double grpo_loss(PolicyParams& params, const PolicyParams& params_ref,
                 const ObservationFeatures& obs, const std::vector<GroupSample>& group,
                 const GRPOConfig& cfg) {
    ad::Tape tape;
    return tape.scalar(build_grpo_loss(tape, params, params_ref, obs, group, cfg));
}

namespace {

PolicyParams clone_params(const PolicyParams& p) {
    PolicyParams out = PolicyParams::init(p.cfg, 0);
    const auto src = p.tensors();
    const auto dst = out.tensors();
    for (std::size_t i = 0; i < src.size(); ++i) dst[i]->value = src[i]->value;
    return out;
}

double closed_form_kl(PolicyParams& params, const PolicyParams& params_ref,
                      const ObservationFeatures& obs, const std::vector<GroupSample>& group,
                      const GRPOConfig& cfg) {
    GRPOConfig kl_only = cfg;
    kl_only.kl_weight = 1.0;
    std::vector<GroupSample> zeroed = group;
    for (auto& g : zeroed) g.advantage = 0.0;
    return grpo_loss(params, params_ref, obs, zeroed, kl_only);
}

}  // namespace

RFTResult train_rft(PolicyParams& params, const PolicyParams& params_ref,
                    const std::vector<TakeoverRecord>& records, const GRPOConfig& cfg, Rng& rng,
                    const std::optional<std::filesystem::path>& metrics_path) {
    RFTResult result;
    if (cfg.epochs <= 0) return result;
    if (records.empty()) throw std::invalid_argument("train_rft: no records");
    if (cfg.group_size < 2) throw std::invalid_argument("train_rft: group_size < 2");

    std::ofstream metrics;
    if (metrics_path) metrics.open(*metrics_path, std::ios::app);

    const int steps_per_epoch =
        std::max<int>(1, static_cast<int>(records.size()) / cfg.batch_size);
    auto last_finite = [&] {
        std::vector<std::vector<double>> snap;
        for (const auto* t : params.tensors()) snap.push_back(t->value);
        return snap;
    }();

    int step = 0;
    for (int epoch = 0; epoch < cfg.epochs && !result.diverged; ++epoch) {
        for (int b = 0; b < steps_per_epoch && !result.diverged; ++b, ++step) {
            const PolicyParams params_old = clone_params(params);

            params.zero_grad();
            ad::Tape tape;
            std::vector<ad::Tape::NodeId> record_losses;
            RFTStepMetrics m;
            m.step = step;
            int rollouts = 0, collided = 0, degenerate = 0;

            for (int r = 0; r < cfg.batch_size; ++r) {
                const auto& rec = records[rng.below(records.size())];
                std::vector<GroupSample> group(static_cast<std::size_t>(cfg.group_size));
                std::vector<double> returns(group.size());
                for (std::size_t j = 0; j < group.size(); ++j) {
                    group[j].sample = sample(params_old, rec.obs, cfg.temperature, rng);
                    group[j].logprob_old = group[j].sample.logprob;
                    const auto roll = pseudo_simulate(rec, group[j].sample.action, cfg);
                    returns[j] = roll.return_R;
                    m.mean_return += roll.return_R;
                    ++rollouts;
                    if (roll.collided_at) ++collided;
                }
                const auto adv = group_advantages(returns, cfg.std_floor);
                bool all_zero = true;
                for (std::size_t j = 0; j < group.size(); ++j) {
                    group[j].advantage = adv[j];
                    if (adv[j] != 0.0) all_zero = false;
                }
                if (all_zero) ++degenerate;
                record_losses.push_back(build_grpo_loss(tape, params, params_ref, rec.obs, group, cfg));
                m.mean_kl += closed_form_kl(params, params_ref, rec.obs, group, cfg);
            }

            const auto loss = tape.mean(record_losses);
            m.loss = tape.scalar(loss);
            m.mean_return /= std::max(1, rollouts);
            m.fraction_collided = static_cast<double>(collided) / std::max(1, rollouts);
            m.mean_kl /= cfg.batch_size;
            m.degenerate_group_rate = static_cast<double>(degenerate) / cfg.batch_size;

            if (!std::isfinite(m.loss)) {
                result.diverged = true;
                break;
            }
            tape.backward(loss);
            const auto ts = params.tensors();
            for (auto* t : ts) {
                for (std::size_t i = 0; i < t->size(); ++i) t->value[i] -= cfg.lr * t->grad[i];
            }
            if (!params.all_finite()) {
                const auto dst = params.tensors();
                for (std::size_t i = 0; i < dst.size(); ++i) dst[i]->value = last_finite[i];
                result.diverged = true;
                break;
            }
            for (std::size_t i = 0; i < ts.size(); ++i) last_finite[i] = ts[i]->value;
            result.steps.push_back(m);

            if (metrics.is_open()) {
                nlohmann::json j{{"phase", "rft"},
                                 {"step", m.step},
                                 {"loss", m.loss},
                                 {"mean_return", m.mean_return},
                                 {"fraction_collided", m.fraction_collided},
                                 {"mean_kl", m.mean_kl},
                                 {"degenerate_group_rate", m.degenerate_group_rate}};
                metrics << j.dump() << "\n";
            }
        }
    }
    return result;
}

}  // namespace takevla
