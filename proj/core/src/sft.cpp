#include "takevla/sft.hpp"

#include <cmath>
#include <fstream>

#include "json.hpp"

namespace takevla {

namespace {

struct PerRecordNodes {
    std::vector<ad::Tape::NodeId> language;
    std::vector<ad::Tape::NodeId> action;
};

PerRecordNodes build_per_record(ad::Tape& tape, PolicyParams& params,
                                const std::vector<const TakeoverRecord*>& batch,
                                const SFTConfig& cfg) {
    if (batch.empty()) throw std::invalid_argument("sft_loss: empty batch");
    PerRecordNodes nodes;
    for (const auto* rec : batch) {
        if (rec->mask_m == 0 && !rec->expert_action) {
            throw std::invalid_argument("sft_loss: non-masked record without expert action");
        }
        const auto graph = build_forward(tape, params, rec->obs);
        const auto ce_meta = tape.cross_entropy(
            graph.meta_logits, static_cast<int>(rec->language_label.meta), cfg.temperature);
        const auto ce_reason = tape.cross_entropy(
            graph.reason_logits, static_cast<int>(rec->language_label.reason), cfg.temperature);
        nodes.language.push_back(tape.add(ce_meta, ce_reason));
        if (rec->mask_m == 0) {
            // teacher forcing: condition the waypoint head on the label meta
            const auto wp = build_waypoint_means(tape, params, graph, rec->language_label.meta);
            nodes.action.push_back(
                tape.smooth_l1(wp, flatten_action(*rec->expert_action), cfg.smooth_l1_beta));
        } else {
            nodes.action.push_back(tape.constant_scalar(0.0));
        }
    }
    return nodes;
}

}  // namespace

SFTLossNodes build_sft_loss(ad::Tape& tape, PolicyParams& params,
                            const std::vector<const TakeoverRecord*>& batch,
                            const SFTConfig& cfg) {
    const auto nodes = build_per_record(tape, params, batch, cfg);
    SFTLossNodes out;
    out.language = tape.mean(nodes.language);
    out.action = tape.mean(nodes.action);
    out.total = tape.add(tape.scale(out.language, cfg.language_weight), out.action);
    return out;
}

SFTLossValue sft_loss(PolicyParams& params, const std::vector<const TakeoverRecord*>& batch,
                      const SFTConfig& cfg) {
    ad::Tape tape;
    const auto nodes = build_sft_loss(tape, params, batch, cfg);
    return {tape.scalar(nodes.total), tape.scalar(nodes.language), tape.scalar(nodes.action)};
}

namespace {

std::vector<std::vector<double>> snapshot_values(const PolicyParams& params) {
    std::vector<std::vector<double>> out;
    for (const auto* t : params.tensors()) out.push_back(t->value);
    return out;
}

void restore_values(PolicyParams& params, const std::vector<std::vector<double>>& snap) {
    const auto ts = params.tensors();
    for (std::size_t i = 0; i < ts.size(); ++i) ts[i]->value = snap[i];
}

}  // namespace

SFTResult train_sft(PolicyParams& params, const std::vector<TakeoverRecord>& records,
                    const std::vector<TakeoverRecord>& heldout, const SFTConfig& cfg, Rng& rng,
                    const std::optional<std::filesystem::path>& metrics_path) {
    SFTResult result;
    if (cfg.epochs <= 0) return result;
    if (records.empty()) throw std::invalid_argument("train_sft: no training records");

    const auto buckets = build_buckets(records);
    const int batches_per_epoch = std::max(1, cfg.samples_per_epoch / cfg.batch_size);
    const int total_steps = cfg.epochs * batches_per_epoch;

    std::vector<std::vector<double>> velocity;
    for (const auto* t : params.tensors()) velocity.emplace_back(t->size(), 0.0);
    auto last_finite = snapshot_values(params);

    std::ofstream metrics;
    if (metrics_path) metrics.open(*metrics_path, std::ios::app);

    int step = 0;
    for (int epoch = 0; epoch < cfg.epochs && !result.diverged; ++epoch) {
        double loss_sum = 0.0, lang_sum = 0.0, act_sum = 0.0, lr_last = 0.0;
        std::size_t takeover_draws = 0, draws = 0;
        for (int b = 0; b < batches_per_epoch; ++b, ++step) {
            const auto idx = sample_batch(buckets, cfg.p, cfg.batch_size, rng);
            std::vector<const TakeoverRecord*> batch;
            batch.reserve(idx.size());
            for (auto i : idx) {
                batch.push_back(&records[i]);
                if (records[i].source != RecordSource::Pretrain) ++takeover_draws;
            }
            draws += idx.size();

            params.zero_grad();
            ad::Tape tape;
            const auto loss = build_sft_loss(tape, params, batch, cfg);
            const double total = tape.scalar(loss.total);
            if (!std::isfinite(total)) {
                restore_values(params, last_finite);
                result.diverged = true;
                break;
            }
            tape.backward(loss.total);

            const double lr =
                cfg.lr * 0.5 * (1.0 + std::cos(kPi * static_cast<double>(step) / total_steps));
            lr_last = lr;
            const auto ts = params.tensors();
            for (std::size_t t = 0; t < ts.size(); ++t) {
                for (std::size_t i = 0; i < ts[t]->size(); ++i) {
                    velocity[t][i] = cfg.momentum * velocity[t][i] + ts[t]->grad[i];
                    ts[t]->value[i] -= lr * velocity[t][i];
                }
            }
            if (!params.all_finite()) {
                restore_values(params, last_finite);
                result.diverged = true;
                break;
            }
            last_finite = snapshot_values(params);
            loss_sum += total;
            lang_sum += tape.scalar(loss.language);
            act_sum += tape.scalar(loss.action);
        }

        SFTEpochMetrics m;
        m.epoch = epoch;
        const int done = result.diverged ? std::max(1, step % batches_per_epoch) : batches_per_epoch;
        m.train_loss = loss_sum / done;
        m.language_loss = lang_sum / done;
        m.action_loss = act_sum / done;
        m.lr = lr_last;
        m.takeover_fraction = draws ? static_cast<double>(takeover_draws) / draws : 0.0;
        if (!heldout.empty()) {
            std::vector<const TakeoverRecord*> ho;
            ho.reserve(heldout.size());
            for (const auto& r : heldout) ho.push_back(&r);
            m.heldout_loss = sft_loss(params, ho, cfg).total;
        }
        result.epochs.push_back(m);

        if (metrics.is_open()) {
            nlohmann::json j{{"phase", "sft"},
                             {"epoch", m.epoch},
                             {"train_loss", m.train_loss},
                             {"language_loss", m.language_loss},
                             {"action_loss", m.action_loss},
                             {"lr", m.lr},
                             {"takeover_fraction", m.takeover_fraction},
                             {"heldout_loss", m.heldout_loss}};
            metrics << j.dump() << "\n";
        }
    }
    return result;
}

}  // namespace takevla
