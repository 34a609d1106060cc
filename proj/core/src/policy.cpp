#include "takevla/policy.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>

namespace takevla {

namespace {

double clip(double v, double lo, double hi) { return std::clamp(v, lo, hi); }

std::vector<double> softmax_from_logits(const std::vector<double>& logits, double temperature) {
    std::vector<double> p(logits.size());
    double zmax = -std::numeric_limits<double>::infinity();
    for (double v : logits) zmax = std::max(zmax, v / temperature);
    double total = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        p[i] = std::exp(logits[i] / temperature - zmax);
        total += p[i];
    }
    for (auto& v : p) v /= total;
    return p;
}

double log_softmax_at(const std::vector<double>& logits, int index, double temperature) {
    double zmax = -std::numeric_limits<double>::infinity();
    for (double v : logits) zmax = std::max(zmax, v / temperature);
    double lse = 0.0;
    for (double v : logits) lse += std::exp(v / temperature - zmax);
    lse = zmax + std::log(lse);
    return logits[index] / temperature - lse;
}

constexpr double kSentinelGap = 100.0;

}  // namespace

ObservationFeatures featurize(const Scene& scene) {
    const Lane* current = scene.lane_containing(scene.ego.pose.position());
    if (!current) throw FeaturizeError("featurize: ego off all lanes");

    ObservationFeatures obs;
    auto& f = obs.values;
    const auto proj = current->project(scene.ego.pose.position());

    f[0] = scene.ego.speed / 10.0;
    f[1] = clip(proj.lateral, -5.0, 5.0) / 2.0;
    f[2] = normalize_angle(scene.ego.pose.yaw - current->heading_at(proj.s));
    f[3] = current->speed_limit / 10.0;

    // Lead slots for [left, current, right] lanes: (gap, relative speed).
    const std::array<const Lane*, 3> slots = {scene.lane_by_id(current->left_id), current,
                                              scene.lane_by_id(current->right_id)};
    for (int k = 0; k < 3; ++k) {
        double gap = kSentinelGap, rel = 0.0;
        if (slots[k]) {
            const double ego_s = slots[k]->project(scene.ego.pose.position()).s;
            double best = std::numeric_limits<double>::infinity();
            for (const auto& agent : scene.agents) {
                const auto ap = slots[k]->project(agent.state.pose.position());
                if (std::fabs(ap.lateral) > slots[k]->width * 0.5) continue;
                const double ds = ap.s - ego_s;
                if (ds <= 0.0 || ds >= best) continue;
                best = ds;
                gap = clip(ds - 0.5 * (agent.state.length + scene.ego.length), 0.0, kSentinelGap);
                rel = agent.state.speed - scene.ego.speed;
            }
        }
        f[4 + 2 * k] = gap / kSentinelGap;
        f[5 + 2 * k] = rel / 10.0;
    }

    // Nearest-agent slots, sorted by range then id for a canonical ordering.
    struct Slot {
        double range;
        int id;
        double dx, dy, rel, dyaw;
    };
    std::vector<Slot> near;
    for (const auto& agent : scene.agents) {
        const Vec2 local = scene.ego.pose.world_to_local(agent.state.pose.position());
        Slot s;
        s.range = local.norm();
        s.id = agent.id;
        s.dx = clip(local.x, -kSentinelGap, kSentinelGap);
        s.dy = clip(local.y, -kSentinelGap, kSentinelGap);
        s.rel = agent.state.speed - scene.ego.speed;
        s.dyaw = normalize_angle(agent.state.pose.yaw - scene.ego.pose.yaw);
        near.push_back(s);
    }
    std::sort(near.begin(), near.end(), [](const Slot& a, const Slot& b) {
        return a.range != b.range ? a.range < b.range : a.id < b.id;
    });
    for (int k = 0; k < 4; ++k) {
        const int base = 10 + 4 * k;
        if (k < static_cast<int>(near.size())) {
            f[base + 0] = near[k].dx / 50.0;
            f[base + 1] = near[k].dy / 10.0;
            f[base + 2] = near[k].rel / 10.0;
            f[base + 3] = near[k].dyaw / kPi;
        } else {
            f[base + 0] = kSentinelGap / 50.0;
            f[base + 1] = 0.0;
            f[base + 2] = 0.0;
            f[base + 3] = 0.0;
        }
    }

    // Navigation command from the route.
    const double goal_dist = clip((scene.route.goal - scene.ego.pose.position()).norm(), 0.0, 100.0);
    NavCommand nav = NavCommand::Straight;
    const bool on_route = std::find(scene.route.lane_ids.begin(), scene.route.lane_ids.end(),
                                    current->id) != scene.route.lane_ids.end();
    if (goal_dist < 20.0) {
        nav = NavCommand::NearGoal;
    } else if (!on_route) {
        bool left_on_route = false;
        for (int id : scene.route.lane_ids) {
            if (id == current->left_id) left_on_route = true;
        }
        nav = left_on_route ? NavCommand::ChangeLeft : NavCommand::ChangeRight;
    }
    obs.nav = nav;
    f[26 + static_cast<int>(nav)] = 1.0;
    f[30] = goal_dist / 100.0;
    f[31] = 1.0;

    for (double v : f) {
        if (!std::isfinite(v)) throw FeaturizeError("featurize: non-finite feature");
    }
    return obs;
}

std::vector<ad::Tensor*> PolicyParams::tensors() {
    return {&w1, &b1, &w2, &b2, &w_meta, &b_meta, &w_reason, &b_reason, &meta_embedding, &w_wp, &b_wp};
}

std::vector<const ad::Tensor*> PolicyParams::tensors() const {
    return {&w1, &b1, &w2, &b2, &w_meta, &b_meta, &w_reason, &b_reason, &meta_embedding, &w_wp, &b_wp};
}

void PolicyParams::zero_grad() {
    for (auto* t : tensors()) t->zero_grad();
}

bool PolicyParams::all_finite() const {
    for (const auto* t : tensors()) {
        if (!t->all_finite()) return false;
    }
    return true;
}

PolicyParams PolicyParams::init(const PolicyConfig& cfg, std::uint64_t seed) {
    PolicyParams p;
    p.cfg = cfg;
    const int h = cfg.hidden;
    const int e = cfg.meta_embed_dim;
    const int wp = cfg.waypoint_dim();
    p.w1 = ad::Tensor::make("w1", {h, kFeatureDim});
    p.b1 = ad::Tensor::make("b1", {h});
    p.w2 = ad::Tensor::make("w2", {h, h});
    p.b2 = ad::Tensor::make("b2", {h});
    p.w_meta = ad::Tensor::make("w_meta", {kMetaVocabSize, h});
    p.b_meta = ad::Tensor::make("b_meta", {kMetaVocabSize});
    p.w_reason = ad::Tensor::make("w_reason", {kReasonVocabSize, h});
    p.b_reason = ad::Tensor::make("b_reason", {kReasonVocabSize});
    p.meta_embedding = ad::Tensor::make("meta_embedding", {kMetaVocabSize, e});
    p.w_wp = ad::Tensor::make("w_wp", {wp, h + e});
    p.b_wp = ad::Tensor::make("b_wp", {wp});

    Rng rng(seed);
    auto xavier = [&rng](ad::Tensor& t, int fan_in, int fan_out) {
        const double a = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
        for (auto& v : t.value) v = (2.0 * rng.uniform() - 1.0) * a;
    };
    xavier(p.w1, kFeatureDim, h);
    xavier(p.w2, h, h);
    xavier(p.w_meta, h, kMetaVocabSize);
    xavier(p.w_reason, h, kReasonVocabSize);
    xavier(p.meta_embedding, kMetaVocabSize, e);
    xavier(p.w_wp, h + e, wp);
    return p;
}

namespace {

constexpr char kCheckpointMagic[4] = {'T', 'V', 'C', 'K'};
constexpr std::uint32_t kCheckpointVersion = 1;

template <typename T>
void write_pod(std::ostream& out, const T& v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
void read_pod(std::istream& in, T& v) {
    in.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!in) throw std::runtime_error("checkpoint: truncated file");
}

}  // namespace

void PolicyParams::save(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("checkpoint: cannot open " + path.string());
    out.write(kCheckpointMagic, 4);
    write_pod(out, kCheckpointVersion);
    write_pod(out, static_cast<std::int32_t>(cfg.hidden));
    write_pod(out, static_cast<std::int32_t>(cfg.meta_embed_dim));
    write_pod(out, static_cast<std::int32_t>(cfg.action_spec.n_path));
    write_pod(out, cfg.action_spec.s_path);
    write_pod(out, static_cast<std::int32_t>(cfg.action_spec.n_speed));
    write_pod(out, cfg.action_spec.dt_speed);
    write_pod(out, cfg.sigma_w);
    const auto ts = tensors();
    write_pod(out, static_cast<std::uint32_t>(ts.size()));
    for (const auto* t : ts) {
        write_pod(out, static_cast<std::uint32_t>(t->name.size()));
        out.write(t->name.data(), static_cast<std::streamsize>(t->name.size()));
        write_pod(out, static_cast<std::uint32_t>(t->shape.size()));
        for (int d : t->shape) write_pod(out, static_cast<std::int32_t>(d));
        out.write(reinterpret_cast<const char*>(t->value.data()),
                  static_cast<std::streamsize>(t->value.size() * sizeof(double)));
    }
    if (!out) throw std::runtime_error("checkpoint: write failed " + path.string());
}

PolicyParams PolicyParams::load(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("checkpoint: cannot open " + path.string());
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, kCheckpointMagic, 4) != 0) {
        throw std::runtime_error("checkpoint: bad magic in " + path.string());
    }
    std::uint32_t version;
    read_pod(in, version);
    if (version != kCheckpointVersion) throw std::runtime_error("checkpoint: unsupported version");
    PolicyConfig cfg;
    std::int32_t hidden, embed, n_path, n_speed;
    read_pod(in, hidden);
    read_pod(in, embed);
    read_pod(in, n_path);
    read_pod(in, cfg.action_spec.s_path);
    read_pod(in, n_speed);
    read_pod(in, cfg.action_spec.dt_speed);
    read_pod(in, cfg.sigma_w);
    cfg.hidden = hidden;
    cfg.meta_embed_dim = embed;
    cfg.action_spec.n_path = n_path;
    cfg.action_spec.n_speed = n_speed;

    PolicyParams p = PolicyParams::init(cfg, 0);
    std::uint32_t count;
    read_pod(in, count);
    auto ts = p.tensors();
    if (count != ts.size()) throw std::runtime_error("checkpoint: tensor count mismatch");
    for (auto* t : ts) {
        std::uint32_t name_len;
        read_pod(in, name_len);
        std::string name(name_len, '\0');
        in.read(name.data(), name_len);
        if (name != t->name) throw std::runtime_error("checkpoint: tensor order mismatch: " + name);
        std::uint32_t ndims;
        read_pod(in, ndims);
        std::vector<int> shape(ndims);
        for (auto& d : shape) {
            std::int32_t v;
            read_pod(in, v);
            d = v;
        }
        if (shape != t->shape) throw std::runtime_error("checkpoint: shape mismatch: " + name);
        in.read(reinterpret_cast<char*>(t->value.data()),
                static_cast<std::streamsize>(t->value.size() * sizeof(double)));
        if (!in) throw std::runtime_error("checkpoint: truncated tensor data");
    }
    return p;
}

namespace {

std::vector<double> affine_eval(const ad::Tensor& w, const ad::Tensor& b,
                                const std::vector<double>& x) {
    const int rows = w.shape[0], cols = w.shape[1];
    std::vector<double> out(rows);
    for (int i = 0; i < rows; ++i) {
        double acc = b.value[i];
        const double* wr = w.value.data() + static_cast<std::size_t>(i) * cols;
        for (int j = 0; j < cols; ++j) acc += wr[j] * x[j];
        out[i] = acc;
    }
    return out;
}

}  // namespace

PolicyForward forward(const PolicyParams& params, const ObservationFeatures& obs,
                      double temperature) {
    if (temperature <= 0.0) throw std::invalid_argument("forward: temperature must be > 0");
    if (!const_cast<PolicyParams&>(params).all_finite()) {
        throw std::invalid_argument("forward: non-finite parameters");
    }
    PolicyForward out;
    out.temperature = temperature;
    std::vector<double> x(obs.values.begin(), obs.values.end());
    auto h1 = affine_eval(params.w1, params.b1, x);
    for (auto& v : h1) v = std::tanh(v);
    auto h2 = affine_eval(params.w2, params.b2, h1);
    for (auto& v : h2) v = std::tanh(v);
    out.meta_logits = affine_eval(params.w_meta, params.b_meta, h2);
    out.reason_logits = affine_eval(params.w_reason, params.b_reason, h2);
    out.trunk = std::move(h2);
    return out;
}

std::vector<double> PolicyForward::meta_probs() const {
    return softmax_from_logits(meta_logits, temperature);
}

std::vector<double> PolicyForward::reason_probs() const {
    return softmax_from_logits(reason_logits, temperature);
}

std::vector<double> waypoint_means(const PolicyParams& params, const PolicyForward& fwd,
                                   MetaAction meta) {
    const int e = params.cfg.meta_embed_dim;
    std::vector<double> in = fwd.trunk;
    const auto* row =
        params.meta_embedding.value.data() + static_cast<std::size_t>(meta) * e;
    in.insert(in.end(), row, row + e);
    return affine_eval(params.w_wp, params.b_wp, in);
}

DrivingAction unflatten_action(const std::vector<double>& coords, const ActionSpec& spec) {
    DrivingAction a;
    a.path_waypoints.reserve(spec.n_path);
    a.speed_waypoints.reserve(spec.n_speed);
    int k = 0;
    for (int i = 0; i < spec.n_path; ++i, k += 2) a.path_waypoints.push_back({coords[k], coords[k + 1]});
    for (int i = 0; i < spec.n_speed; ++i, k += 2) a.speed_waypoints.push_back({coords[k], coords[k + 1]});
    return a;
}

std::vector<double> flatten_action(const DrivingAction& action) {
    std::vector<double> out;
    out.reserve(2 * (action.path_waypoints.size() + action.speed_waypoints.size()));
    for (const auto& p : action.path_waypoints) {
        out.push_back(p.x);
        out.push_back(p.y);
    }
    for (const auto& p : action.speed_waypoints) {
        out.push_back(p.x);
        out.push_back(p.y);
    }
    return out;
}

namespace {

double gaussian_logprob_eval(const std::vector<double>& sample, const std::vector<double>& mean,
                             double sigma) {
    if (sigma <= 0.0) return 0.0;  // deterministic waypoints
    const double log_norm = std::log(sigma * std::sqrt(2.0 * kPi));
    double lp = 0.0;
    for (std::size_t i = 0; i < mean.size(); ++i) {
        const double d = sample[i] - mean[i];
        lp += -d * d / (2.0 * sigma * sigma) - log_norm;
    }
    return lp;
}

}  // namespace

PolicySample sample(const PolicyParams& params, const ObservationFeatures& obs, double temperature,
                    Rng& rng, bool greedy) {
    const auto fwd = forward(params, obs, temperature);
    const auto meta_p = fwd.meta_probs();
    const auto reason_p = fwd.reason_probs();

    int meta, reason;
    if (greedy) {
        meta = static_cast<int>(std::max_element(meta_p.begin(), meta_p.end()) - meta_p.begin());
        reason =
            static_cast<int>(std::max_element(reason_p.begin(), reason_p.end()) - reason_p.begin());
    } else {
        meta = rng.categorical(meta_p);
        reason = rng.categorical(reason_p);
    }

    PolicySample out;
    out.language.meta = static_cast<MetaAction>(meta);
    out.language.reason = static_cast<Reason>(reason);

    auto means = waypoint_means(params, fwd, out.language.meta);
    std::vector<double> coords = means;
    if (!greedy && params.cfg.sigma_w > 0.0) {
        for (auto& c : coords) c += params.cfg.sigma_w * rng.normal();
    }
    out.action = unflatten_action(coords, params.cfg.action_spec);
    out.logprob = log_softmax_at(fwd.meta_logits, meta, temperature) +
                  log_softmax_at(fwd.reason_logits, reason, temperature) +
                  gaussian_logprob_eval(coords, means, params.cfg.sigma_w);
    return out;
}

double logprob(const PolicyParams& params, const ObservationFeatures& obs, const PolicySample& s,
               double temperature) {
    const auto fwd = forward(params, obs, temperature);
    const auto means = waypoint_means(params, fwd, s.language.meta);
    return log_softmax_at(fwd.meta_logits, static_cast<int>(s.language.meta), temperature) +
           log_softmax_at(fwd.reason_logits, static_cast<int>(s.language.reason), temperature) +
           gaussian_logprob_eval(flatten_action(s.action), means, params.cfg.sigma_w);
}

PolicyGraph build_forward(ad::Tape& tape, PolicyParams& params, const ObservationFeatures& obs) {
    const int h = params.cfg.hidden;
    const auto x = tape.constant({obs.values.begin(), obs.values.end()});
    const auto h1 = tape.tanh(tape.affine(tape.param(params.w1), tape.param(params.b1), x, h,
                                          kFeatureDim));
    const auto h2 =
        tape.tanh(tape.affine(tape.param(params.w2), tape.param(params.b2), h1, h, h));
    PolicyGraph g;
    g.trunk = h2;
    g.meta_logits = tape.affine(tape.param(params.w_meta), tape.param(params.b_meta), h2,
                                kMetaVocabSize, h);
    g.reason_logits = tape.affine(tape.param(params.w_reason), tape.param(params.b_reason), h2,
                                  kReasonVocabSize, h);
    return g;
}

ad::Tape::NodeId build_waypoint_means(ad::Tape& tape, PolicyParams& params,
                                      const PolicyGraph& graph, MetaAction meta) {
    const int h = params.cfg.hidden;
    const int e = params.cfg.meta_embed_dim;
    const auto embed = tape.embed_row(tape.param(params.meta_embedding), static_cast<int>(meta),
                                      kMetaVocabSize, e);
    const auto in = tape.concat(graph.trunk, embed);
    return tape.affine(tape.param(params.w_wp), tape.param(params.b_wp), in,
                       params.cfg.waypoint_dim(), h + e);
}

ad::Tape::NodeId build_logprob(ad::Tape& tape, PolicyParams& params, const PolicyGraph& graph,
                               const PolicySample& s, double temperature) {
    const auto lp_meta =
        tape.pick(tape.log_softmax(graph.meta_logits, temperature), static_cast<int>(s.language.meta));
    const auto lp_reason = tape.pick(tape.log_softmax(graph.reason_logits, temperature),
                                     static_cast<int>(s.language.reason));
    auto lp = tape.add(lp_meta, lp_reason);
    if (params.cfg.sigma_w > 0.0) {
        const auto means = build_waypoint_means(tape, params, graph, s.language.meta);
        lp = tape.add(lp, tape.gaussian_logprob(means, flatten_action(s.action), params.cfg.sigma_w));
    }
    return lp;
}

}  // namespace takevla
