#include <cmath>
#include <cstdio>
#include <filesystem>

#include "doctest.h"
#include "takevla/policy.hpp"

using namespace takevla;

namespace {

Scene base_scene() {
    Scene s;
    Lane l;
    l.id = 0;
    l.centerline = {{0.0, 0.0}, {600.0, 0.0}};
    s.lanes.push_back(l);
    s.route.lane_ids = {0};
    s.route.goal = {550.0, 0.0};
    s.ego.pose = {20.0, 0.3, 0.05};
    s.ego.speed = 6.0;
    return s;
}

Scene busy_scene() {
    Scene s = base_scene();
    Agent a;
    a.id = 1;
    a.state.pose = {45.0, 0.2, 0.0};
    a.state.speed = 4.0;
    a.behavior = {BehaviorKind::Idm, 0, 45.0, 4.0, 0.0, 6.0};
    s.agents.push_back(a);
    Agent b = a;
    b.id = 2;
    b.state.pose = {80.0, -0.1, 0.1};
    b.state.speed = 7.0;
    s.agents.push_back(b);
    return s;
}

}  // namespace

TEST_CASE("featurize: empty road uses sentinels and unit bias") {
    const auto obs = featurize(base_scene());
    CHECK(obs.values[0] == doctest::Approx(0.6));
    CHECK(obs.values[3] == doctest::Approx(0.8));
    // no left/right lanes and no lead: full sentinel gap, zero rel speed
    for (int k = 0; k < 3; ++k) {
        CHECK(obs.values[4 + 2 * k] == doctest::Approx(1.0));
        CHECK(obs.values[5 + 2 * k] == doctest::Approx(0.0));
    }
    // all four agent slots padded
    for (int k = 0; k < 4; ++k) CHECK(obs.values[10 + 4 * k] == doctest::Approx(2.0));
    CHECK(obs.values[31] == 1.0);
    CHECK(obs.nav == NavCommand::Straight);
}

TEST_CASE("featurize: off-lane ego throws") {
    Scene s = base_scene();
    s.ego.pose = {20.0, 50.0, 0.0};
    CHECK_THROWS_AS(featurize(s), FeaturizeError);
}

TEST_CASE("featurize: agent slot ordering is by range") {
    const auto obs = featurize(busy_scene());
    // nearer agent (25 m ahead) fills slot 0, farther (60 m) slot 1
    CHECK(obs.values[10] * 50.0 == doctest::Approx(25.0).epsilon(1e-2));
    CHECK(obs.values[14] * 50.0 == doctest::Approx(60.0).epsilon(1e-2));
    CHECK(obs.values[18] == doctest::Approx(2.0));  // slot 2 padded
    // current-lane lead gap: 25 m centre distance minus half lengths = 21 m
    CHECK(obs.values[6] * 100.0 == doctest::Approx(21.0).epsilon(1e-6));
    CHECK(obs.values[7] * 10.0 == doctest::Approx(-2.0).epsilon(1e-9));
}

TEST_CASE("policy forward: probabilities are normalized and positive") {
    const auto params = PolicyParams::init(PolicyConfig{}, 7);
    const auto obs = featurize(busy_scene());
    const auto fwd = forward(params, obs);
    double total = 0.0;
    for (double p : fwd.meta_probs()) {
        CHECK(p > 0.0);
        total += p;
    }
    CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(static_cast<int>(fwd.meta_logits.size()) == kMetaVocabSize);
    CHECK(static_cast<int>(fwd.reason_logits.size()) == kReasonVocabSize);
}

TEST_CASE("policy logprob gradient matches finite differences") {
    auto params = PolicyParams::init(PolicyConfig{}, 11);
    const auto obs = featurize(busy_scene());
    Rng rng(3);
    const auto s = sample(params, obs, 1.0, rng);

    params.zero_grad();
    ad::Tape tape;
    const auto graph = build_forward(tape, params, obs);
    const auto lp = build_logprob(tape, params, graph, s, 1.0);
    CHECK(tape.scalar(lp) == doctest::Approx(logprob(params, obs, s)).epsilon(1e-12));
    tape.backward(lp);

    const auto fd = ad::finite_difference([&] { return logprob(params, obs, s); },
                                          params.tensors());
    const auto ts = params.tensors();
    double worst = 0.0;
    for (std::size_t t = 0; t < ts.size(); ++t) {
        for (std::size_t i = 0; i < ts[t]->size(); ++i) {
            const double a = ts[t]->grad[i], b = fd[t][i];
            const double denom = std::max({std::fabs(a), std::fabs(b), 1e-6});
            worst = std::max(worst, std::fabs(a - b) / denom);
        }
    }
    CHECK(worst < 1e-4);
}

TEST_CASE("policy sampling statistics match head probabilities") {
    const auto params = PolicyParams::init(PolicyConfig{}, 5);
    const auto obs = featurize(busy_scene());
    const auto probs = forward(params, obs).meta_probs();

    Rng rng(99);
    const int n = 10000;
    std::vector<int> counts(kMetaVocabSize, 0);
    for (int i = 0; i < n; ++i) ++counts[static_cast<int>(sample(params, obs, 1.0, rng).language.meta)];
    for (int k = 0; k < kMetaVocabSize; ++k) {
        const double expect = n * probs[k];
        const double sd = std::sqrt(n * probs[k] * (1.0 - probs[k]));
        CHECK(std::fabs(counts[k] - expect) <= 3.0 * sd + 1.0);
    }
}

TEST_CASE("policy logprob: uniform heads give closed-form value") {
    auto params = PolicyParams::init(PolicyConfig{}, 1);
    for (auto* t : {&params.w_meta, &params.b_meta, &params.w_reason, &params.b_reason}) {
        std::fill(t->value.begin(), t->value.end(), 0.0);
    }
    const auto obs = featurize(base_scene());
    Rng rng(17);
    const auto s = sample(params, obs, 1.0, rng, /*greedy=*/true);
    // greedy waypoints sit at the means, so the Gaussian term is the pure
    // normalizer; the language term is two draws from a uniform 9-way head
    const double n_coords = 40.0;
    const double expected = 2.0 * std::log(1.0 / 9.0) -
                            n_coords * std::log(params.cfg.sigma_w * std::sqrt(2.0 * kPi));
    CHECK(s.logprob == doctest::Approx(expected).epsilon(1e-12));
    CHECK(logprob(params, obs, s) == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("policy sample: stored logprob is self-consistent and seeds reproduce") {
    const auto params = PolicyParams::init(PolicyConfig{}, 23);
    const auto obs = featurize(busy_scene());
    Rng rng_a(5), rng_b(5);
    for (int i = 0; i < 20; ++i) {
        const auto sa = sample(params, obs, 1.0, rng_a);
        const auto sb = sample(params, obs, 1.0, rng_b);
        CHECK(sa.language.meta == sb.language.meta);
        CHECK(sa.language.reason == sb.language.reason);
        REQUIRE(sa.action.path_waypoints.size() == sb.action.path_waypoints.size());
        for (std::size_t k = 0; k < sa.action.path_waypoints.size(); ++k) {
            CHECK(sa.action.path_waypoints[k].x == sb.action.path_waypoints[k].x);
        }
        CHECK(sa.logprob == doctest::Approx(logprob(params, obs, sa)).epsilon(1e-12));
    }
}

TEST_CASE("policy sample: greedy with zero sigma is deterministic waypoints") {
    PolicyConfig cfg;
    cfg.sigma_w = 0.0;
    const auto params = PolicyParams::init(cfg, 2);
    const auto obs = featurize(base_scene());
    Rng r1(1), r2(777);
    const auto a = sample(params, obs, 1.0, r1, /*greedy=*/true);
    const auto b = sample(params, obs, 1.0, r2, /*greedy=*/true);
    for (std::size_t k = 0; k < a.action.speed_waypoints.size(); ++k) {
        CHECK(a.action.speed_waypoints[k].x == b.action.speed_waypoints[k].x);
        CHECK(a.action.speed_waypoints[k].y == b.action.speed_waypoints[k].y);
    }
    CHECK(a.language.meta == b.language.meta);
}

TEST_CASE("policy checkpoint round-trips bit-exactly") {
    const auto params = PolicyParams::init(PolicyConfig{}, 31);
    const auto path = std::filesystem::temp_directory_path() / "takevla_policy_test.ckpt";
    params.save(path);
    const auto loaded = PolicyParams::load(path);
    std::filesystem::remove(path);

    const auto a = params.tensors();
    const auto b = loaded.tensors();
    REQUIRE(a.size() == b.size());
    for (std::size_t t = 0; t < a.size(); ++t) {
        REQUIRE(a[t]->shape == b[t]->shape);
        for (std::size_t i = 0; i < a[t]->size(); ++i) CHECK(a[t]->value[i] == b[t]->value[i]);
    }
    const auto obs = featurize(busy_scene());
    Rng r1(9), r2(9);
    const auto sa = sample(params, obs, 1.0, r1);
    const auto sb = sample(loaded, obs, 1.0, r2);
    CHECK(sa.logprob == sb.logprob);
}

TEST_CASE("waypoint means: tape graph agrees with plain evaluation") {
    auto params = PolicyParams::init(PolicyConfig{}, 41);
    const auto obs = featurize(busy_scene());
    const auto fwd = forward(params, obs);
    const auto plain = waypoint_means(params, fwd, MetaAction::Decelerate);

    ad::Tape tape;
    const auto graph = build_forward(tape, params, obs);
    const auto node = build_waypoint_means(tape, params, graph, MetaAction::Decelerate);
    const auto& taped = tape.value(node);
    REQUIRE(taped.size() == plain.size());
    for (std::size_t i = 0; i < plain.size(); ++i) {
        CHECK(taped[i] == doctest::Approx(plain[i]).epsilon(1e-12));
    }
}
