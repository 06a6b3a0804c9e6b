#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>

#include "gradcheck.hpp"
#include "uwbrl/agent.hpp"
#include "uwbrl/error.hpp"
#include "uwbrl/simulator.hpp"

using namespace uwbrl;

namespace {

PreprocessedCir canonical_cir() {
    // Deterministic smooth window with a leading edge at index 50.
    PreprocessedCir c;
    for (int i = 0; i < kWindowLength; ++i) {
        const double t = i - 50.0;
        c.values[static_cast<std::size_t>(i)] = i < 50 ? 0.02 * (i % 5) / 4.0 : std::exp(-t / 30.0) * (0.6 + 0.4 * std::cos(t / 3.0));
    }
    return c;
}

nn::Matrix one_state(const PreprocessedCir& c) { return nn::stack_states({&c}); }

AgentConfig small_agent_config() {
    AgentConfig cfg;
    cfg.network = gradcheck::tiny_shape();
    cfg.batch_size = 10;
    cfg.train_every = 10;
    cfg.target_update_every = 20;
    cfg.replay_capacity = 400;
    cfg.scheduler_patience = 3;
    cfg.epsilon_decay = 1e-3;
    return cfg;
}

Episode small_episode(std::uint64_t seed) {
    Rng rng(seed);
    return generate_episode(make_environment("env1"), reference_plan(0.1), AnchorPolicy::RoundRobin, rng);
}

bool all_zero(nn::ActorNet& net) {
    for (auto* p : net.params()) {
        if (!p->value.isZero(0.0)) return false;
    }
    return true;
}

}  // namespace

TEST_CASE("network output bounds") {
    const PreprocessedCir c = canonical_cir();
    nn::ActorNet zero = nn::ActorNet::zeros(nn::NetworkShape::scaled(0.25));
    CHECK(zero.forward(one_state(c), {})(0) == 0.0);
    nn::CriticNet zc = nn::CriticNet::zeros(nn::NetworkShape::scaled(0.25));
    CHECK(zc.forward(one_state(c), nn::Vector::Constant(1, 300.0), {})(0) == 0.0);

    Rng rng(3);
    nn::ActorNet actor(gradcheck::tiny_shape(), nn::OutputHead::TanhScaled, rng);
    nn::CriticNet critic(gradcheck::tiny_shape(), rng);
    for (auto* p : actor.params()) p->value *= 50.0;
    for (auto* p : critic.params()) p->value *= 50.0;
    const gradcheck::Batch b = gradcheck::random_batch(32, rng);
    const nn::Vector a = actor.forward(b.states, {});
    const nn::Vector q = critic.forward(b.states, a, {});
    CHECK(a.cwiseAbs().maxCoeff() <= 1000.0);
    CHECK(q.cwiseAbs().maxCoeff() <= 1.0);
}

TEST_CASE("frozen forward values") {
    // Regression values computed once by this implementation.
    const PreprocessedCir c = canonical_cir();
    Rng rng(2024);
    nn::ActorNet actor(nn::NetworkShape::scaled(0.25), nn::OutputHead::TanhScaled, rng);
    nn::CriticNet critic(nn::NetworkShape::scaled(0.25), rng);
    const double a = actor.forward(one_state(c), {})(0);
    const double q = critic.forward(one_state(c), nn::Vector::Constant(1, 250.0), {})(0);
    CHECK(a == doctest::Approx(-0.83767143562147295).epsilon(1e-9));
    CHECK(q == doctest::Approx(-0.0019233985089632131).epsilon(1e-9));
}

TEST_CASE("loss gradients match finite differences") {
    for (std::uint64_t seed : {1u, 2u}) {
        const auto c = gradcheck::critic_loss_check(seed);
        INFO("critic tensor ", c.tensor);
        CHECK(c.worst < 1e-4);
        const auto a = gradcheck::actor_loss_check(seed);
        INFO("actor tensor ", a.tensor);
        CHECK(a.worst < 1e-4);
    }
}

TEST_CASE("loss arithmetic") {
    CHECK(critic_target(0.1, 0.2, 0.5) == doctest::Approx(0.2));
    CHECK(critic_target(0.3, 0.0, 0.5) == 0.3);
    CHECK(critic_target(0.5, 1.0, 0.5) == 1.0);
    CHECK(critic_loss(nn::Vector::Constant(1, 0.2), nn::Vector::Constant(1, 0.1)) == doctest::Approx(0.01));
    const nn::Vector same = nn::Vector::LinSpaced(5, -0.3, 0.8);
    CHECK(critic_loss(same, same) == 0.0);
    CHECK(actor_loss(nn::Vector::Constant(1, 0.3)) == doctest::Approx(-0.3));
    CHECK(actor_loss(nn::Vector::Zero(4)) == 0.0);
}

TEST_CASE("soft update algebra") {
    nn::Matrix target = nn::Matrix::Zero(1, 1);
    const nn::Matrix source = nn::Matrix::Ones(1, 1);
    nn::soft_update(target, source, 0.01);
    CHECK(target(0, 0) == doctest::Approx(0.01).epsilon(1e-12));
    for (int k = 2; k <= 500; ++k) {
        nn::soft_update(target, source, 0.01);
        CHECK(std::abs(target(0, 0) - (1.0 - std::pow(0.99, k))) < 1e-12);
    }
    nn::Matrix t2 = nn::Matrix::Random(3, 4);
    const nn::Matrix s2 = nn::Matrix::Random(3, 4);
    nn::Matrix copy = t2;
    nn::soft_update(copy, s2, 0.0);
    CHECK(copy == t2);
    nn::soft_update(copy, s2, 1.0);
    CHECK(copy == s2);
    nn::Matrix wrong(2, 2);
    CHECK_THROWS_AS(nn::soft_update(wrong, s2, 0.5), ShapeMismatch);

    Rng rng(5);
    nn::ActorNet a(gradcheck::tiny_shape(), nn::OutputHead::TanhScaled, rng);
    nn::ActorNet b = nn::ActorNet::zeros(gradcheck::tiny_shape());
    double initial = 0.0;
    for (auto* p : a.params()) initial += p->value.squaredNorm();
    initial = std::sqrt(initial);
    for (int k = 1; k <= 50; ++k) {
        nn::soft_update(b, a, 0.01);
        double dist = 0.0;
        auto pa = a.params();
        auto pb = b.params();
        for (std::size_t i = 0; i < pa.size(); ++i) dist += (pa[i]->value - pb[i]->value).squaredNorm();
        CHECK(std::abs(std::sqrt(dist) - std::pow(0.99, k) * initial) < 1e-12 * std::max(1.0, initial));
    }
}

TEST_CASE("adam first step") {
    nn::Param p{"w", nn::Matrix::Constant(2, 1, 1.0), nn::Matrix(2, 1)};
    p.grad << 0.5, -2.0;
    nn::Adam opt(0.1);
    opt.step({&p});
    // Bias-corrected moments equal g and g^2 after one step.
    CHECK(p.value(0) == doctest::Approx(1.0 - 0.1 * 0.5 / (0.5 + 1e-8)));
    CHECK(p.value(1) == doctest::Approx(1.0 + 0.1 * 2.0 / (2.0 + 1e-8)));
    nn::Param extra{"v", nn::Matrix::Zero(1, 1), nn::Matrix::Zero(1, 1)};
    CHECK_THROWS_AS(opt.step({&p, &extra}), ShapeMismatch);
}

TEST_CASE("exploration schedule") {
    AgentConfig cfg;
    cfg.epsilon_decay = 0.01;
    CHECK(epsilon(0, cfg) == 1.0);
    CHECK(epsilon(100, cfg) == doctest::Approx(0.05 + 0.95 * std::exp(-1.0)).epsilon(1e-12));
    CHECK(epsilon(100, cfg) == doctest::Approx(0.3995).epsilon(1e-4));
    CHECK(epsilon(100000, cfg) == doctest::Approx(0.05).epsilon(1e-12));
    const double lambda = epsilon_decay_for(5000.0, cfg);
    cfg.epsilon_decay = lambda;
    CHECK(epsilon(5000, cfg) == doctest::Approx(0.1).epsilon(1e-12));

    Rng rng(12);
    for (int i = 0; i < 100; ++i) CHECK(select_action(123.0, 0.0, rng) == 123.0);
    CHECK_THROWS_AS(select_action(0.0, 1.5, rng), InvalidArgument);

    // Kolmogorov-Smirnov against U(-1000, 1000).
    std::vector<double> draws(10000);
    for (double& d : draws) d = select_action(0.0, 1.0, rng);
    std::sort(draws.begin(), draws.end());
    double ks = 0.0;
    for (std::size_t i = 0; i < draws.size(); ++i) {
        const double cdf = (draws[i] + 1000.0) / 2000.0;
        const double n = static_cast<double>(draws.size());
        ks = std::max({ks, std::abs(cdf - i / n), std::abs(cdf - (i + 1) / n)});
        CHECK(std::abs(draws[i]) <= 1000.0);
    }
    CHECK(ks < 1.63 / std::sqrt(10000.0));

    nn::ActorNet zero = nn::ActorNet::zeros(gradcheck::tiny_shape());
    CHECK(select_action(zero, canonical_cir(), 0.0, rng) == 0.0);
}

TEST_CASE("replay memory") {
    ReplayMemory mem(5);
    Rng rng(1);
    CHECK_THROWS_AS(mem.sample(1, rng), InvalidArgument);
    for (int i = 0; i < 8; ++i) {
        Experience e;
        e.action_mm = i;
        mem.push(e);
    }
    CHECK(mem.size() == 5);
    for (std::size_t i = 0; i < 5; ++i) CHECK(mem.at(i).action_mm == 3.0 + static_cast<double>(i));
    for (int trial = 0; trial < 50; ++trial) {
        const auto s = mem.sample(4, rng);
        std::set<const Experience*> distinct(s.begin(), s.end());
        CHECK(distinct.size() == 4);
    }
    CHECK_THROWS_AS(mem.sample(6, rng), InvalidArgument);
    mem.clear();
    CHECK(mem.size() == 0);
}

TEST_CASE("plateau scheduler") {
    SUBCASE("steady improvement never triggers") {
        PlateauScheduler s(150);
        for (int i = 0; i < 150; ++i) {
            const auto d = s.step(1.0 - 0.005 * i);
            CHECK_FALSE(d.reduce_lr);
            CHECK_FALSE(d.release_target_actor);
        }
    }
    SUBCASE("flat loss triggers on the 151st episode and latches") {
        PlateauScheduler s(150);
        for (int i = 0; i < 150; ++i) CHECK_FALSE(s.step(0.7).reduce_lr);
        const auto d = s.step(0.7);
        CHECK(d.reduce_lr);
        CHECK(d.release_target_actor);
        CHECK(s.reductions() == 1);
        // Improvement afterwards keeps the release.
        const auto after = s.step(0.1);
        CHECK_FALSE(after.reduce_lr);
        CHECK(after.release_target_actor);
        CHECK(s.released());
    }
    SUBCASE("tiny relative changes count as no improvement") {
        PlateauScheduler s(2, 1e-3);
        s.step(1.0);
        CHECK_FALSE(s.step(0.9999).reduce_lr);
        CHECK(s.step(0.9998).reduce_lr);
    }
}

TEST_CASE("target actor stays frozen until release") {
    AgentConfig cfg = small_agent_config();
    cfg.scheduler_patience = 1000;
    cfg.epsilon_decay = 0.05;  // mostly greedy after a few hundred samples
    Agent agent(cfg, 4);
    const Episode ep = small_episode(1);
    const std::vector<bool> all(ep.size(), true);
    for (int e = 0; e < 3; ++e) {
        const EpisodeStats st = agent.run_episode(ep, all);
        CHECK(st.max_abs_target_correction == 0.0);
        CHECK_FALSE(st.target_actor_released);
        CHECK(all_zero(agent.target_actor()));
    }
    CHECK(agent.replay().size() > 0);
    for (std::size_t i = 0; i < agent.replay().size(); ++i) {
        const Experience& x = agent.replay().at(i);
        CHECK(std::abs(x.action_mm) <= 1000.0);
        CHECK(x.reward > 0.0);
        CHECK(x.reward <= 0.5);
    }
}

TEST_CASE("release starts soft updates of the target actor") {
    AgentConfig cfg = small_agent_config();
    cfg.scheduler_patience = 1;
    cfg.scheduler_rel_threshold = 10.0;  // nothing counts as improvement
    Agent agent(cfg, 4);
    const Episode ep = small_episode(1);
    const std::vector<bool> all(ep.size(), true);
    bool released = false;
    for (int e = 0; e < 6 && !released; ++e) released = agent.run_episode(ep, all).target_actor_released;
    REQUIRE(released);
    CHECK(all_zero(agent.target_actor()));
    CHECK(agent.lr_actor() < cfg.lr_actor);
    agent.run_episode(ep, all);
    CHECK_FALSE(all_zero(agent.target_actor()));
    CHECK(agent.scheduler().released());
}

TEST_CASE("training is deterministic per seed") {
    const AgentConfig cfg = small_agent_config();
    const Episode ep = small_episode(2);
    const std::vector<bool> all(ep.size(), true);
    Agent a(cfg, 9), b(cfg, 9);
    for (int e = 0; e < 3; ++e) {
        const EpisodeStats sa = a.run_episode(ep, all);
        const EpisodeStats sb = b.run_episode(ep, all);
        CHECK(sa.train_reward_mean == sb.train_reward_mean);
        CHECK(sa.actor_loss_mean == sb.actor_loss_mean);
        CHECK(sa.critic_loss_mean == sb.critic_loss_mean);
    }
    const nn::Matrix probe = one_state(canonical_cir());
    CHECK(a.correct(probe)(0) == b.correct(probe)(0));
}

TEST_CASE("held-out samples never reach replay memory") {
    const AgentConfig cfg = small_agent_config();
    const Episode ep = small_episode(3);
    std::vector<bool> mask(ep.size(), true);
    for (std::size_t i = 0; i < ep.size(); ++i) mask[i] = (i / 20) % 2 == 0;
    Agent agent(cfg, 1);
    const EpisodeStats st = agent.run_episode(ep, mask);
    std::size_t trainable = 0;
    for (bool m : mask) trainable += m ? 1 : 0;
    // Experiences are emitted for buffer middles that are trainable.
    CHECK(st.experiences <= trainable);
    CHECK(agent.replay().size() == st.experiences);
    for (std::size_t i = 0; i < agent.replay().size(); ++i) {
        const auto& x = agent.replay().at(i);
        bool from_training = false;
        for (std::size_t j = 0; j < ep.size() && !from_training; ++j) {
            from_training = mask[j] && ep.measurements[j].cir.values == x.cir.values;
        }
        CHECK(from_training);
    }
}

TEST_CASE("invalid agent configuration is rejected") {
    AgentConfig cfg;
    cfg.smoothing_length = 30;
    CHECK_THROWS_AS(validate(cfg), ConfigError);
    cfg = AgentConfig{};
    cfg.gamma = 1.5;
    CHECK_THROWS_AS(validate(cfg), ConfigError);
    cfg = AgentConfig{};
    cfg.tau_actor = -0.1;
    CHECK_THROWS_AS(validate(cfg), ConfigError);
    CHECK_THROWS_AS(nn::NetworkShape::scaled(0.0), ConfigError);
    CHECK_THROWS_AS(nn::NetworkShape::scaled(1.5), ConfigError);
}
