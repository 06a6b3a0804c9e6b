#pragma once

// Central finite-difference checks of the two training losses on small
// networks. The analytic side drives the same forward/backward calls the
// agent uses; the numeric side only evaluates forward passes.

#include <string>
#include <vector>

#include "oracles.hpp"
#include "uwbrl/agent.hpp"
#include "uwbrl/nn.hpp"

namespace gradcheck {

using namespace uwbrl;

inline nn::NetworkShape tiny_shape() {
    nn::NetworkShape s;
    s.conv_channels = {4, 3, 2};
    s.conv_kernels = {4, 3, 2};
    s.dense_widths = {6, 5, 4, 3};
    s.dropout = {0.0, 0.0, 0.0, 0.0};
    s.critic_latent = 2;
    s.critic_head = {3, 4, 3};
    return s;
}

struct Batch {
    nn::Matrix states;
    nn::Vector actions;
    nn::Vector targets;
};

inline Batch random_batch(int b, Rng& rng) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::uniform_real_distribution<double> act(-900.0, 900.0);
    std::uniform_real_distribution<double> y(-0.4, 0.9);
    Batch out{nn::Matrix(kWindowLength, b), nn::Vector(b), nn::Vector(b)};
    for (Eigen::Index j = 0; j < out.states.cols(); ++j) {
        for (Eigen::Index i = 0; i < out.states.rows(); ++i) out.states(i, j) = u(rng);
        out.actions(j) = act(rng);
        out.targets(j) = y(rng);
    }
    return out;
}

struct Result {
    double worst = 0.0;   // largest per-tensor relative error
    std::string tensor;   // where it occurred
    std::size_t checked = 0;
};

// Flattened gradient of every parameter, in params() order.
inline Eigen::VectorXd flatten_grads(const std::vector<nn::Param*>& params) {
    std::size_t n = 0;
    for (auto* p : params) n += static_cast<std::size_t>(p->grad.size());
    Eigen::VectorXd g(static_cast<Eigen::Index>(n));
    Eigen::Index k = 0;
    for (auto* p : params) {
        g.segment(k, p->grad.size()) = Eigen::Map<const Eigen::VectorXd>(p->grad.data(), p->grad.size());
        k += p->grad.size();
    }
    return g;
}

template <class Loss>
Result compare(const std::vector<nn::Param*>& params, Loss loss, double h = 1e-6) {
    Result r;
    for (auto* p : params) {
        Eigen::VectorXd analytic = Eigen::Map<const Eigen::VectorXd>(p->grad.data(), p->grad.size());
        Eigen::VectorXd numeric(p->value.size());
        for (Eigen::Index i = 0; i < p->value.size(); ++i) {
            const double saved = p->value.data()[i];
            p->value.data()[i] = saved + h;
            const double up = loss();
            p->value.data()[i] = saved - h;
            const double down = loss();
            p->value.data()[i] = saved;
            numeric(i) = (up - down) / (2.0 * h);
        }
        const double err = oracle::relative_error(analytic, numeric, 1e-5);
        r.checked += static_cast<std::size_t>(p->value.size());
        if (err > r.worst) {
            r.worst = err;
            r.tensor = p->name;
        }
    }
    return r;
}

// The near-zero output initialisation leaves upstream gradients around 1e-9,
// where central differences are dominated by rounding. Rescale the Q layer.
inline void scale_output_layer(nn::CriticNet& critic) {
    for (auto* p : critic.params()) {
        if (p->name == "q.weight" || p->name == "q.bias") p->value *= 300.0;
    }
}

// Critic loss mean((y - Q(s, a))^2) with batch statistics, every critic parameter.
inline Result critic_loss_check(std::uint64_t seed, int b = 6) {
    Rng rng(seed);
    nn::CriticNet critic(tiny_shape(), rng);
    scale_output_layer(critic);
    const Batch batch = random_batch(b, rng);
    Rng drop(1);
    const nn::Context train{true, &drop};
    auto loss = [&] { return critic_loss(batch.targets, critic.forward(batch.states, batch.actions, train)); };
    const nn::Vector q = critic.forward(batch.states, batch.actions, train);
    critic.backward(-2.0 * (batch.targets - q) / static_cast<double>(b), true);
    return compare(critic.params(), loss);
}

// Actor loss -mean(Q(s, mu(s))) with the critic frozen in evaluation mode,
// every actor parameter.
inline Result actor_loss_check(std::uint64_t seed, int b = 6) {
    Rng rng(seed);
    nn::ActorNet actor(tiny_shape(), nn::OutputHead::TanhScaled, rng);
    nn::CriticNet critic(tiny_shape(), rng);
    scale_output_layer(critic);
    const Batch batch = random_batch(b, rng);
    // Spread the outputs over the Tanh range so the action path matters.
    for (auto* p : actor.params()) {
        if (p->name == "out.weight" || p->name == "out.bias") p->value *= 200.0;
    }
    // Non-trivial running statistics for the frozen critic.
    Rng drop(1);
    for (int warm = 0; warm < 3; ++warm) critic.forward(random_batch(b, rng).states, batch.actions, {true, &drop});
    const nn::Context train{true, &drop};
    const nn::Context eval{};
    auto loss = [&] { return actor_loss(critic.forward(batch.states, actor.forward(batch.states, train), eval)); };
    const nn::Vector a = actor.forward(batch.states, train);
    critic.forward(batch.states, a, eval);
    const nn::Vector dq_da = critic.backward(nn::Vector::Constant(b, -1.0 / b), false);
    actor.backward(dq_da);
    return compare(actor.params(), loss);
}

}  // namespace gradcheck
