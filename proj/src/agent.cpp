#include "uwbrl/agent.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include "uwbrl/error.hpp"

namespace uwbrl {

void validate(const AgentConfig& cfg) {
    auto fail = [](const std::string& what) { throw ConfigError(what); };
    if (!(cfg.gamma >= 0.0 && cfg.gamma < 1.0)) fail("gamma must lie in [0, 1)");
    if (!(cfg.tau_actor > 0.0 && cfg.tau_actor <= 1.0) || !(cfg.tau_critic > 0.0 && cfg.tau_critic <= 1.0)) {
        fail("tau must lie in (0, 1]");
    }
    if (!(cfg.lr_actor > 0.0) || !(cfg.lr_critic > 0.0)) fail("learning rates must be positive");
    if (cfg.batch_size < 1) fail("batch size must be positive");
    if (cfg.scheduler_patience < 1) fail("scheduler patience must be positive");
    if (!(cfg.lr_reduction_factor > 0.0 && cfg.lr_reduction_factor <= 1.0)) fail("lr reduction factor must lie in (0, 1]");
    if (!(cfg.scheduler_rel_threshold >= 0.0)) fail("scheduler threshold must be non-negative");
    if (!(cfg.epsilon_min >= 0.0 && cfg.epsilon_min <= cfg.epsilon_max && cfg.epsilon_max <= 1.0)) {
        fail("need 0 <= epsilon_min <= epsilon_max <= 1");
    }
    if (!(cfg.epsilon_decay >= 0.0)) fail("epsilon decay must be non-negative");
    if (cfg.replay_capacity < static_cast<std::size_t>(cfg.batch_size)) fail("replay capacity below batch size");
    if (cfg.train_every < 1 || cfg.target_update_every < 1) fail("update periods must be positive");
    if (cfg.smoothing_length == 0 || cfg.smoothing_length % 2 == 0) fail("smoothing length must be odd");
    if (!(cfg.reward_floor_mm > 0.0)) fail("reward floor must be positive");
    if (!(cfg.network.critic_action_unit_mm > 0.0)) fail("critic action unit must be positive");
    validate(cfg.ekf);
}

double epsilon(long long step, const AgentConfig& cfg) {
    if (step < 0) throw InvalidArgument("epsilon step must be non-negative");
    return cfg.epsilon_min +
           (cfg.epsilon_max - cfg.epsilon_min) * std::exp(-cfg.epsilon_decay * static_cast<double>(step));
}

double epsilon_decay_for(double steps, const AgentConfig& cfg) {
    const double span = cfg.epsilon_max - cfg.epsilon_min;
    if (!(steps > 0.0) || !(cfg.epsilon_min > 0.0) || span <= cfg.epsilon_min) return 0.0;
    return std::log(span / cfg.epsilon_min) / steps;
}

double select_action(double policy_output, double eps, Rng& rng) {
    if (!(eps >= 0.0 && eps <= 1.0)) throw InvalidArgument("epsilon must lie in [0, 1]");
    std::uniform_real_distribution<double> u(0.0, 1.0);
    if (u(rng) < eps) {
        std::uniform_real_distribution<double> action(-nn::kActionLimitMm, nn::kActionLimitMm);
        return action(rng);
    }
    return policy_output;
}

double select_action(nn::ActorNet& target_actor, const PreprocessedCir& cir, double eps, Rng& rng) {
    const nn::Vector out = target_actor.forward(nn::stack_states({&cir}), nn::Context{});
    return select_action(out(0), eps, rng);
}

double critic_loss(const nn::Vector& targets, const nn::Vector& q) {
    if (targets.size() != q.size() || q.size() == 0) throw ShapeMismatch("critic loss needs matching non-empty batches");
    return (targets - q).squaredNorm() / static_cast<double>(q.size());
}

double actor_loss(const nn::Vector& q) {
    if (q.size() == 0) throw EmptyInput("actor loss of an empty batch");
    return -q.mean();
}

// ReplayMemory ---------------------------------------------------------------

ReplayMemory::ReplayMemory(std::size_t capacity) : capacity_(capacity) {
    if (capacity_ == 0) throw InvalidArgument("replay capacity must be positive");
}

void ReplayMemory::push(const Experience& e) {
    if (data_.size() < capacity_) {
        data_.push_back(e);
        return;
    }
    data_[head_] = e;
    head_ = (head_ + 1) % capacity_;
}

const Experience& ReplayMemory::at(std::size_t i) const {
    if (i >= data_.size()) throw InvalidArgument("replay index out of range");
    return data_[(head_ + i) % data_.size()];
}

void ReplayMemory::clear() {
    data_.clear();
    head_ = 0;
}

std::vector<const Experience*> ReplayMemory::sample(std::size_t n, Rng& rng) const {
    if (n > data_.size()) throw InvalidArgument("not enough experiences to sample from");
    // Floyd's algorithm: n distinct indices, uniform over all subsets.
    std::vector<std::size_t> picked;
    picked.reserve(n);
    const std::size_t total = data_.size();
    for (std::size_t j = total - n; j < total; ++j) {
        std::uniform_int_distribution<std::size_t> draw(0, j);
        const std::size_t t = draw(rng);
        if (std::find(picked.begin(), picked.end(), t) == picked.end()) {
            picked.push_back(t);
        } else {
            picked.push_back(j);
        }
    }
    std::vector<const Experience*> out;
    out.reserve(n);
    for (std::size_t idx : picked) out.push_back(&at(idx));
    return out;
}

// PlateauScheduler -----------------------------------------------------------

PlateauScheduler::PlateauScheduler(int patience, double rel_threshold)
    : patience_(patience), rel_threshold_(rel_threshold), best_(std::numeric_limits<double>::infinity()) {
    if (patience_ < 1) throw InvalidArgument("patience must be positive");
}

PlateauScheduler::Decision PlateauScheduler::step(double loss) {
    if (!std::isfinite(loss)) throw NonFiniteLoss("scheduler received a non-finite loss");
    // Relative improvement measured against |best| so negative losses behave.
    if (loss < best_ - rel_threshold_ * std::abs(best_) || std::isinf(best_)) {
        best_ = loss;
        bad_epochs_ = 0;
    } else {
        ++bad_epochs_;
    }
    Decision d;
    if (bad_epochs_ >= patience_) {
        d.reduce_lr = true;
        released_ = true;
        bad_epochs_ = 0;
        ++reductions_;
    }
    d.release_target_actor = released_;
    return d;
}

void PlateauScheduler::restore(double best, int bad_epochs, bool released, int reductions) {
    best_ = best;
    bad_epochs_ = bad_epochs;
    released_ = released;
    reductions_ = reductions;
}

// Agent ----------------------------------------------------------------------

namespace {

nn::ActorNet make_actor(const AgentConfig& cfg, Rng& rng) {
    validate(cfg);
    return nn::ActorNet(cfg.network, nn::OutputHead::TanhScaled, rng);
}

}  // namespace

Agent::Agent(const AgentConfig& cfg, std::uint64_t seed)
    : cfg_(cfg),
      rng_(seed),
      actor_(make_actor(cfg_, rng_)),
      critic_(cfg_.network, rng_),
      target_actor_(nn::ActorNet::zeros(cfg_.network)),
      target_critic_(critic_),
      actor_opt_(cfg_.lr_actor),
      critic_opt_(cfg_.lr_critic),
      replay_(cfg_.replay_capacity),
      scheduler_(cfg_.scheduler_patience, cfg_.scheduler_rel_threshold),
      tracker_(cfg_.ekf, 0.0) {}

double Agent::current_epsilon() const { return epsilon(epsilon_step_, cfg_); }

void Agent::reset_for_new_environment() {
    actor_opt_.set_lr(cfg_.lr_actor);
    critic_opt_.set_lr(cfg_.lr_critic);
    epsilon_step_ = 0;
    scheduler_.restore(std::numeric_limits<double>::infinity(), 0, scheduler_.released(), scheduler_.reductions());
}

nn::Vector Agent::correct(const nn::Matrix& states) { return actor_.forward(states, nn::Context{}); }

nn::Vector Agent::correct(const std::vector<const PreprocessedCir*>& cirs) {
    return correct(nn::stack_states(cirs));
}

void Agent::refresh_target_cache(const Episode& episode, std::size_t from) {
    const std::size_t to = std::min(episode.size(), from + static_cast<std::size_t>(cfg_.target_update_every));
    cache_begin_ = from;
    cache_end_ = to;
    target_cache_.assign(to - from, 0.0);
    // The zero-initialised target actor outputs exactly 0; skip the pass.
    if (target_actor_untouched_) return;
    std::vector<const PreprocessedCir*> cirs;
    cirs.reserve(to - from);
    for (std::size_t i = from; i < to; ++i) cirs.push_back(&episode.measurements[i].cir);
    const nn::Vector out = target_actor_.forward(nn::stack_states(cirs), nn::Context{});
    for (std::size_t i = 0; i < target_cache_.size(); ++i) target_cache_[i] = out(static_cast<Eigen::Index>(i));
}

Agent::BatchLosses Agent::train_batch() {
    const auto batch = replay_.sample(static_cast<std::size_t>(cfg_.batch_size), rng_);
    std::vector<const PreprocessedCir*> cirs;
    nn::Vector actions(static_cast<Eigen::Index>(batch.size()));
    nn::Vector rewards(static_cast<Eigen::Index>(batch.size()));
    for (std::size_t i = 0; i < batch.size(); ++i) {
        cirs.push_back(&batch[i]->cir);
        actions(static_cast<Eigen::Index>(i)) = batch[i]->action_mm;
        rewards(static_cast<Eigen::Index>(i)) = batch[i]->reward;
    }
    const nn::Matrix states = nn::stack_states(cirs);
    const double b = static_cast<double>(batch.size());
    const nn::Context eval{};
    const nn::Context train{true, &rng_};

    const nn::Vector free_actions = actor_.forward(states, eval);
    const nn::Vector q_next = target_critic_.forward(states, free_actions, eval);
    const nn::Vector targets = rewards + cfg_.gamma * q_next;

    const nn::Vector q = critic_.forward(states, actions, train);
    BatchLosses losses;
    losses.critic = critic_loss(targets, q);
    if (!std::isfinite(losses.critic)) throw NonFiniteLoss("critic loss is not finite");
    critic_.backward(-2.0 * (targets - q) / b, true);
    critic_opt_.step(critic_.params());

    const nn::Vector policy = actor_.forward(states, train);
    const nn::Vector q_policy = critic_.forward(states, policy, eval);
    losses.actor = actor_loss(q_policy);
    if (!std::isfinite(losses.actor)) throw NonFiniteLoss("actor loss is not finite");
    const nn::Vector grad_action = critic_.backward(nn::Vector::Constant(q_policy.size(), -1.0 / b), false);
    actor_.backward(grad_action);
    actor_opt_.step(actor_.params());
    return losses;
}

EpisodeStats Agent::run_episode(const Episode& episode, const std::vector<bool>& trainable) {
    if (trainable.size() != episode.size()) throw InvalidArgument("split mask does not match the episode");
    const bool carry = !cfg_.ekf.reset_each_episode && tracker_.started();
    const EkfState carried = tracker_.state();
    tracker_ = Tracker(cfg_.ekf, episode.tag_height_mm);
    if (carry) tracker_.set_state(carried, true);
    SmoothingBuffer buffer(cfg_.smoothing_length);
    cache_begin_ = cache_end_ = 0;

    EpisodeStats stats;
    double reward_sum = 0.0;
    double actor_loss_sum = 0.0;
    double critic_loss_sum = 0.0;
    const auto k = static_cast<long long>(cfg_.train_every);
    const auto t = static_cast<long long>(cfg_.target_update_every);

    for (std::size_t i = 0; i < episode.size(); ++i) {
        const RangeMeasurement& m = episode.measurements[i];
        const Anchor& anchor = episode.anchor(m.anchor_id);
        if (i < cache_begin_ || i >= cache_end_) refresh_target_cache(episode, i);
        const double policy = target_cache_[i - cache_begin_];

        double action = policy;
        bool explored = false;
        if (trainable[i]) {
            std::uniform_real_distribution<double> u(0.0, 1.0);
            if (u(rng_) < epsilon(epsilon_step_, cfg_)) {
                std::uniform_real_distribution<double> draw(-nn::kActionLimitMm, nn::kActionLimitMm);
                action = draw(rng_);
                explored = true;
                ++stats.explored;
            }
        }
        if (!explored) stats.max_abs_target_correction = std::max(stats.max_abs_target_correction, std::abs(policy));

        // The filter always sees the target actor's correction; the buffer
        // keeps the executed one.
        const double filtered_range = std::max(m.measured_range_mm - policy, 1.0);
        const Vec2 p = tracker_.step(m.timestamp, filtered_range, anchor);

        BufferEntry entry;
        entry.ekf_position = p;
        entry.corrected_range_mm = m.measured_range_mm - action;
        entry.cir = m.cir;
        entry.executed_correction_mm = action;
        entry.anchor_id = m.anchor_id;
        entry.sample_index = i;
        entry.trainable = trainable[i];
        if (auto smoothed = buffer.push(std::move(entry)); smoothed && smoothed->middle.trainable) {
            const Anchor& mid_anchor = episode.anchor(smoothed->middle.anchor_id);
            const double target_range =
                position_to_range(smoothed->average_position, mid_anchor, episode.tag_height_mm);
            const double r = compute_reward(smoothed->middle.corrected_range_mm, target_range, cfg_.reward_floor_mm);
            replay_.push({smoothed->middle.cir, smoothed->middle.executed_correction_mm, r});
            reward_sum += r;
            ++stats.experiences;
        }

        if (!trainable[i]) continue;
        ++train_steps_;
        ++epsilon_step_;
        if (train_steps_ % k == 0 && replay_.size() >= static_cast<std::size_t>(cfg_.batch_size)) {
            const BatchLosses l = train_batch();
            actor_loss_sum += l.actor;
            critic_loss_sum += l.critic;
            ++stats.batches;
        }
        if (train_steps_ % t == 0) {
            nn::soft_update(target_critic_, critic_, cfg_.tau_critic);
            if (scheduler_.released()) {
                nn::soft_update(target_actor_, actor_, cfg_.tau_actor);
                target_actor_untouched_ = false;
                cache_begin_ = cache_end_ = 0;
            }
        }
    }

    if (stats.experiences > 0) stats.train_reward_mean = reward_sum / static_cast<double>(stats.experiences);
    if (stats.batches > 0) {
        stats.actor_loss_mean = actor_loss_sum / static_cast<double>(stats.batches);
        stats.critic_loss_mean = critic_loss_sum / static_cast<double>(stats.batches);
        const auto decision = scheduler_.step(stats.actor_loss_mean);
        if (decision.reduce_lr) {
            actor_opt_.set_lr(actor_opt_.lr() * cfg_.lr_reduction_factor);
            critic_opt_.set_lr(critic_opt_.lr() * cfg_.lr_reduction_factor);
            stats.lr_reduced = true;
        }
    }
    ++episodes_done_;
    stats.epsilon = current_epsilon();
    stats.lr_actor = actor_opt_.lr();
    stats.lr_critic = critic_opt_.lr();
    stats.target_actor_released = scheduler_.released();
    return stats;
}

}  // namespace uwbrl
