#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "uwbrl/measurement.hpp"
#include "uwbrl/nn.hpp"
#include "uwbrl/tracking.hpp"

namespace uwbrl {

struct AgentConfig {
    double gamma = 0.5;
    double tau_actor = 0.01;
    double tau_critic = 0.01;
    double lr_actor = 5e-5;
    double lr_critic = 5e-4;
    int batch_size = 50;
    int scheduler_patience = 150;  // episodes
    double lr_reduction_factor = 0.5;
    double scheduler_rel_threshold = 1e-3;
    double epsilon_min = 0.05;
    double epsilon_max = 1.0;
    double epsilon_decay = 1e-5;  // per training step
    std::size_t replay_capacity = 50000;
    int train_every = 50;           // K
    int target_update_every = 100;  // T
    std::size_t smoothing_length = 31;
    double reward_floor_mm = kDefaultRewardFloorMm;
    nn::NetworkShape network;
    EkfConfig ekf;
};

void validate(const AgentConfig& cfg);

// Exponential decay from epsilon_max toward epsilon_min.
double epsilon(long long step, const AgentConfig& cfg);

// Decay rate that brings epsilon to 2 * epsilon_min after `steps` steps.
double epsilon_decay_for(double steps, const AgentConfig& cfg);

// With probability eps a uniform draw from [-1000, 1000], otherwise
// policy_output. Always consumes one uniform draw, plus one when exploring.
double select_action(double policy_output, double eps, Rng& rng);
double select_action(nn::ActorNet& target_actor, const PreprocessedCir& cir, double eps, Rng& rng);

// Same-state target: the action does not influence the next state.
inline double critic_target(double reward, double q_next, double gamma) { return reward + gamma * q_next; }

double critic_loss(const nn::Vector& targets, const nn::Vector& q);
double actor_loss(const nn::Vector& q);

struct Experience {
    PreprocessedCir cir;
    double action_mm = 0.0;
    double reward = 0.0;
};

class ReplayMemory {
public:
    explicit ReplayMemory(std::size_t capacity = 50000);

    void push(const Experience& e);
    // Uniform sample of distinct experiences. Throws InvalidArgument if the
    // memory holds fewer than n entries.
    std::vector<const Experience*> sample(std::size_t n, Rng& rng) const;

    std::size_t size() const { return data_.size(); }
    std::size_t capacity() const { return capacity_; }
    // i = 0 is the oldest retained experience.
    const Experience& at(std::size_t i) const;
    void clear();

private:
    std::size_t capacity_;
    std::size_t head_ = 0;  // slot of the oldest entry once full
    std::vector<Experience> data_;
};

class PlateauScheduler {
public:
    struct Decision {
        bool reduce_lr = false;
        bool release_target_actor = false;  // latched
    };

    PlateauScheduler(int patience = 150, double rel_threshold = 1e-3);

    Decision step(double loss);

    bool released() const { return released_; }
    int bad_epochs() const { return bad_epochs_; }
    double best() const { return best_; }
    int reductions() const { return reductions_; }

    void restore(double best, int bad_epochs, bool released, int reductions);

private:
    int patience_;
    double rel_threshold_;
    double best_;
    int bad_epochs_ = 0;
    bool released_ = false;
    int reductions_ = 0;
};

struct EpisodeStats {
    double train_reward_mean = 0.0;
    double actor_loss_mean = 0.0;
    double critic_loss_mean = 0.0;
    std::size_t experiences = 0;
    std::size_t batches = 0;
    std::size_t explored = 0;
    double epsilon = 0.0;
    double lr_actor = 0.0;
    double lr_critic = 0.0;
    bool target_actor_released = false;
    bool lr_reduced = false;
    double max_abs_target_correction = 0.0;  // over non-exploring steps
};

class Agent {
public:
    Agent(const AgentConfig& cfg, std::uint64_t seed);

    // One pass of the self-supervised loop over an episode. Samples with
    // trainable[i] == false run through tracking but never reach replay and
    // are never explored. Reads only timestamps, anchor ids, measured ranges
    // and CIR windows.
    EpisodeStats run_episode(const Episode& episode, const std::vector<bool>& trainable);

    // Eval-mode actor corrections (mm), one per column of states.
    nn::Vector correct(const nn::Matrix& states);
    nn::Vector correct(const std::vector<const PreprocessedCir*>& cirs);

    // Restores initial learning rates and raises epsilon back to its start
    // (environment change).
    void reset_for_new_environment();

    const AgentConfig& config() const { return cfg_; }
    nn::ActorNet& actor() { return actor_; }
    nn::CriticNet& critic() { return critic_; }
    nn::ActorNet& target_actor() { return target_actor_; }
    nn::CriticNet& target_critic() { return target_critic_; }
    const ReplayMemory& replay() const { return replay_; }
    const PlateauScheduler& scheduler() const { return scheduler_; }
    long long train_steps() const { return train_steps_; }
    long long epsilon_step() const { return epsilon_step_; }
    int episodes_done() const { return episodes_done_; }
    double current_epsilon() const;
    double lr_actor() const { return actor_opt_.lr(); }
    double lr_critic() const { return critic_opt_.lr(); }
    bool target_actor_untouched() const { return target_actor_untouched_; }
    const Tracker& tracker() const { return tracker_; }

    void save(const std::string& path) const;
    static Agent load(const std::string& path);

    struct BatchLosses {
        double actor = 0.0;
        double critic = 0.0;
    };
    // One critic and actor update on a replay batch (replay must hold a batch).
    BatchLosses train_batch();

private:
    void refresh_target_cache(const Episode& episode, std::size_t from);

    AgentConfig cfg_;
    Rng rng_;
    nn::ActorNet actor_;
    nn::CriticNet critic_;
    nn::ActorNet target_actor_;
    nn::CriticNet target_critic_;
    nn::Adam actor_opt_;
    nn::Adam critic_opt_;
    ReplayMemory replay_;
    PlateauScheduler scheduler_;
    Tracker tracker_;
    long long train_steps_ = 0;    // trainable samples consumed
    long long epsilon_step_ = 0;   // offset-adjusted step fed to epsilon()
    int episodes_done_ = 0;
    bool target_actor_untouched_ = true;

    std::vector<double> target_cache_;
    std::size_t cache_begin_ = 0;
    std::size_t cache_end_ = 0;

    friend class CheckpointIo;
};

}  // namespace uwbrl
