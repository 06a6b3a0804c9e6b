#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "uwbrl/agent.hpp"
#include "uwbrl/config.hpp"
#include "uwbrl/metrics.hpp"
#include "uwbrl/simulator.hpp"

namespace uwbrl {

inline constexpr int kConfigSchemaVersion = 1;

struct ExperimentConfig {
    std::string run_id = "run";
    double scale = 1.0;
    std::uint64_t seed = 7;  // simulator seed; the agent and baselines derive theirs from it
    Environment environment = make_environment("env1");
    Environment adapt_environment = make_environment("env2");
    TrajectoryPlan plan = reference_plan(1.0);
    AnchorPolicy anchor_policy = AnchorPolicy::RoundRobin;
    int episodes = 1000;
    // Re-simulate the trajectory every episode instead of replaying one recording.
    bool live_simulation = false;
    int validation_block = 50;  // samples per block
    int validation_every = 5;   // every n-th block is held out (20 %)
    double epsilon_decay_episodes = 300.0;
    int adapt_switch_episode = 500;  // episodes on the first environment
    int adapt_episodes = 500;        // episodes after the switch
    double random_min_length_mm = 8000.0;
    AgentConfig agent;
    SupervisedConfig supervised;
};

// Defaults with the desk-scale knob applied to trajectory size, network
// widths, episode counts and scheduler patience.
ExperimentConfig default_experiment(double scale = 1.0);

// Overrides from a JSON document on top of cfg; scale, if present, must be
// applied by the caller beforehand via default_experiment.
void apply_json(const Json& j, ExperimentConfig& cfg);
Json to_json(const ExperimentConfig& cfg);
ExperimentConfig load_experiment_file(const std::string& path, double scale_override = 0.0);
void write_config_snapshot(const ExperimentConfig& cfg, const std::string& dir);

// Contiguous-block split: true marks training samples.
std::vector<bool> training_mask(std::size_t n, int block, int every);
std::vector<std::size_t> indices_where(const std::vector<bool>& mask, bool value);

struct TrainingData {
    Episode episode;
    std::vector<bool> trainable;
    std::vector<std::size_t> validation;
    std::vector<std::size_t> training;
};

TrainingData make_training_data(const Environment& env, const ExperimentConfig& cfg, std::uint64_t seed);
TrainingData split_training_data(Episode episode, const ExperimentConfig& cfg);

// Agent config resolved against the data (epsilon decay and EKF start).
AgentConfig resolve_agent_config(const ExperimentConfig& cfg, const Environment& env, std::size_t trainable_per_episode);

struct EpisodeMetrics {
    int episode = 0;
    double train_reward_mean = 0.0;
    double val_mae_mm = 0.0;
    double val_mae_nlos_mm = 0.0;
    double epsilon = 0.0;
    double lr_actor = 0.0;
    double lr_critic = 0.0;
    bool target_actor_released = false;
    std::string environment;
};

struct ValidationScore {
    double mae_all = 0.0;
    double mae_nlos = 0.0;
};

// Scores the agent's actor on the held-out samples. Ground truth is read
// here and only here.
ValidationScore score_validation(Agent& agent, const TrainingData& data);
ValidationScore score_uncorrected(const TrainingData& data);

using EpisodeCallback = std::function<void(const EpisodeMetrics&, Agent&)>;

// Runs episodes [first, first + count). Each training pass executes under a
// ground-truth firewall. With live simulation a fresh recording replaces
// data.episode before every episode.
void train_agent(Agent& agent, TrainingData& data, const ExperimentConfig& cfg, const Environment& env,
                 int first_episode, int count, const EpisodeCallback& on_episode);

std::string metrics_header();
std::string metrics_row(const EpisodeMetrics& m);

// Fits the supervised baseline on the training blocks of data.
SupervisedModel train_supervised_baseline(const TrainingData& data, nn::OutputHead head,
                                          const SupervisedConfig& cfg, std::uint64_t seed);

struct TrajectoryRow {
    double timestamp = 0.0;
    Vec2 truth = Vec2::Zero();
    Vec2 uncorrected = Vec2::Zero();
    Vec2 corrected = Vec2::Zero();
};

// EKF tracks of an episode fed with raw and with corrected ranges.
std::vector<TrajectoryRow> track_episode(const Episode& episode, const Corrector& corrector, const EkfConfig& ekf);
void write_trajectory_csv(const std::vector<TrajectoryRow>& rows, const std::string& path);
void write_trajectory_svg(const std::vector<TrajectoryRow>& rows, const Environment& env, const std::string& path);
void write_boxplot_svg(const EvalReport& report, const std::string& path);

}  // namespace uwbrl
