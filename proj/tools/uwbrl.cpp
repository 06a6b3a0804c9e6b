// Command-line front end: simulate, train-rl, train-supervised, adapt,
// evaluate, bench.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

#include <CLI11.hpp>

#include "uwbrl/dataset.hpp"
#include "uwbrl/error.hpp"
#include "uwbrl/experiment.hpp"

namespace fs = std::filesystem;
using namespace uwbrl;

namespace {

struct Globals {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::string out = "out";
    double scale = 0.0;
};

ExperimentConfig load_config(const Globals& g) {
    ExperimentConfig cfg = g.config.empty() ? default_experiment(g.scale > 0.0 ? g.scale : 1.0)
                                            : load_experiment_file(g.config, g.scale);
    if (g.seed) cfg.seed = *g.seed;
    return cfg;
}

std::string out_path(const Globals& g, const std::string& name) { return (fs::path(g.out) / name).string(); }

void write_json(const Json& j, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path);
    out << j.dump(2) << '\n';
}

Environment pick_environment(const ExperimentConfig& cfg, const std::string& name) {
    if (name.empty()) return cfg.environment;
    if (name == cfg.adapt_environment.name) return cfg.adapt_environment;
    return make_environment(name);
}

TrajectoryPlan pick_plan(const ExperimentConfig& cfg, const std::string& trajectory, Rng& rng) {
    if (trajectory == "reference") return cfg.plan;
    TrajectoryPlan plan = random_plan(reference_aisle(), cfg.random_min_length_mm, rng);
    plan.speed_mm_s = cfg.plan.speed_mm_s;
    plan.sample_rate_hz = cfg.plan.sample_rate_hz;
    return plan;
}

// Recording k of a simulate call; also used by evaluate --trajectory random.
std::uint64_t recording_seed(std::uint64_t seed, int k) { return seed + 1000003ULL * static_cast<std::uint64_t>(k); }

TrainingData training_data(const ExperimentConfig& cfg, const Environment& env, const std::string& data_path) {
    if (data_path.empty()) return make_training_data(env, cfg, cfg.seed);
    return split_training_data(read_episode_csv(data_path, env.tag_height_mm), cfg);
}

// simulate -------------------------------------------------------------------

int run_simulate(const Globals& g, int count, const std::string& env_name, const std::string& trajectory) {
    ExperimentConfig cfg = load_config(g);
    const Environment env = pick_environment(cfg, env_name);
    fs::create_directories(g.out);
    write_config_snapshot(cfg, g.out);
    Json episodes = Json::array();
    std::size_t total = 0, total_nlos = 0;
    for (int k = 0; k < count; ++k) {
        Rng rng(recording_seed(cfg.seed, k));
        const TrajectoryPlan plan = pick_plan(cfg, trajectory, rng);
        const Episode ep = generate_episode(env, plan, cfg.anchor_policy, rng);
        char stem[32];
        std::snprintf(stem, sizeof(stem), "episode_%03d", k);
        write_episode_csv(ep, out_path(g, std::string(stem) + ".csv"));
        write_poses_csv(ep.ground_truth_poses(), out_path(g, std::string(stem) + "_poses.csv"));
        std::size_t nlos = 0;
        for (const auto& m : ep.measurements) nlos += m.ground_truth().los ? 0 : 1;
        total += ep.size();
        total_nlos += nlos;
        episodes.push_back({{"file", std::string(stem) + ".csv"},
                            {"poses_file", std::string(stem) + "_poses.csv"},
                            {"samples", ep.size()},
                            {"nlos_samples", nlos},
                            {"nlos_fraction", ep.size() ? static_cast<double>(nlos) / ep.size() : 0.0}});
    }
    write_json({{"schema_version", 1},
                {"seed", cfg.seed},
                {"preset", env.name},
                {"scale", cfg.scale},
                {"trajectory", trajectory},
                {"samples", total},
                {"nlos_fraction", total ? static_cast<double>(total_nlos) / total : 0.0},
                {"episodes", episodes}},
               out_path(g, "manifest.json"));
    std::printf("wrote %d recording(s), %zu samples, NLOS fraction %.3f\n", count, total,
                total ? static_cast<double>(total_nlos) / total : 0.0);
    return 0;
}

// train-rl -------------------------------------------------------------------

int run_train_rl(const Globals& g, int episodes, const std::string& resume, const std::string& data_path) {
    ExperimentConfig cfg = load_config(g);
    if (episodes > 0) cfg.episodes = episodes;
    const Environment& env = cfg.environment;
    TrainingData data = training_data(cfg, env, data_path);
    fs::create_directories(g.out);
    write_config_snapshot(cfg, g.out);

    Agent agent = resume.empty() ? Agent(resolve_agent_config(cfg, env, data.training.size()), cfg.seed + 1)
                                 : Agent::load(resume);
    const int first = agent.episodes_done();
    const std::string metrics_path = out_path(g, "metrics.csv");
    const bool append = !resume.empty() && fs::exists(metrics_path);
    std::ofstream metrics(metrics_path, append ? std::ios::app : std::ios::trunc);
    if (!metrics) throw IoError("cannot write " + metrics_path);
    if (!append) metrics << metrics_header() << '\n';

    const ValidationScore baseline = score_uncorrected(data);
    std::printf("uncorrected validation MAE %.1f mm (NLOS %.1f mm)\n", baseline.mae_all, baseline.mae_nlos);
    double best = std::numeric_limits<double>::infinity();
    int best_episode = -1;
    ValidationScore last{};
    train_agent(agent, data, cfg, env, first, cfg.episodes - first, [&](const EpisodeMetrics& m, Agent& a) {
        metrics << metrics_row(m) << '\n' << std::flush;
        a.save(out_path(g, "checkpoint_last.bin"));
        if (m.val_mae_mm < best) {
            best = m.val_mae_mm;
            best_episode = m.episode;
            a.save(out_path(g, "checkpoint_best.bin"));
        }
        last = {m.val_mae_mm, m.val_mae_nlos_mm};
        std::printf("episode %d val MAE %.1f mm (NLOS %.1f) epsilon %.3f%s\n", m.episode, m.val_mae_mm,
                    m.val_mae_nlos_mm, m.epsilon, m.target_actor_released ? " released" : "");
        std::fflush(stdout);
    });
    write_json({{"episodes_done", agent.episodes_done()},
                {"uncorrected_val_mae_mm", baseline.mae_all},
                {"uncorrected_val_mae_nlos_mm", baseline.mae_nlos},
                {"final_val_mae_mm", last.mae_all},
                {"final_val_mae_nlos_mm", last.mae_nlos},
                {"best_episode", best_episode},
                {"best_val_mae_mm", best_episode >= 0 ? Json(best) : Json(nullptr)}},
               out_path(g, "summary.json"));
    return 0;
}

// train-supervised -----------------------------------------------------------

nn::OutputHead parse_head(const std::string& s) {
    if (s == "tanh") return nn::OutputHead::TanhScaled;
    if (s == "linear") return nn::OutputHead::Linear;
    throw InvalidArgument("--head must be 'tanh' or 'linear'");
}

int run_train_supervised(const Globals& g, const std::string& head, const std::string& data_path) {
    ExperimentConfig cfg = load_config(g);
    const TrainingData data = training_data(cfg, cfg.environment, data_path);
    fs::create_directories(g.out);
    write_config_snapshot(cfg, g.out);
    const SupervisedModel model = train_supervised_baseline(data, parse_head(head), cfg.supervised, cfg.seed + 2);
    save_model(model.net, out_path(g, "model.bin"));
    std::ofstream curve(out_path(g, "supervised_metrics.csv"));
    curve << "epoch,val_mae_mm\n";
    for (std::size_t e = 0; e < model.val_mae_history.size(); ++e) curve << e << ',' << model.val_mae_history[e] << '\n';
    const ValidationScore baseline = score_uncorrected(data);
    write_json({{"head", head},
                {"best_epoch", model.best_epoch},
                {"best_val_mae_mm", model.best_val_mae},
                {"uncorrected_val_mae_mm", baseline.mae_all}},
               out_path(g, "summary.json"));
    std::printf("%s head: best validation MAE %.1f mm at epoch %d (uncorrected %.1f mm)\n", head.c_str(),
                model.best_val_mae, model.best_epoch, baseline.mae_all);
    return 0;
}

// adapt ----------------------------------------------------------------------

int run_adapt(const Globals& g) {
    ExperimentConfig cfg = load_config(g);
    TrainingData first_data = make_training_data(cfg.environment, cfg, cfg.seed);
    TrainingData second_data = make_training_data(cfg.adapt_environment, cfg, cfg.seed + 1);
    fs::create_directories(g.out);
    write_config_snapshot(cfg, g.out);

    Agent agent(resolve_agent_config(cfg, cfg.environment, first_data.training.size()), cfg.seed + 1);
    std::ofstream metrics(out_path(g, "metrics.csv"));
    metrics << metrics_header() << ",environment\n";
    auto log = [&](const EpisodeMetrics& m, Agent& a) {
        metrics << metrics_row(m) << ',' << m.environment << '\n' << std::flush;
        a.save(out_path(g, "checkpoint_last.bin"));
        std::printf("episode %d [%s] val MAE %.1f mm (NLOS %.1f)\n", m.episode, m.environment.c_str(), m.val_mae_mm,
                    m.val_mae_nlos_mm);
        std::fflush(stdout);
    };
    train_agent(agent, first_data, cfg, cfg.environment, 0, cfg.adapt_switch_episode, log);
    const double before_switch = score_validation(agent, first_data).mae_all;
    agent.reset_for_new_environment();
    train_agent(agent, second_data, cfg, cfg.adapt_environment, cfg.adapt_switch_episode, cfg.adapt_episodes, log);

    // Frozen reference: supervised model fitted once on the first environment.
    const SupervisedModel frozen =
        train_supervised_baseline(first_data, nn::OutputHead::TanhScaled, cfg.supervised, cfg.seed + 2);
    nn::ActorNet frozen_net = frozen.net;
    firewall::Exemption open;
    const double frozen_second =
        evaluate(actor_corrector(frozen_net), second_data.episode, second_data.validation).all.mae_after;
    const double agent_second = score_validation(agent, second_data).mae_all;
    write_json({{"switch_episode", cfg.adapt_switch_episode},
                {"agent_val_mae_before_switch_mm", before_switch},
                {"agent_val_mae_after_adaptation_mm", agent_second},
                {"frozen_supervised_val_mae_mm", frozen_second},
                {"uncorrected_second_env_val_mae_mm", score_uncorrected(second_data).mae_all}},
               out_path(g, "summary.json"));
    std::printf("after adaptation: agent %.1f mm, frozen supervised %.1f mm\n", agent_second, frozen_second);
    return 0;
}

// evaluate -------------------------------------------------------------------

int run_evaluate(const Globals& g, const std::string& checkpoint, const std::string& model_path,
                 const std::string& split, const std::string& trajectory, const std::string& env_name,
                 const std::string& data_path, const std::string& poses_path, bool svg) {
    ExperimentConfig cfg = load_config(g);
    if (!checkpoint.empty() && !model_path.empty()) throw InvalidArgument("--checkpoint and --model are exclusive");
    if (split != "all" && split != "nlos") throw InvalidArgument("--split must be 'all' or 'nlos'");
    const Environment env = pick_environment(cfg, env_name);

    Episode episode;
    std::vector<std::size_t> indices;  // empty: every sample
    if (!data_path.empty()) {
        episode = read_episode_csv(data_path, env.tag_height_mm);
        if (!poses_path.empty()) episode.set_ground_truth_poses(read_poses_csv(poses_path));
    } else if (trajectory == "reference") {
        // The held-out blocks of the training recording.
        TrainingData data = make_training_data(env, cfg, cfg.seed);
        episode = std::move(data.episode);
        indices = std::move(data.validation);
    } else {
        Rng rng(recording_seed(cfg.seed, 1000));
        const TrajectoryPlan plan = pick_plan(cfg, trajectory, rng);
        episode = generate_episode(env, plan, cfg.anchor_policy, rng);
    }

    std::optional<Agent> agent;
    nn::ActorNet model;
    Corrector corrector = zero_corrector();
    EkfConfig ekf = cfg.agent.ekf;
    if (!checkpoint.empty()) {
        agent.emplace(Agent::load(checkpoint));
        ekf = agent->config().ekf;
        corrector = actor_corrector(agent->actor());
    } else if (!model_path.empty()) {
        model = load_model(model_path);
        corrector = actor_corrector(model);
    }

    fs::create_directories(g.out);
    write_config_snapshot(cfg, g.out);
    const EvalReport report =
        evaluate(corrector, episode, indices, split == "nlos" ? Split::NlosOnly : Split::All);
    write_report_json(report, out_path(g, "report.json"));
    write_residuals_csv(report, out_path(g, "residuals.csv"));
    if (svg) write_boxplot_svg(report, out_path(g, "boxplot.svg"));
    if (episode.has_poses()) {
        const auto rows = track_episode(episode, corrector, ekf);
        write_trajectory_csv(rows, out_path(g, "trajectory.csv"));
        if (svg) write_trajectory_svg(rows, env, out_path(g, "trajectory.svg"));
    }
    const EvalSummary& s = split == "nlos" ? report.nlos : report.all;
    std::printf("%s: %zu samples, MAE %.1f -> %.1f mm\n", split.c_str(), s.count, s.mae_before, s.mae_after);
    return 0;
}

// bench ----------------------------------------------------------------------

int run_bench(const Globals& g, int samples) {
    ExperimentConfig cfg = load_config(g);
    TrainingData data = make_training_data(cfg.environment, cfg, cfg.seed);
    if (samples > 0 && static_cast<std::size_t>(samples) < data.episode.size()) {
        data.episode.measurements.resize(static_cast<std::size_t>(samples));
    }
    Agent agent(resolve_agent_config(cfg, cfg.environment, data.episode.size()), cfg.seed + 1);
    const std::vector<bool> all(data.episode.size(), true);
    using Clock = std::chrono::steady_clock;
    auto seconds = [](Clock::time_point a, Clock::time_point b) { return std::chrono::duration<double>(b - a).count(); };
    {
        // Warm-up pass so the timed pass runs with a filled replay memory.
        firewall::Guard guard;
        agent.run_episode(data.episode, all);
    }
    auto t0 = Clock::now();
    EpisodeStats stats;
    {
        firewall::Guard guard;
        stats = agent.run_episode(data.episode, all);
    }
    const double wall = seconds(t0, Clock::now());
    const double duration = static_cast<double>(data.episode.size()) / cfg.plan.sample_rate_hz;
    const double ratio = wall / duration;

    // Isolated costs: one training batch and single-sample inference.
    const int reps = 5;
    double batch_s = 0.0;
    {
        Agent probe = agent;
        t0 = Clock::now();
        for (int i = 0; i < reps; ++i) probe.train_batch();
        batch_s = seconds(t0, Clock::now()) / reps;
    }
    const std::size_t n_inf = std::min<std::size_t>(200, data.episode.size());
    t0 = Clock::now();
    for (std::size_t i = 0; i < n_inf; ++i) agent.correct(std::vector<const PreprocessedCir*>{&data.episode.measurements[i].cir});
    const double infer_ms = 1000.0 * seconds(t0, Clock::now()) / static_cast<double>(n_inf);

    fs::create_directories(g.out);
    write_config_snapshot(cfg, g.out);
    write_json({{"samples", data.episode.size()},
                {"sample_rate_hz", cfg.plan.sample_rate_hz},
                {"recording_duration_s", duration},
                {"wall_time_s", wall},
                {"per_sample_ms", 1000.0 * wall / static_cast<double>(data.episode.size())},
                {"batches", stats.batches},
                {"batch_size", agent.config().batch_size},
                {"batch_train_s", batch_s},
                {"inference_ms_per_sample", infer_ms},
                {"realtime_ratio", ratio},
                {"realtime", ratio < 1.0}},
               out_path(g, "bench.json"));
    std::printf("batch of %d trained in %.4f s; inference %.3f ms/sample\n", agent.config().batch_size, batch_s, infer_ms);
    std::printf("%zu samples at %.0f Hz: %.2f s wall for %.1f s of data, real-time ratio %.3f\n",
                data.episode.size(), cfg.plan.sample_rate_hz, wall, duration, ratio);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"UWB ranging-error correction by self-supervised reinforcement learning"};
    app.require_subcommand(1);
    app.fallthrough();
    Globals g;
    app.add_option("--config", g.config, "experiment config (JSON)")->check(CLI::ExistingFile);
    app.add_option("--seed", g.seed, "simulator seed");
    app.add_option("--out", g.out, "output directory");
    app.add_option("--scale", g.scale, "desk-scale factor in (0, 1]");

    auto* sim = app.add_subcommand("simulate", "write simulated recordings");
    int sim_count = 1;
    std::string sim_env, sim_traj = "reference";
    sim->add_option("--episodes", sim_count, "number of recordings")->check(CLI::PositiveNumber);
    sim->add_option("--env,--environment", sim_env, "preset (env1, env2)");
    sim->add_option("--trajectory", sim_traj)->check(CLI::IsMember({"reference", "random"}));

    auto* rl = app.add_subcommand("train-rl", "train the self-supervised agent");
    int rl_episodes = 0;
    std::string rl_resume, rl_data;
    rl->add_option("--episodes", rl_episodes, "total episodes (default from config)");
    rl->add_option("--resume", rl_resume, "checkpoint to continue from")->check(CLI::ExistingFile);
    rl->add_option("--data", rl_data, "recording CSV instead of simulating")->check(CLI::ExistingFile);

    auto* sup = app.add_subcommand("train-supervised", "train the supervised baseline");
    std::string sup_head = "tanh", sup_data;
    sup->add_option("--head", sup_head)->check(CLI::IsMember({"tanh", "linear"}));
    sup->add_option("--data", sup_data, "recording CSV instead of simulating")->check(CLI::ExistingFile);

    auto* adapt = app.add_subcommand("adapt", "train on one environment, then continue on a changed one");

    auto* ev = app.add_subcommand("evaluate", "score a corrector");
    std::string ev_ckpt, ev_model, ev_split = "all", ev_traj = "reference", ev_env, ev_data, ev_poses;
    bool ev_svg = false;
    ev->add_option("--checkpoint", ev_ckpt, "agent checkpoint")->check(CLI::ExistingFile);
    ev->add_option("--model", ev_model, "supervised model")->check(CLI::ExistingFile);
    ev->add_option("--split", ev_split)->check(CLI::IsMember({"all", "nlos"}));
    ev->add_option("--trajectory", ev_traj)->check(CLI::IsMember({"reference", "random"}));
    ev->add_option("--env,--environment", ev_env, "preset (env1, env2)");
    ev->add_option("--data", ev_data, "recording CSV with ground truth")->check(CLI::ExistingFile);
    ev->add_option("--poses", ev_poses, "poses CSV matching --data")->check(CLI::ExistingFile);
    ev->add_flag("--svg", ev_svg, "also write SVG plots");

    auto* bench = app.add_subcommand("bench", "measure the real-time ratio of online training");
    int bench_samples = 0;
    bench->add_option("--samples", bench_samples, "truncate the recording to this many samples");

    CLI11_PARSE(app, argc, argv);
    try {
        if (*sim) return run_simulate(g, sim_count, sim_env, sim_traj);
        if (*rl) return run_train_rl(g, rl_episodes, rl_resume, rl_data);
        if (*sup) return run_train_supervised(g, sup_head, sup_data);
        if (*adapt) return run_adapt(g);
        if (*ev) return run_evaluate(g, ev_ckpt, ev_model, ev_split, ev_traj, ev_env, ev_data, ev_poses, ev_svg);
        if (*bench) return run_bench(g, bench_samples);
    } catch (const Error& e) {
        std::fprintf(stderr, "error: %s: %s\n", e.kind().c_str(), e.what());
        return 2;
    } catch (const fs::filesystem_error& e) {
        std::fprintf(stderr, "error: IoError: %s\n", e.what());
        return 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: InternalError: %s\n", e.what());
        return 3;
    }
    return 1;
}
