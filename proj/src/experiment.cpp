#include "uwbrl/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "uwbrl/error.hpp"

namespace uwbrl {

namespace {

int scaled_count(int full, double scale) { return std::max(1, static_cast<int>(std::lround(full * scale))); }

std::string policy_name(AnchorPolicy p) { return p == AnchorPolicy::RoundRobin ? "round_robin" : "uniform_random"; }

AnchorPolicy parse_policy(const std::string& s) {
    if (s == "round_robin") return AnchorPolicy::RoundRobin;
    if (s == "uniform_random") return AnchorPolicy::UniformRandom;
    throw ConfigError("anchor_policy must be 'round_robin' or 'uniform_random'");
}

Json supervised_json(const SupervisedConfig& c) {
    return Json{{"lr", c.lr},
                {"batch_size", c.batch_size},
                {"max_epochs", c.max_epochs},
                {"patience", c.patience},
                {"network", c.network}};
}

void apply_supervised(const Json& j, SupervisedConfig& c) {
    JsonFields f(j, "supervised");
    f.get("lr", c.lr);
    f.get("batch_size", c.batch_size);
    f.get("max_epochs", c.max_epochs);
    f.get("patience", c.patience);
    f.get("network", c.network);
    f.finish();
}

void apply_environment(const Json& j, Environment& env, const char* what) {
    try {
        if (j.is_string()) {
            env = make_environment(j.get<std::string>());
        } else {
            j.get_to(env);
        }
    } catch (const ConfigError&) {
        throw;
    } catch (const std::exception& e) {
        throw ConfigError(std::string(what) + ": " + e.what());
    }
    validate(env);
}

}  // namespace

ExperimentConfig default_experiment(double scale) {
    if (!(scale > 0.0 && scale <= 1.0)) throw ConfigError("scale must lie in (0, 1]");
    ExperimentConfig cfg;
    cfg.scale = scale;
    cfg.plan = reference_plan(scale);
    cfg.episodes = scaled_count(1000, scale);
    cfg.epsilon_decay_episodes = 300.0 * scale;
    cfg.adapt_switch_episode = scaled_count(500, scale);
    cfg.adapt_episodes = scaled_count(500, scale);
    cfg.random_min_length_mm = 8000.0 * scale;
    cfg.agent.network = nn::NetworkShape::scaled(scale);
    cfg.agent.scheduler_patience = scaled_count(150, scale);
    cfg.supervised.network = nn::NetworkShape::scaled(scale);
    return cfg;
}

Json to_json(const ExperimentConfig& cfg) {
    return Json{{"schema_version", kConfigSchemaVersion},
                {"run_id", cfg.run_id},
                {"scale", cfg.scale},
                {"seed", cfg.seed},
                {"environment", cfg.environment},
                {"adapt_environment", cfg.adapt_environment},
                {"trajectory", cfg.plan},
                {"anchor_policy", policy_name(cfg.anchor_policy)},
                {"episodes", cfg.episodes},
                {"live_simulation", cfg.live_simulation},
                {"validation_block", cfg.validation_block},
                {"validation_every", cfg.validation_every},
                {"epsilon_decay_episodes", cfg.epsilon_decay_episodes},
                {"adapt_switch_episode", cfg.adapt_switch_episode},
                {"adapt_episodes", cfg.adapt_episodes},
                {"random_min_length_mm", cfg.random_min_length_mm},
                {"agent", cfg.agent},
                {"supervised", supervised_json(cfg.supervised)}};
}

void apply_json(const Json& j, ExperimentConfig& cfg) {
    JsonFields f(j, "config");
    int version = kConfigSchemaVersion;
    f.get("schema_version", version);
    if (version != kConfigSchemaVersion) {
        throw ConfigError("unsupported config schema_version " + std::to_string(version));
    }
    double scale = cfg.scale;
    f.get("scale", scale);  // consumed by load_experiment_file
    f.get("run_id", cfg.run_id);
    f.get("seed", cfg.seed);
    if (j.contains("environment")) {
        Json dummy;
        f.get("environment", dummy);
        apply_environment(j.at("environment"), cfg.environment, "environment");
    }
    if (j.contains("adapt_environment")) {
        Json dummy;
        f.get("adapt_environment", dummy);
        apply_environment(j.at("adapt_environment"), cfg.adapt_environment, "adapt_environment");
    }
    if (j.contains("trajectory")) {
        Json t;
        f.get("trajectory", t);
        if (t.is_string()) {
            if (t.get<std::string>() != "reference") throw ConfigError("trajectory must be 'reference' or an object");
            cfg.plan = reference_plan(cfg.scale);
        } else {
            f.get("trajectory", cfg.plan);
        }
    }
    std::string policy = policy_name(cfg.anchor_policy);
    f.get("anchor_policy", policy);
    cfg.anchor_policy = parse_policy(policy);
    f.get("episodes", cfg.episodes);
    f.get("live_simulation", cfg.live_simulation);
    f.get("validation_block", cfg.validation_block);
    f.get("validation_every", cfg.validation_every);
    f.get("epsilon_decay_episodes", cfg.epsilon_decay_episodes);
    f.get("adapt_switch_episode", cfg.adapt_switch_episode);
    f.get("adapt_episodes", cfg.adapt_episodes);
    f.get("random_min_length_mm", cfg.random_min_length_mm);
    f.get("agent", cfg.agent);
    if (j.contains("supervised")) {
        Json s;
        f.get("supervised", s);
        apply_supervised(s, cfg.supervised);
    }
    f.finish();
    if (cfg.episodes < 1 || cfg.adapt_switch_episode < 0 || cfg.adapt_episodes < 0) {
        throw ConfigError("episode counts must be positive");
    }
    if (cfg.validation_block < 1 || cfg.validation_every < 2) {
        throw ConfigError("validation_block >= 1 and validation_every >= 2 required");
    }
    validate(cfg.agent);
    validate(cfg.supervised);
}

ExperimentConfig load_experiment_file(const std::string& path, double scale_override) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config " + path);
    Json j;
    try {
        j = Json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(path + ": " + e.what());
    }
    if (!j.is_object()) throw ConfigError(path + ": top level must be an object");
    double scale = 1.0;
    if (j.contains("scale")) {
        if (!j.at("scale").is_number()) throw ConfigError(path + ": scale must be a number");
        scale = j.at("scale").get<double>();
    }
    if (scale_override > 0.0) scale = scale_override;
    ExperimentConfig cfg = default_experiment(scale);
    apply_json(j, cfg);
    cfg.scale = scale;
    return cfg;
}

void write_config_snapshot(const ExperimentConfig& cfg, const std::string& dir) {
    std::filesystem::create_directories(dir);
    const std::string path = (std::filesystem::path(dir) / "config.json").string();
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path);
    out << to_json(cfg).dump(2) << '\n';
}

std::vector<bool> training_mask(std::size_t n, int block, int every) {
    if (block < 1 || every < 2) throw InvalidArgument("split needs block >= 1 and every >= 2");
    std::vector<bool> mask(n);
    for (std::size_t i = 0; i < n; ++i) {
        mask[i] = (i / static_cast<std::size_t>(block)) % static_cast<std::size_t>(every) !=
                  static_cast<std::size_t>(every - 1);
    }
    return mask;
}

std::vector<std::size_t> indices_where(const std::vector<bool>& mask, bool value) {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < mask.size(); ++i) {
        if (mask[i] == value) out.push_back(i);
    }
    return out;
}

TrainingData make_training_data(const Environment& env, const ExperimentConfig& cfg, std::uint64_t seed) {
    Rng rng(seed);
    return split_training_data(generate_episode(env, cfg.plan, cfg.anchor_policy, rng), cfg);
}

TrainingData split_training_data(Episode episode, const ExperimentConfig& cfg) {
    TrainingData d;
    d.episode = std::move(episode);
    d.trainable = training_mask(d.episode.size(), cfg.validation_block, cfg.validation_every);
    d.validation = indices_where(d.trainable, false);
    d.training = indices_where(d.trainable, true);
    return d;
}

AgentConfig resolve_agent_config(const ExperimentConfig& cfg, const Environment& env,
                                 std::size_t trainable_per_episode) {
    AgentConfig a = cfg.agent;
    if (cfg.epsilon_decay_episodes > 0.0) {
        a.epsilon_decay = epsilon_decay_for(cfg.epsilon_decay_episodes * static_cast<double>(trainable_per_episode), a);
    }
    (void)env;
    validate(a);
    return a;
}

ValidationScore score_validation(Agent& agent, const TrainingData& data) {
    firewall::Exemption open;
    const EvalReport r = evaluate(actor_corrector(agent.actor()), data.episode, data.validation);
    return {r.all.mae_after, r.nlos.count > 0 ? r.nlos.mae_after : 0.0};
}

ValidationScore score_uncorrected(const TrainingData& data) {
    firewall::Exemption open;
    const EvalReport r = evaluate(zero_corrector(), data.episode, data.validation);
    return {r.all.mae_after, r.nlos.count > 0 ? r.nlos.mae_after : 0.0};
}

void train_agent(Agent& agent, TrainingData& data, const ExperimentConfig& cfg, const Environment& env,
                 int first_episode, int count, const EpisodeCallback& on_episode) {
    for (int e = first_episode; e < first_episode + count; ++e) {
        if (cfg.live_simulation) {
            Rng rng(cfg.seed ^ (0x9e3779b97f4a7c15ULL * static_cast<std::uint64_t>(e + 1)));
            data.episode = generate_episode(env, cfg.plan, cfg.anchor_policy, rng);
        }
        EpisodeStats stats;
        {
            firewall::Guard guard;
            stats = agent.run_episode(data.episode, data.trainable);
        }
        const ValidationScore score = score_validation(agent, data);
        EpisodeMetrics m;
        m.episode = e;
        m.train_reward_mean = stats.train_reward_mean;
        m.val_mae_mm = score.mae_all;
        m.val_mae_nlos_mm = score.mae_nlos;
        m.epsilon = stats.epsilon;
        m.lr_actor = stats.lr_actor;
        m.lr_critic = stats.lr_critic;
        m.target_actor_released = stats.target_actor_released;
        m.environment = env.name;
        if (on_episode) on_episode(m, agent);
    }
}

std::string metrics_header() {
    return "episode,train_reward_mean,val_mae_mm,val_mae_nlos_mm,epsilon,lr_actor,lr_critic,target_actor_released";
}

std::string metrics_row(const EpisodeMetrics& m) {
    char buf[256];
    std::snprintf(buf, sizeof(buf), "%d,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%d", m.episode, m.train_reward_mean,
                  m.val_mae_mm, m.val_mae_nlos_mm, m.epsilon, m.lr_actor, m.lr_critic,
                  m.target_actor_released ? 1 : 0);
    return buf;
}

SupervisedModel train_supervised_baseline(const TrainingData& data, nn::OutputHead head,
                                          const SupervisedConfig& cfg, std::uint64_t seed) {
    return train_supervised(labeled_samples(data.episode, data.training),
                            labeled_samples(data.episode, data.validation), head, cfg, seed);
}

std::vector<TrajectoryRow> track_episode(const Episode& episode, const Corrector& corrector, const EkfConfig& ekf) {
    const auto& poses = episode.ground_truth_poses();
    if (poses.size() != episode.size()) throw InvalidArgument("poses do not match the measurements");
    std::vector<const PreprocessedCir*> cirs;
    for (const auto& m : episode.measurements) cirs.push_back(&m.cir);
    nn::Vector corrections(static_cast<Eigen::Index>(cirs.size()));
    constexpr std::size_t kChunk = 256;
    for (std::size_t start = 0; start < cirs.size(); start += kChunk) {
        const std::size_t n = std::min(kChunk, cirs.size() - start);
        std::vector<const PreprocessedCir*> part(cirs.begin() + static_cast<std::ptrdiff_t>(start),
                                                 cirs.begin() + static_cast<std::ptrdiff_t>(start + n));
        corrections.segment(static_cast<Eigen::Index>(start), static_cast<Eigen::Index>(n)) =
            corrector(nn::stack_states(part));
    }
    Tracker raw(ekf, episode.tag_height_mm);
    Tracker fixed(ekf, episode.tag_height_mm);
    std::vector<TrajectoryRow> rows;
    rows.reserve(episode.size());
    for (std::size_t i = 0; i < episode.size(); ++i) {
        const RangeMeasurement& m = episode.measurements[i];
        const Anchor& a = episode.anchor(m.anchor_id);
        TrajectoryRow row;
        row.timestamp = m.timestamp;
        row.truth = poses[i].position.head<2>();
        row.uncorrected = raw.step(m.timestamp, m.measured_range_mm, a);
        row.corrected =
            fixed.step(m.timestamp, std::max(m.measured_range_mm - corrections(static_cast<Eigen::Index>(i)), 1.0), a);
        rows.push_back(row);
    }
    return rows;
}

void write_trajectory_csv(const std::vector<TrajectoryRow>& rows, const std::string& path) {
    std::FILE* f = std::fopen(path.c_str(), "w");
    if (f == nullptr) throw IoError("cannot write " + path);
    std::fprintf(f, "timestamp_s,truth_x_mm,truth_y_mm,ekf_uncorrected_x_mm,ekf_uncorrected_y_mm,"
                    "ekf_corrected_x_mm,ekf_corrected_y_mm\n");
    for (const auto& r : rows) {
        std::fprintf(f, "%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g\n", r.timestamp, r.truth.x(), r.truth.y(),
                     r.uncorrected.x(), r.uncorrected.y(), r.corrected.x(), r.corrected.y());
    }
    if (std::fclose(f) != 0) throw IoError("failed writing " + path);
}

namespace {

void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path);
    out << text;
}

}  // namespace

void write_trajectory_svg(const std::vector<TrajectoryRow>& rows, const Environment& env, const std::string& path) {
    // Zoom on the tracked area with a 1 m margin; y axis points up.
    double x0 = env.bounds.x_max, y0 = env.bounds.y_max, x1 = env.bounds.x_min, y1 = env.bounds.y_min;
    for (const auto& r : rows) {
        for (const Vec2& p : {r.truth, r.uncorrected, r.corrected}) {
            x0 = std::min(x0, p.x());
            y0 = std::min(y0, p.y());
            x1 = std::max(x1, p.x());
            y1 = std::max(y1, p.y());
        }
    }
    x0 -= 1000.0;
    y0 -= 1000.0;
    x1 += 1000.0;
    y1 += 1000.0;
    const double width = 800.0;
    const double k = width / (x1 - x0);
    const double height = (y1 - y0) * k;
    auto px = [&](double x) { return (x - x0) * k; };
    auto py = [&](double y) { return height - (y - y0) * k; };
    std::ostringstream s;
    s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height << "\">\n";
    s << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    for (const Rect& o : env.obstacles) {
        const double ox0 = std::max(o.x_min, x0), ox1 = std::min(o.x_max, x1);
        const double oy0 = std::max(o.y_min, y0), oy1 = std::min(o.y_max, y1);
        if (ox1 <= ox0 || oy1 <= oy0) continue;
        s << "<rect x=\"" << px(ox0) << "\" y=\"" << py(oy1) << "\" width=\"" << (ox1 - ox0) * k << "\" height=\""
          << (oy1 - oy0) * k << "\" fill=\"#ccc\"/>\n";
    }
    auto polyline = [&](auto get, const char* colour) {
        s << "<polyline fill=\"none\" stroke=\"" << colour << "\" stroke-width=\"1\" points=\"";
        for (const auto& r : rows) s << px(get(r).x()) << ',' << py(get(r).y()) << ' ';
        s << "\"/>\n";
    };
    polyline([](const TrajectoryRow& r) { return r.uncorrected; }, "#d62728");
    polyline([](const TrajectoryRow& r) { return r.corrected; }, "#1f77b4");
    polyline([](const TrajectoryRow& r) { return r.truth; }, "black");
    s << "<text x=\"10\" y=\"20\" font-size=\"14\">black: truth, red: EKF uncorrected, blue: EKF corrected</text>\n";
    s << "</svg>\n";
    write_text(path, s.str());
}

void write_boxplot_svg(const EvalReport& report, const std::string& path) {
    struct Box {
        std::string label;
        const BoxplotStats* stats;
    };
    std::vector<Box> boxes{{"all before", &report.all.box_before}, {"all after", &report.all.box_after}};
    if (report.nlos.count > 0) {
        boxes.push_back({"nlos before", &report.nlos.box_before});
        boxes.push_back({"nlos after", &report.nlos.box_after});
    }
    double lo = 0.0, hi = 0.0;
    for (const auto& b : boxes) {
        lo = std::min(lo, b.stats->whisker_low);
        hi = std::max(hi, b.stats->whisker_high);
    }
    lo -= 50.0;
    hi += 50.0;
    const double height = 400.0, width = 140.0 * static_cast<double>(boxes.size()) + 60.0;
    auto py = [&](double v) { return 20.0 + (hi - v) / (hi - lo) * (height - 60.0); };
    std::ostringstream s;
    s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height << "\">\n";
    s << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    s << "<line x1=\"40\" x2=\"" << width - 10 << "\" y1=\"" << py(0.0) << "\" y2=\"" << py(0.0)
      << "\" stroke=\"#999\" stroke-dasharray=\"4\"/>\n";
    for (std::size_t i = 0; i < boxes.size(); ++i) {
        const BoxplotStats& b = *boxes[i].stats;
        const double cx = 100.0 + 140.0 * static_cast<double>(i);
        s << "<line x1=\"" << cx << "\" x2=\"" << cx << "\" y1=\"" << py(b.whisker_high) << "\" y2=\""
          << py(b.whisker_low) << "\" stroke=\"black\"/>\n";
        s << "<rect x=\"" << cx - 30 << "\" y=\"" << py(b.q3) << "\" width=\"60\" height=\"" << py(b.q1) - py(b.q3)
          << "\" fill=\"#9ecae1\" stroke=\"black\"/>\n";
        s << "<line x1=\"" << cx - 30 << "\" x2=\"" << cx + 30 << "\" y1=\"" << py(b.median) << "\" y2=\""
          << py(b.median) << "\" stroke=\"black\" stroke-width=\"2\"/>\n";
        s << "<text x=\"" << cx << "\" y=\"" << height - 15 << "\" font-size=\"12\" text-anchor=\"middle\">"
          << boxes[i].label << "</text>\n";
    }
    s << "<text x=\"5\" y=\"15\" font-size=\"12\">residual (mm), whiskers 1.5 IQR</text>\n";
    s << "</svg>\n";
    write_text(path, s.str());
}

}  // namespace uwbrl
