#include "uwbrl/config.hpp"

#include <algorithm>

#include "uwbrl/error.hpp"

namespace uwbrl {

JsonFields::JsonFields(const Json& j, std::string context) : j_(j), context_(std::move(context)) {
    if (!j_.is_object()) fail("expected a JSON object");
}

void JsonFields::fail(const std::string& what) const { throw ConfigError(context_ + ": " + what); }

void JsonFields::finish() const {
    for (const auto& item : j_.items()) {
        if (std::find(seen_.begin(), seen_.end(), item.key()) == seen_.end()) {
            fail("unknown key '" + item.key() + "'");
        }
    }
}

void to_json(Json& j, const Rect& r) { j = Json::array({r.x_min, r.y_min, r.x_max, r.y_max}); }

void from_json(const Json& j, Rect& r) {
    if (!j.is_array() || j.size() != 4) throw ConfigError("rectangle must be [x_min, y_min, x_max, y_max]");
    r = Rect{j[0].get<double>(), j[1].get<double>(), j[2].get<double>(), j[3].get<double>()};
}

void to_json(Json& j, const Anchor& a) { j = Json{{"id", a.id}, {"position_mm", a.position}}; }

void from_json(const Json& j, Anchor& a) {
    JsonFields f(j, "anchor");
    f.get("id", a.id);
    f.get("position_mm", a.position);
    f.finish();
}

void to_json(Json& j, const NlosErrorModel& m) {
    j = Json{{"kind", m.kind == NlosErrorKind::Exponential ? "exponential" : "lognormal"},
             {"mean_mm", m.mean_mm},
             {"cap_mm", m.cap_mm},
             {"lognormal_sigma", m.lognormal_sigma}};
}

void from_json(const Json& j, NlosErrorModel& m) {
    JsonFields f(j, "nlos_error");
    std::string kind = m.kind == NlosErrorKind::Exponential ? "exponential" : "lognormal";
    f.get("kind", kind);
    if (kind == "exponential") {
        m.kind = NlosErrorKind::Exponential;
    } else if (kind == "lognormal") {
        m.kind = NlosErrorKind::Lognormal;
    } else {
        f.fail("kind must be 'exponential' or 'lognormal'");
    }
    f.get("mean_mm", m.mean_mm);
    f.get("cap_mm", m.cap_mm);
    f.get("lognormal_sigma", m.lognormal_sigma);
    f.finish();
}

void to_json(Json& j, const ChannelModel& m) {
    j = Json{{"noise_sigma", m.noise_sigma},
             {"noise_floor_factor", m.noise_floor_factor},
             {"pulse_width_taps", m.pulse_width_taps},
             {"reference_snr", m.reference_snr},
             {"reference_distance_mm", m.reference_distance_mm},
             {"path_loss_exponent", m.path_loss_exponent},
             {"amplitude_jitter", m.amplitude_jitter},
             {"nlos_dominant_gain", m.nlos_dominant_gain},
             {"nlos_first_path_gain_min", m.nlos_first_path_gain_min},
             {"nlos_first_path_gain_max", m.nlos_first_path_gain_max},
             {"los_multipath_count", m.los_multipath_count},
             {"nlos_multipath_count", m.nlos_multipath_count},
             {"los_delay_spread_taps", m.los_delay_spread_taps},
             {"nlos_delay_spread_taps", m.nlos_delay_spread_taps},
             {"multipath_decay_taps", m.multipath_decay_taps}};
}

void from_json(const Json& j, ChannelModel& m) {
    JsonFields f(j, "channel");
    f.get("noise_sigma", m.noise_sigma);
    f.get("noise_floor_factor", m.noise_floor_factor);
    f.get("pulse_width_taps", m.pulse_width_taps);
    f.get("reference_snr", m.reference_snr);
    f.get("reference_distance_mm", m.reference_distance_mm);
    f.get("path_loss_exponent", m.path_loss_exponent);
    f.get("amplitude_jitter", m.amplitude_jitter);
    f.get("nlos_dominant_gain", m.nlos_dominant_gain);
    f.get("nlos_first_path_gain_min", m.nlos_first_path_gain_min);
    f.get("nlos_first_path_gain_max", m.nlos_first_path_gain_max);
    f.get("los_multipath_count", m.los_multipath_count);
    f.get("nlos_multipath_count", m.nlos_multipath_count);
    f.get("los_delay_spread_taps", m.los_delay_spread_taps);
    f.get("nlos_delay_spread_taps", m.nlos_delay_spread_taps);
    f.get("multipath_decay_taps", m.multipath_decay_taps);
    f.finish();
}

void to_json(Json& j, const Environment& e) {
    j = Json{{"name", e.name},
             {"bounds_mm", e.bounds},
             {"anchors", e.anchors},
             {"obstacles", e.obstacles},
             {"tag_height_mm", e.tag_height_mm},
             {"nlos_error", e.nlos_error},
             {"los_noise_sigma_mm", e.los_noise_sigma_mm},
             {"channel", e.channel},
             {"radio_range_mm", e.radio_range_mm}};
}

void from_json(const Json& j, Environment& e) {
    JsonFields f(j, "environment");
    // A preset name seeds every field, explicit keys override it.
    if (j.contains("preset")) {
        std::string preset;
        f.get("preset", preset);
        e = make_environment(preset);
    }
    f.get("name", e.name);
    f.get("bounds_mm", e.bounds);
    f.get("anchors", e.anchors);
    f.get("obstacles", e.obstacles);
    f.get("tag_height_mm", e.tag_height_mm);
    f.get("nlos_error", e.nlos_error);
    f.get("los_noise_sigma_mm", e.los_noise_sigma_mm);
    f.get("channel", e.channel);
    f.get("radio_range_mm", e.radio_range_mm);
    f.finish();
}

void to_json(Json& j, const TrajectoryPlan& p) {
    j = Json{{"waypoints_mm", p.waypoints}, {"speed_mm_s", p.speed_mm_s}, {"sample_rate_hz", p.sample_rate_hz}};
}

void from_json(const Json& j, TrajectoryPlan& p) {
    JsonFields f(j, "trajectory");
    f.get("waypoints_mm", p.waypoints);
    f.get("speed_mm_s", p.speed_mm_s);
    f.get("sample_rate_hz", p.sample_rate_hz);
    f.finish();
}

void to_json(Json& j, const EkfConfig& c) {
    j = Json{{"process_noise_accel_sigma", c.process_noise_accel_sigma},
             {"measurement_noise_sigma", c.measurement_noise_sigma},
             {"initial_position_mm", c.initial_position},
             {"initial_covariance_scale", c.initial_covariance_scale},
             {"initial_velocity_sigma", c.initial_velocity_sigma},
             {"reset_each_episode", c.reset_each_episode}};
}

void from_json(const Json& j, EkfConfig& c) {
    JsonFields f(j, "ekf");
    f.get("process_noise_accel_sigma", c.process_noise_accel_sigma);
    f.get("measurement_noise_sigma", c.measurement_noise_sigma);
    f.get("initial_position_mm", c.initial_position);
    f.get("initial_covariance_scale", c.initial_covariance_scale);
    f.get("initial_velocity_sigma", c.initial_velocity_sigma);
    f.get("reset_each_episode", c.reset_each_episode);
    f.finish();
}

namespace nn {

void to_json(Json& j, const NetworkShape& s) {
    j = Json{{"input_length", s.input_length},   {"conv_channels", s.conv_channels},
             {"conv_kernels", s.conv_kernels},   {"dense_widths", s.dense_widths},
             {"dropout", s.dropout},             {"critic_latent", s.critic_latent},
             {"critic_head", s.critic_head},     {"critic_action_unit_mm", s.critic_action_unit_mm}};
}

void from_json(const Json& j, NetworkShape& s) {
    JsonFields f(j, "network");
    f.get("input_length", s.input_length);
    f.get("conv_channels", s.conv_channels);
    f.get("conv_kernels", s.conv_kernels);
    f.get("dense_widths", s.dense_widths);
    f.get("dropout", s.dropout);
    f.get("critic_latent", s.critic_latent);
    f.get("critic_head", s.critic_head);
    f.get("critic_action_unit_mm", s.critic_action_unit_mm);
    f.finish();
}

}  // namespace nn

void to_json(Json& j, const AgentConfig& c) {
    j = Json{{"gamma", c.gamma},
             {"tau_actor", c.tau_actor},
             {"tau_critic", c.tau_critic},
             {"lr_actor", c.lr_actor},
             {"lr_critic", c.lr_critic},
             {"batch_size", c.batch_size},
             {"scheduler_patience", c.scheduler_patience},
             {"lr_reduction_factor", c.lr_reduction_factor},
             {"scheduler_rel_threshold", c.scheduler_rel_threshold},
             {"epsilon_min", c.epsilon_min},
             {"epsilon_max", c.epsilon_max},
             {"epsilon_decay", c.epsilon_decay},
             {"replay_capacity", c.replay_capacity},
             {"train_every", c.train_every},
             {"target_update_every", c.target_update_every},
             {"smoothing_length", c.smoothing_length},
             {"reward_floor_mm", c.reward_floor_mm},
             {"network", c.network},
             {"ekf", c.ekf}};
}

void from_json(const Json& j, AgentConfig& c) {
    JsonFields f(j, "agent");
    f.get("gamma", c.gamma);
    f.get("tau_actor", c.tau_actor);
    f.get("tau_critic", c.tau_critic);
    f.get("lr_actor", c.lr_actor);
    f.get("lr_critic", c.lr_critic);
    f.get("batch_size", c.batch_size);
    f.get("scheduler_patience", c.scheduler_patience);
    f.get("lr_reduction_factor", c.lr_reduction_factor);
    f.get("scheduler_rel_threshold", c.scheduler_rel_threshold);
    f.get("epsilon_min", c.epsilon_min);
    f.get("epsilon_max", c.epsilon_max);
    f.get("epsilon_decay", c.epsilon_decay);
    f.get("replay_capacity", c.replay_capacity);
    f.get("train_every", c.train_every);
    f.get("target_update_every", c.target_update_every);
    f.get("smoothing_length", c.smoothing_length);
    f.get("reward_floor_mm", c.reward_floor_mm);
    f.get("network", c.network);
    f.get("ekf", c.ekf);
    f.finish();
}

}  // namespace uwbrl
