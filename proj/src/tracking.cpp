#include "uwbrl/tracking.hpp"

#include <algorithm>
#include <cmath>

#include "uwbrl/error.hpp"

namespace uwbrl {

namespace {
constexpr double kMinGeometryMm = 1.0;
}

void validate(const EkfConfig& cfg) {
    if (!(cfg.process_noise_accel_sigma > 0.0) || !(cfg.measurement_noise_sigma > 0.0) ||
        !(cfg.initial_covariance_scale > 0.0) || !(cfg.initial_velocity_sigma > 0.0)) {
        throw ConfigError("EKF sigmas and covariance scale must be positive");
    }
    if (!cfg.initial_position.allFinite()) throw ConfigError("EKF initial position not finite");
}

EkfState ekf_initial_state(const EkfConfig& cfg, double timestamp) {
    EkfState s;
    s.mean << cfg.initial_position, 0.0, 0.0;
    const double v2 = cfg.initial_velocity_sigma * cfg.initial_velocity_sigma;
    s.covariance = Eigen::Vector4d(cfg.initial_covariance_scale, cfg.initial_covariance_scale, v2, v2).asDiagonal();
    s.last_timestamp = timestamp;
    return s;
}

EkfState ekf_predict(const EkfState& state, double dt, const EkfConfig& cfg) {
    if (!(dt > 0.0)) throw InvalidArgument("EKF prediction step needs dt > 0");
    Eigen::Matrix4d f = Eigen::Matrix4d::Identity();
    f(0, 2) = dt;
    f(1, 3) = dt;
    const double q = cfg.process_noise_accel_sigma * cfg.process_noise_accel_sigma;
    const double dt2 = dt * dt;
    const double dt3 = dt2 * dt;
    const double dt4 = dt2 * dt2;
    Eigen::Matrix4d process = Eigen::Matrix4d::Zero();
    for (int axis = 0; axis < 2; ++axis) {
        process(axis, axis) = q * dt4 / 4.0;
        process(axis, axis + 2) = q * dt3 / 2.0;
        process(axis + 2, axis) = q * dt3 / 2.0;
        process(axis + 2, axis + 2) = q * dt2;
    }
    EkfState out;
    out.mean = f * state.mean;
    out.covariance = f * state.covariance * f.transpose() + process;
    out.covariance = 0.5 * (out.covariance + out.covariance.transpose()).eval();
    out.last_timestamp = state.last_timestamp + dt;
    return out;
}

EkfUpdateResult ekf_update(const EkfState& state, double range_mm, const Anchor& anchor,
                           double tag_height_mm, const EkfConfig& cfg) {
    if (!(range_mm > 0.0)) throw InvalidArgument("range must be positive");
    const Vec3 tag(state.mean(0), state.mean(1), tag_height_mm);
    const Vec3 diff = tag - anchor.position;
    const double predicted = diff.norm();
    if (predicted < kMinGeometryMm || diff.head<2>().norm() < kMinGeometryMm) {
        throw SingularGeometry("tag sits on the anchor's vertical axis; range Jacobian vanishes");
    }
    Eigen::RowVector4d h = Eigen::RowVector4d::Zero();
    h(0) = diff.x() / predicted;
    h(1) = diff.y() / predicted;

    const double r = cfg.measurement_noise_sigma * cfg.measurement_noise_sigma;
    const Eigen::Vector4d ph = state.covariance * h.transpose();
    const double s = h.dot(ph) + r;
    const Eigen::Vector4d gain = ph / s;
    const double innovation = range_mm - predicted;

    EkfUpdateResult out;
    out.state.mean = state.mean + gain * innovation;
    const Eigen::Matrix4d ikh = Eigen::Matrix4d::Identity() - gain * h;
    out.state.covariance = ikh * state.covariance * ikh.transpose() + gain * r * gain.transpose();
    out.state.covariance = 0.5 * (out.state.covariance + out.state.covariance.transpose()).eval();
    out.state.last_timestamp = state.last_timestamp;
    out.position = out.state.position();
    return out;
}

Tracker::Tracker(EkfConfig cfg, double tag_height_mm) : cfg_(std::move(cfg)), tag_height_mm_(tag_height_mm) {
    validate(cfg_);
    reset();
}

void Tracker::reset() {
    state_ = ekf_initial_state(cfg_);
    started_ = false;
}

Vec2 Tracker::step(double timestamp, double range_mm, const Anchor& anchor) {
    if (!started_) {
        state_.last_timestamp = timestamp;
        started_ = true;
    } else if (timestamp > state_.last_timestamp) {
        state_ = ekf_predict(state_, timestamp - state_.last_timestamp, cfg_);
        state_.last_timestamp = timestamp;
    }
    try {
        state_ = ekf_update(state_, range_mm, anchor, tag_height_mm_, cfg_).state;
    } catch (const SingularGeometry&) {
        ++skipped_;
    }
    return state_.position();
}

SmoothingBuffer::SmoothingBuffer(std::size_t capacity) : capacity_(capacity) {
    if (capacity_ == 0 || capacity_ % 2 == 0) throw InvalidArgument("smoothing buffer length must be odd");
}

std::optional<SmoothedSample> SmoothingBuffer::push(BufferEntry entry) {
    if (entries_.size() == capacity_) entries_.pop_front();
    entries_.push_back(std::move(entry));
    if (entries_.size() < capacity_) return std::nullopt;
    Vec2 sum = Vec2::Zero();
    for (const auto& e : entries_) sum += e.ekf_position;
    SmoothedSample out;
    out.average_position = sum / static_cast<double>(capacity_);
    out.middle = entries_[(capacity_ - 1) / 2];
    return out;
}

double position_to_range(const Vec2& position, const Anchor& anchor, double tag_height_mm) {
    return euclidean_range(anchor.position, Vec3(position.x(), position.y(), tag_height_mm));
}

double compute_reward(double corrected_range_mm, double smoothed_range_mm, double floor_mm) {
    return 1.0 / std::max(std::abs(corrected_range_mm - smoothed_range_mm), floor_mm);
}

}  // namespace uwbrl
