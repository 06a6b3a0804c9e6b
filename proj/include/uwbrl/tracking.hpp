#pragma once

#include <cstddef>
#include <deque>
#include <optional>

#include <Eigen/Core>

#include "uwbrl/cir.hpp"
#include "uwbrl/ranging.hpp"

namespace uwbrl {

struct EkfConfig {
    double process_noise_accel_sigma = 200.0;  // mm/s^2
    double measurement_noise_sigma = 150.0;    // mm
    Vec2 initial_position = Vec2(12000.0, 5000.0);
    double initial_covariance_scale = 1.0e6;  // mm^2 on each position axis
    double initial_velocity_sigma = 200.0;    // mm/s
    bool reset_each_episode = true;
};

void validate(const EkfConfig& cfg);

// Planar constant-velocity state (x, y, vx, vy).
struct EkfState {
    Eigen::Vector4d mean = Eigen::Vector4d::Zero();
    Eigen::Matrix4d covariance = Eigen::Matrix4d::Identity();
    double last_timestamp = 0.0;

    Vec2 position() const { return mean.head<2>(); }
};

EkfState ekf_initial_state(const EkfConfig& cfg, double timestamp = 0.0);

// Constant-velocity transition with white acceleration noise. dt must be > 0.
EkfState ekf_predict(const EkfState& state, double dt, const EkfConfig& cfg);

struct EkfUpdateResult {
    EkfState state;
    Vec2 position;
};

// Range update with h(x) = |(x, y, tag_height) - anchor|. Throws
// SingularGeometry when the tag sits (horizontally) on the anchor, where the
// planar Jacobian vanishes.
EkfUpdateResult ekf_update(const EkfState& state, double range_mm, const Anchor& anchor,
                           double tag_height_mm, const EkfConfig& cfg);

// Sequential predict/update driver for one trajectory.
class Tracker {
public:
    Tracker(EkfConfig cfg, double tag_height_mm);

    void reset();
    // Returns the posterior planar position after consuming the range.
    Vec2 step(double timestamp, double range_mm, const Anchor& anchor);

    const EkfState& state() const { return state_; }
    void set_state(const EkfState& s, bool started) {
        state_ = s;
        started_ = started;
    }
    bool started() const { return started_; }
    std::size_t skipped_updates() const { return skipped_; }

private:
    EkfConfig cfg_;
    double tag_height_mm_;
    EkfState state_;
    bool started_ = false;
    std::size_t skipped_ = 0;
};

struct BufferEntry {
    Vec2 ekf_position = Vec2::Zero();
    double corrected_range_mm = 0.0;  // measured - executed correction
    PreprocessedCir cir;
    double executed_correction_mm = 0.0;
    int anchor_id = 0;
    std::size_t sample_index = 0;
    bool trainable = true;
};

struct SmoothedSample {
    Vec2 average_position = Vec2::Zero();
    BufferEntry middle;
};

// Odd-length FIFO window; once full, every push yields the window mean bound
// to the middle entry.
class SmoothingBuffer {
public:
    explicit SmoothingBuffer(std::size_t capacity = 31);

    std::optional<SmoothedSample> push(BufferEntry entry);
    void clear() { entries_.clear(); }

    std::size_t size() const { return entries_.size(); }
    std::size_t capacity() const { return capacity_; }
    bool full() const { return entries_.size() == capacity_; }

private:
    std::size_t capacity_;
    std::deque<BufferEntry> entries_;
};

double position_to_range(const Vec2& position, const Anchor& anchor, double tag_height_mm);

inline constexpr double kDefaultRewardFloorMm = 2.0;

// R = 1 / max(|corrected - smoothed|, floor).
double compute_reward(double corrected_range_mm, double smoothed_range_mm,
                      double floor_mm = kDefaultRewardFloorMm);

}  // namespace uwbrl
