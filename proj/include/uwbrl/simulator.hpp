#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "uwbrl/cir.hpp"
#include "uwbrl/measurement.hpp"
#include "uwbrl/ranging.hpp"

namespace uwbrl {

struct Rect {
    double x_min = 0.0;
    double y_min = 0.0;
    double x_max = 0.0;
    double y_max = 0.0;

    bool contains(const Vec2& p) const {
        return p.x() >= x_min && p.x() <= x_max && p.y() >= y_min && p.y() <= y_max;
    }
};

// True iff the segment a-b passes through the open interior of r. Touching a
// corner or running along an edge does not count.
bool segment_intersects_open_rect(const Vec2& a, const Vec2& b, const Rect& r);

enum class NlosErrorKind { Exponential, Lognormal };

struct NlosErrorModel {
    NlosErrorKind kind = NlosErrorKind::Exponential;
    double mean_mm = 300.0;
    double cap_mm = 1000.0;
    double lognormal_sigma = 0.6;  // shape parameter, lognormal only
};

// Draws a positive NLOS ranging error, capped at model.cap_mm.
double draw_nlos_error(const NlosErrorModel& model, Rng& rng);

// Statistics from which a per-measurement CirSimParams is drawn.
struct ChannelModel {
    double noise_sigma = 1.0;
    double noise_floor_factor = 4.0;  // noise floor = factor * noise_sigma
    int pulse_width_taps = 3;
    double reference_snr = 60.0;  // dominant amplitude / noise_sigma at reference distance
    double reference_distance_mm = 5000.0;
    double path_loss_exponent = 0.8;
    double amplitude_jitter = 0.2;     // lognormal sigma on the dominant amplitude
    double nlos_dominant_gain = 0.35;  // extra attenuation of the dominant NLOS arrival
    double nlos_first_path_gain_min = 0.4;
    double nlos_first_path_gain_max = 0.9;
    double los_multipath_count = 6.0;  // Poisson means
    double nlos_multipath_count = 10.0;
    double los_delay_spread_taps = 4.0;  // mean inter-arrival of later components
    double nlos_delay_spread_taps = 6.0;
    double multipath_decay_taps = 20.0;
};

struct Environment {
    std::string name = "custom";
    Rect bounds{0.0, 0.0, 24000.0, 10000.0};
    std::vector<Anchor> anchors;
    std::vector<Rect> obstacles;
    double tag_height_mm = 300.0;
    NlosErrorModel nlos_error;
    double los_noise_sigma_mm = 50.0;
    ChannelModel channel;
    double radio_range_mm = 0.0;  // 0: every anchor always in range
};

// Throws ConfigError when an invariant is violated.
void validate(const Environment& env);

// "env1": reference warehouse, 23 anchors, 4 racks.
// "env2": same floor six months later; 7 racks, anchors moved by <= 100 mm,
//         heavier NLOS attenuation.
Environment make_environment(std::string_view preset);

struct TrajectoryPlan {
    std::vector<Vec2> waypoints;
    double speed_mm_s = 100.0;
    double sample_rate_hz = 50.0;
};

// Closed rectangular loop in the aisle between the first two racks. scale
// shrinks the loop about its centre (scale 1: 2 m x 1 m, 3001 poses).
TrajectoryPlan reference_plan(double scale = 1.0);

// Random waypoints inside region until the path is at least min_length_mm long.
TrajectoryPlan random_plan(const Rect& region, double min_length_mm, Rng& rng);

// Region used for unpredictable evaluation trajectories in the presets.
Rect reference_aisle();

// Constant-speed interpolation along the polyline at sample_rate; the first
// pose is the first waypoint at t = 0, spacing is exactly 1/sample_rate.
// Throws DegeneratePlan.
std::vector<TagPose> generate_trajectory(const TrajectoryPlan& plan, double tag_height_mm = 0.0);

bool classify_los(const Environment& env, const Anchor& anchor, const Vec2& position);

RangeMeasurement sample_measurement(const Environment& env, const TagPose& pose,
                                    const Anchor& anchor, Rng& rng);

enum class AnchorPolicy { RoundRobin, UniformRandom };

Episode generate_episode(const Environment& env, const TrajectoryPlan& plan, AnchorPolicy policy,
                         Rng& rng);

// Tap-quantization step of the leading edge, in mm.
double tap_range_mm();

}  // namespace uwbrl
