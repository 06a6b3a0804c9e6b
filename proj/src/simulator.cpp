#include "uwbrl/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <set>

#include "uwbrl/error.hpp"

namespace uwbrl {

namespace {

constexpr int kMaxMeasurementAttempts = 16;

Rect shrink_about_centre(const Rect& r, double scale) {
    const double cx = 0.5 * (r.x_min + r.x_max);
    const double cy = 0.5 * (r.y_min + r.y_max);
    const double hx = 0.5 * (r.x_max - r.x_min) * scale;
    const double hy = 0.5 * (r.y_max - r.y_min) * scale;
    return {cx - hx, cy - hy, cx + hx, cy + hy};
}

std::vector<Anchor> warehouse_anchors() {
    constexpr double z = 2800.0;
    std::vector<Vec2> xy;
    for (double x : {300.0, 4000.0, 8000.0, 12000.0, 16000.0, 20000.0, 23700.0}) {
        xy.emplace_back(x, 300.0);
        xy.emplace_back(x, 9700.0);
    }
    xy.emplace_back(300.0, 5000.0);
    xy.emplace_back(23700.0, 5000.0);
    xy.emplace_back(4000.0, 4000.0);
    xy.emplace_back(20000.0, 4000.0);
    xy.emplace_back(12000.0, 8000.0);
    xy.emplace_back(12000.0, 1000.0);
    xy.emplace_back(6000.0, 7500.0);
    xy.emplace_back(18000.0, 7500.0);
    xy.emplace_back(17000.0, 4000.0);
    std::vector<Anchor> anchors;
    for (std::size_t i = 0; i < xy.size(); ++i) {
        anchors.push_back({static_cast<int>(i), Vec3(xy[i].x(), xy[i].y(), z)});
    }
    return anchors;
}

}  // namespace

bool segment_intersects_open_rect(const Vec2& a, const Vec2& b, const Rect& r) {
    double lo = 0.0;
    double hi = 1.0;
    const Vec2 d = b - a;
    const double mins[2] = {r.x_min, r.y_min};
    const double maxs[2] = {r.x_max, r.y_max};
    for (int axis = 0; axis < 2; ++axis) {
        if (d[axis] == 0.0) {
            if (!(a[axis] > mins[axis] && a[axis] < maxs[axis])) return false;
            continue;
        }
        double t0 = (mins[axis] - a[axis]) / d[axis];
        double t1 = (maxs[axis] - a[axis]) / d[axis];
        if (t0 > t1) std::swap(t0, t1);
        lo = std::max(lo, t0);
        hi = std::min(hi, t1);
    }
    return lo < hi;
}

double draw_nlos_error(const NlosErrorModel& model, Rng& rng) {
    double e = 0.0;
    switch (model.kind) {
        case NlosErrorKind::Exponential: {
            std::exponential_distribution<double> dist(1.0 / model.mean_mm);
            e = dist(rng);
            break;
        }
        case NlosErrorKind::Lognormal: {
            const double s = model.lognormal_sigma;
            std::lognormal_distribution<double> dist(std::log(model.mean_mm) - 0.5 * s * s, s);
            e = dist(rng);
            break;
        }
    }
    return std::min(e, model.cap_mm);
}

void validate(const Environment& env) {
    if (!(env.bounds.x_max > env.bounds.x_min && env.bounds.y_max > env.bounds.y_min)) {
        throw ConfigError("environment bounds are empty");
    }
    if (env.anchors.empty()) throw ConfigError("environment has no anchors");
    std::set<int> ids;
    for (const auto& a : env.anchors) {
        if (!a.position.allFinite()) throw ConfigError("anchor position not finite");
        if (!env.bounds.contains(a.position.head<2>())) {
            throw ConfigError("anchor " + std::to_string(a.id) + " lies outside the bounds");
        }
        if (!ids.insert(a.id).second) throw ConfigError("duplicate anchor id " + std::to_string(a.id));
    }
    if (!(env.nlos_error.mean_mm > 0.0)) throw ConfigError("NLOS error mean must be positive");
    if (!(env.nlos_error.cap_mm > 0.0 && env.nlos_error.cap_mm <= 1000.0)) {
        throw ConfigError("NLOS error cap must lie in (0, 1000] mm");
    }
    if (!(env.los_noise_sigma_mm >= 0.0)) throw ConfigError("LOS noise sigma must be >= 0");
    const auto& ch = env.channel;
    if (!(ch.noise_sigma >= 0.0) || !(ch.noise_floor_factor > 0.0) || ch.pulse_width_taps < 1) {
        throw ConfigError("invalid channel noise parameters");
    }
    if (!(ch.nlos_first_path_gain_min >= 0.0 && ch.nlos_first_path_gain_min <= ch.nlos_first_path_gain_max &&
          ch.nlos_first_path_gain_max < 1.0)) {
        throw ConfigError("NLOS first path gain range must satisfy 0 <= min <= max < 1");
    }
}

Environment make_environment(std::string_view preset) {
    Environment env;
    env.anchors = warehouse_anchors();
    env.obstacles = {
        {11000.0, 2700.0, 13000.0, 3100.0},
        {11000.0, 4900.0, 13000.0, 5300.0},
        {18000.0, 2000.0, 22000.0, 2600.0},
        {18000.0, 5400.0, 22000.0, 6000.0},
    };
    // Lognormal keeps most NLOS errors a tap or more away from zero.
    env.nlos_error.kind = NlosErrorKind::Lognormal;
    if (preset == "env1") {
        env.name = "env1";
        return env;
    }
    if (preset == "env2") {
        env.name = "env2";
        env.obstacles.push_back({13500.0, 3150.0, 14500.0, 3350.0});  // pallets in the aisle
        env.obstacles.push_back({2000.0, 2500.0, 6000.0, 3500.0});
        env.obstacles.push_back({2000.0, 6500.0, 6000.0, 7500.0});
        // Fixed pseudo-random disturbance of every anchor, |offset| <= 100 mm per axis.
        Rng rng(0x5eed2);
        std::uniform_real_distribution<double> offset(-100.0, 100.0);
        for (auto& a : env.anchors) {
            for (int k = 0; k < 3; ++k) a.position[k] += offset(rng);
            a.position.x() = std::clamp(a.position.x(), env.bounds.x_min, env.bounds.x_max);
            a.position.y() = std::clamp(a.position.y(), env.bounds.y_min, env.bounds.y_max);
        }
        env.nlos_error = {NlosErrorKind::Lognormal, 420.0, 1000.0, 0.5};
        env.channel.nlos_dominant_gain = 0.25;
        env.channel.nlos_first_path_gain_min = 0.05;
        env.channel.nlos_first_path_gain_max = 0.45;
        env.channel.nlos_multipath_count = 14.0;
        env.channel.nlos_delay_spread_taps = 8.0;
        return env;
    }
    throw ConfigError("unknown environment preset '" + std::string(preset) + "'");
}

Rect reference_aisle() {
    return {10500.0, 3300.0, 13500.0, 4700.0};
}

TrajectoryPlan reference_plan(double scale) {
    if (!(scale > 0.0)) throw ConfigError("scale must be positive");
    const Rect loop = shrink_about_centre({11000.0, 3500.0, 13000.0, 4500.0}, scale);
    TrajectoryPlan plan;
    plan.waypoints = {
        {loop.x_min, loop.y_min}, {loop.x_max, loop.y_min}, {loop.x_max, loop.y_max},
        {loop.x_min, loop.y_max}, {loop.x_min, loop.y_min},
    };
    return plan;
}

TrajectoryPlan random_plan(const Rect& region, double min_length_mm, Rng& rng) {
    std::uniform_real_distribution<double> ux(region.x_min, region.x_max);
    std::uniform_real_distribution<double> uy(region.y_min, region.y_max);
    TrajectoryPlan plan;
    plan.waypoints.emplace_back(ux(rng), uy(rng));
    double length = 0.0;
    while (length < min_length_mm || plan.waypoints.size() < 2) {
        Vec2 next(ux(rng), uy(rng));
        const double step = (next - plan.waypoints.back()).norm();
        if (step < 1.0) continue;
        length += step;
        plan.waypoints.push_back(next);
    }
    return plan;
}

std::vector<TagPose> generate_trajectory(const TrajectoryPlan& plan, double tag_height_mm) {
    if (plan.waypoints.size() < 2) throw DegeneratePlan("a trajectory needs at least two waypoints");
    if (!(plan.speed_mm_s > 0.0) || !(plan.sample_rate_hz > 0.0)) {
        throw DegeneratePlan("speed and sample rate must be positive");
    }
    std::vector<double> cumulative{0.0};
    for (std::size_t i = 1; i < plan.waypoints.size(); ++i) {
        cumulative.push_back(cumulative.back() + (plan.waypoints[i] - plan.waypoints[i - 1]).norm());
    }
    const double total = cumulative.back();
    if (!(total > 0.0)) throw DegeneratePlan("trajectory has zero length");

    const double duration = total / plan.speed_mm_s;
    const auto count = static_cast<std::size_t>(std::floor(duration * plan.sample_rate_hz + 1e-9)) + 1;
    std::vector<TagPose> poses;
    poses.reserve(count);
    std::size_t segment = 1;
    for (std::size_t k = 0; k < count; ++k) {
        const double t = static_cast<double>(k) / plan.sample_rate_hz;
        const double s = std::min(t * plan.speed_mm_s, total);
        while (segment + 1 < cumulative.size() &&
               (s > cumulative[segment] || cumulative[segment] == cumulative[segment - 1])) {
            ++segment;
        }
        const Vec2& a = plan.waypoints[segment - 1];
        const Vec2& b = plan.waypoints[segment];
        const double seg_len = cumulative[segment] - cumulative[segment - 1];
        const double u = seg_len > 0.0 ? (s - cumulative[segment - 1]) / seg_len : 0.0;
        const Vec2 dir = seg_len > 0.0 ? Vec2((b - a) / seg_len) : Vec2::Zero();
        TagPose pose;
        pose.timestamp = t;
        pose.position << a + u * (b - a), tag_height_mm;
        pose.velocity << dir * plan.speed_mm_s, 0.0;
        poses.push_back(pose);
    }
    return poses;
}

bool classify_los(const Environment& env, const Anchor& anchor, const Vec2& position) {
    const Vec2 a = anchor.position.head<2>();
    return std::none_of(env.obstacles.begin(), env.obstacles.end(), [&](const Rect& r) {
        return segment_intersects_open_rect(a, position, r);
    });
}

double tap_range_mm() {
    return tof_to_range(kTapDurationS);
}

namespace {

CirSimParams draw_channel(const ChannelModel& ch, double distance_mm, bool los, Rng& rng) {
    std::normal_distribution<double> jitter(0.0, ch.amplitude_jitter);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const double floor = ch.noise_floor_factor * ch.noise_sigma;

    CirSimParams params;
    params.noise_sigma = ch.noise_sigma;
    params.noise_floor = floor;
    params.pulse_width_taps = ch.pulse_width_taps;
    double dominant = ch.reference_snr * ch.noise_sigma *
                      std::pow(ch.reference_distance_mm / std::max(distance_mm, 500.0), ch.path_loss_exponent) *
                      std::exp(jitter(rng));
    if (!los) dominant *= ch.nlos_dominant_gain;
    dominant = std::max(dominant, 2.0 * floor + 1e-9);
    params.paths = {CirPath{dominant, 0.0, 2.0 * std::numbers::pi * unit(rng)}};

    std::poisson_distribution<int> count(los ? ch.los_multipath_count : ch.nlos_multipath_count);
    std::exponential_distribution<double> gap(1.0 / (los ? ch.los_delay_spread_taps : ch.nlos_delay_spread_taps));
    const int n = count(rng);
    double delay_taps = 0.0;
    for (int s = 0; s < n; ++s) {
        delay_taps += 1.0 + gap(rng);
        const double amp = dominant * (0.15 + 0.45 * unit(rng)) * std::exp(-delay_taps / ch.multipath_decay_taps);
        params.paths.push_back({amp, delay_taps * kTapDurationS, 2.0 * std::numbers::pi * unit(rng)});
    }
    params.nlos_first_path_gain =
        ch.nlos_first_path_gain_min + (ch.nlos_first_path_gain_max - ch.nlos_first_path_gain_min) * unit(rng);
    return params;
}

}  // namespace

RangeMeasurement sample_measurement(const Environment& env, const TagPose& pose, const Anchor& anchor,
                                    Rng& rng) {
    const Vec2 xy = pose.position.head<2>();
    if (!env.bounds.contains(xy)) throw InvalidArgument("tag pose outside the environment bounds");
    const Vec3 tag(xy.x(), xy.y(), env.tag_height_mm);
    const double true_range = euclidean_range(anchor.position, tag);
    const bool los = classify_los(env, anchor, xy);
    const double tap_mm = tap_range_mm();
    const int max_error_taps = static_cast<int>(std::floor(env.nlos_error.cap_mm / tap_mm + 1e-9));

    std::normal_distribution<double> jitter_dist(0.0, env.los_noise_sigma_mm);
    std::uniform_int_distribution<int> fp_dist(700, 760);

    for (int attempt = 0;; ++attempt) {
        int error_taps = 0;
        if (!los) {
            const double e = draw_nlos_error(env.nlos_error, rng);
            error_taps = std::min(static_cast<int>(std::lround(e / tap_mm)), max_error_taps);
        }
        const double jitter = env.los_noise_sigma_mm > 0.0 ? jitter_dist(rng) : 0.0;
        const int fp_tap = fp_dist(rng);
        const CirSimParams params = draw_channel(env.channel, true_range, los, rng);
        RawCir raw;
        try {
            raw = simulate_cir(params, fp_tap, error_taps, los, rng);
        } catch (const NoPathDetected&) {
            if (attempt + 1 >= kMaxMeasurementAttempts) throw;
            continue;
        }
        const double leading_edge_bias =
            tof_to_range(static_cast<double>(raw.detected_fp_index - fp_tap) * raw.tap_duration);
        double error = leading_edge_bias + jitter;
        if (!los) error = std::max(error, 0.0);
        error = std::clamp(error, -env.nlos_error.cap_mm, env.nlos_error.cap_mm);

        RangeMeasurement m;
        m.timestamp = pose.timestamp;
        m.anchor_id = anchor.id;
        m.measured_range_mm = std::max(true_range + error, 1e-3);
        m.cir = preprocess(raw);
        m.set_ground_truth({true_range, los});
        return m;
    }
}

Episode generate_episode(const Environment& env, const TrajectoryPlan& plan, AnchorPolicy policy, Rng& rng) {
    validate(env);
    const auto poses = generate_trajectory(plan, env.tag_height_mm);
    Episode episode;
    episode.anchors = env.anchors;
    episode.tag_height_mm = env.tag_height_mm;
    episode.measurements.reserve(poses.size());

    const std::size_t k = env.anchors.size();
    std::size_t cursor = 0;
    for (const auto& pose : poses) {
        const Vec2 xy = pose.position.head<2>();
        auto in_range = [&](const Anchor& a) {
            return env.radio_range_mm <= 0.0 ||
                   euclidean_range(a.position, Vec3(xy.x(), xy.y(), env.tag_height_mm)) <= env.radio_range_mm;
        };
        const Anchor* chosen = nullptr;
        if (policy == AnchorPolicy::RoundRobin) {
            for (std::size_t probe = 0; probe < k; ++probe) {
                const Anchor& a = env.anchors[(cursor + probe) % k];
                if (in_range(a)) {
                    chosen = &a;
                    cursor = (cursor + probe + 1) % k;
                    break;
                }
            }
        } else {
            std::vector<const Anchor*> candidates;
            for (const auto& a : env.anchors) {
                if (in_range(a)) candidates.push_back(&a);
            }
            if (!candidates.empty()) {
                std::uniform_int_distribution<std::size_t> pick(0, candidates.size() - 1);
                chosen = candidates[pick(rng)];
            }
        }
        if (chosen == nullptr) {
            throw InvalidArgument("no anchor in radio range at t = " + std::to_string(pose.timestamp));
        }
        episode.measurements.push_back(sample_measurement(env, pose, *chosen, rng));
    }
    episode.set_ground_truth_poses(poses);
    return episode;
}

}  // namespace uwbrl
