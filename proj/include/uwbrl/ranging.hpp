#pragma once

#include <Eigen/Core>

namespace uwbrl {

// All distances are millimetres, all times seconds.
using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;

inline constexpr double kSpeedOfLightMps = 3.0e8;
inline constexpr double kSpeedOfLightMmps = kSpeedOfLightMps * 1000.0;

struct Anchor {
    int id = 0;
    Vec3 position = Vec3::Zero();
};

struct TagPose {
    Vec3 position = Vec3::Zero();
    Vec3 velocity = Vec3::Zero();
    double timestamp = 0.0;
};

double euclidean_range(const Vec3& a, const Vec3& b);

// Throws InvalidArgument for negative or non-finite time of flight.
double tof_to_range(double tof_s);

// Signed error e = measured - true; NLOS bias is positive.
inline double ranging_error(double measured_mm, double true_range_mm) {
    return measured_mm - true_range_mm;
}

}  // namespace uwbrl
