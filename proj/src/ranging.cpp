#include "uwbrl/ranging.hpp"

#include <cmath>

#include "uwbrl/error.hpp"

namespace uwbrl {

double euclidean_range(const Vec3& a, const Vec3& b) {
    return (a - b).norm();
}

double tof_to_range(double tof_s) {
    if (!std::isfinite(tof_s) || tof_s < 0.0) {
        throw InvalidArgument("time of flight must be finite and non-negative");
    }
    return tof_s * kSpeedOfLightMmps;
}

}  // namespace uwbrl
