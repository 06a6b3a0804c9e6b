#pragma once

// Independent reference computations and random generators used by the unit
// and acceptance tests. Nothing here calls into the code under test except
// for plain data types.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "uwbrl/cir.hpp"
#include "uwbrl/ranging.hpp"

namespace oracle {

using uwbrl::Rng;
using uwbrl::Vec2;
using uwbrl::Vec3;

// Mean of positions[t - n + 1 .. t] for every t >= n - 1.
inline std::vector<Vec2> sliding_mean(const std::vector<Vec2>& positions, std::size_t n) {
    std::vector<Vec2> out;
    for (std::size_t t = n - 1; t < positions.size(); ++t) {
        Vec2 sum = Vec2::Zero();
        for (std::size_t k = t + 1 - n; k <= t; ++k) sum += positions[k];
        out.push_back(sum / static_cast<double>(n));
    }
    return out;
}

// Type-7 quantile by explicit sort and interpolation.
inline double quantile(std::vector<double> v, double p) {
    std::sort(v.begin(), v.end());
    const double pos = p * static_cast<double>(v.size() - 1);
    const double below = std::floor(pos);
    const double frac = pos - below;
    const auto i = static_cast<std::size_t>(below);
    if (i + 1 >= v.size()) return v.back();
    return v[i] * (1.0 - frac) + v[i + 1] * frac;
}

struct RangeObservation {
    double t = 0.0;
    Vec3 anchor = Vec3::Zero();
    double range = 0.0;
};

// Gauss-Newton fit of a constant-velocity planar track (x0, y0, vx, vy) at a
// fixed height to single-anchor ranges.
inline Eigen::Vector4d fit_cv_track(const std::vector<RangeObservation>& obs, double height, Eigen::Vector4d guess,
                                    int iterations = 50) {
    Eigen::Vector4d p = guess;
    for (int it = 0; it < iterations; ++it) {
        Eigen::MatrixXd J(obs.size(), 4);
        Eigen::VectorXd r(obs.size());
        for (std::size_t i = 0; i < obs.size(); ++i) {
            const double x = p(0) + p(2) * obs[i].t;
            const double y = p(1) + p(3) * obs[i].t;
            const Vec3 d(x - obs[i].anchor.x(), y - obs[i].anchor.y(), height - obs[i].anchor.z());
            const double range = d.norm();
            r(static_cast<Eigen::Index>(i)) = obs[i].range - range;
            const double gx = d.x() / range;
            const double gy = d.y() / range;
            J.row(static_cast<Eigen::Index>(i)) << gx, gy, gx * obs[i].t, gy * obs[i].t;
        }
        const Eigen::Vector4d step = (J.transpose() * J).ldlt().solve(J.transpose() * r);
        p += step;
        if (step.norm() < 1e-12) break;
    }
    return p;
}

// Random complex CIR with a detected first path that leaves room for the
// preprocessing window.
inline uwbrl::RawCir random_cir(Rng& rng) {
    uwbrl::RawCir raw;
    std::normal_distribution<double> noise(0.0, 1.0);
    std::uniform_real_distribution<double> amp(0.0, 50.0);
    std::uniform_int_distribution<int> fp(uwbrl::kMinFirstPathTap, uwbrl::kMaxFirstPathTap);
    for (auto& tap : raw.taps) tap = {noise(rng), noise(rng)};
    raw.detected_fp_index = fp(rng);
    // A few strong components so windows are not pure noise.
    std::uniform_int_distribution<int> where(0, uwbrl::kCirLength - 1);
    for (int k = 0; k < 5; ++k) raw.taps[static_cast<std::size_t>(where(rng))] += uwbrl::Complex(amp(rng), amp(rng));
    return raw;
}

// Relative error between two gradient vectors. Norms below `floor` are
// treated as zero so tensors whose true gradient vanishes (a bias feeding
// straight into batch norm) are not judged on rounding noise alone.
inline double relative_error(const Eigen::VectorXd& a, const Eigen::VectorXd& b, double floor = 1e-12) {
    const double denom = std::max({a.norm(), b.norm(), floor});
    return (a - b).norm() / denom;
}

}  // namespace oracle
