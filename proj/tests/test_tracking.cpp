#include <doctest.h>

#include <cmath>

#include "oracles.hpp"
#include "uwbrl/error.hpp"
#include "uwbrl/tracking.hpp"

using namespace uwbrl;

namespace {

BufferEntry entry_at(const Vec2& p, std::size_t index) {
    BufferEntry e;
    e.ekf_position = p;
    e.sample_index = index;
    e.corrected_range_mm = static_cast<double>(index);
    return e;
}

const std::vector<Anchor> kSquareAnchors{
    {0, Vec3(0, 0, 2500)}, {1, Vec3(10000, 0, 2500)}, {2, Vec3(10000, 8000, 2500)}, {3, Vec3(0, 8000, 2500)}};

}  // namespace

TEST_CASE("constant velocity prediction") {
    EkfConfig cfg;
    EkfState s = ekf_initial_state(cfg);
    s.mean << 1000, 2000, 100, 0;
    const EkfState one = ekf_predict(s, 1.0, cfg);
    CHECK(one.mean(0) == doctest::Approx(1100.0));
    CHECK(one.mean(1) == doctest::Approx(2000.0));
    const EkfState fast = ekf_predict(s, 0.02, cfg);
    CHECK(fast.mean(0) == doctest::Approx(1000.0 + 100.0 * 0.02));
    CHECK_THROWS_AS(ekf_predict(s, 0.0, cfg), InvalidArgument);

    // Without velocity uncertainty and (numerically) without process noise the
    // position block stays put.
    EkfConfig quiet = cfg;
    quiet.process_noise_accel_sigma = 1e-12;
    EkfState still = ekf_initial_state(quiet);
    still.covariance = Eigen::Matrix4d::Zero();
    still.covariance.topLeftCorner<2, 2>() = Eigen::Matrix2d::Identity() * 400.0;
    const EkfState after = ekf_predict(still, 0.5, quiet);
    CHECK((after.covariance.topLeftCorner<2, 2>() - still.covariance.topLeftCorner<2, 2>()).norm() < 1e-9);
}

TEST_CASE("zero innovation leaves the mean unchanged") {
    EkfConfig cfg;
    EkfState s = ekf_initial_state(cfg);
    s.mean << 4000, 3000, 50, -20;
    const Anchor a{7, Vec3(1000, 1000, 2300)};
    const double predicted = position_to_range(s.position(), a, 300.0);
    const auto r = ekf_update(s, predicted, a, 300.0, cfg);
    CHECK((r.state.mean - s.mean).norm() < 1e-9);
}

TEST_CASE("tag directly below an anchor is singular") {
    EkfConfig cfg;
    EkfState s = ekf_initial_state(cfg);
    s.mean << 1000, 1000, 0, 0;
    const Anchor a{1, Vec3(1000, 1000, 2300)};
    CHECK_THROWS_AS(ekf_update(s, 2000.0, a, 300.0, cfg), SingularGeometry);
    CHECK_THROWS_AS(ekf_update(s, -1.0, {2, Vec3(0, 0, 0)}, 300.0, cfg), InvalidArgument);

    Tracker tracker(cfg, 300.0);
    tracker.reset();
    tracker.step(0.0, 2000.0, a);
    tracker.set_state(s, true);
    tracker.step(0.02, 2000.0, a);
    CHECK(tracker.skipped_updates() == 1);
}

TEST_CASE("static tag converges from noiseless ranges") {
    EkfConfig cfg;
    cfg.initial_position = Vec2(5000, 4000);
    Tracker tracker(cfg, 300.0);
    const Vec3 tag(3000, 2500, 300);
    Vec2 p;
    for (int k = 0; k < 200; ++k) {
        const Anchor& a = kSquareAnchors[static_cast<std::size_t>(k % 4)];
        p = tracker.step(0.02 * k, euclidean_range(a.position, tag), a);
    }
    CHECK((p - tag.head<2>()).norm() < 50.0);
}

TEST_CASE("covariance stays symmetric positive definite") {
    EkfConfig cfg;
    Tracker tracker(cfg, 300.0);
    Rng rng(8);
    std::normal_distribution<double> noise(0.0, 150.0);
    const Vec3 centre(5000, 4000, 300);
    for (int k = 0; k < 100000; ++k) {
        const Anchor& a = kSquareAnchors[static_cast<std::size_t>(k % 4)];
        const double t = 0.02 * k;
        const Vec3 tag = centre + Vec3(2000 * std::cos(t / 20), 1500 * std::sin(t / 20), 0);
        tracker.step(t, std::max(1.0, euclidean_range(a.position, tag) + noise(rng)), a);
        if (k % 997 == 0) {
            const Eigen::Matrix4d& P = tracker.state().covariance;
            CHECK((P - P.transpose()).norm() == 0.0);
            CHECK(Eigen::SelfAdjointEigenSolver<Eigen::Matrix4d>(P).eigenvalues().minCoeff() > 0.0);
        }
    }
}

TEST_CASE("constant velocity track matches a least-squares fit") {
    // Noiseless straight-line motion; the oracle fits the whole track at once.
    EkfConfig cfg;
    cfg.initial_position = Vec2(5000, 4000);
    Tracker tracker(cfg, 300.0);
    const Vec2 start(2000, 3000), velocity(100, 40);
    std::vector<oracle::RangeObservation> obs;
    std::vector<Vec2> ekf;
    for (int k = 0; k < 1500; ++k) {
        const double t = 0.02 * k;
        const Anchor& a = kSquareAnchors[static_cast<std::size_t>(k % 4)];
        const Vec2 xy = start + velocity * t;
        const double range = euclidean_range(a.position, Vec3(xy.x(), xy.y(), 300));
        obs.push_back({t, a.position, range});
        ekf.push_back(tracker.step(t, range, a));
    }
    const Eigen::Vector4d fit = oracle::fit_cv_track(obs, 300.0, Eigen::Vector4d(5000, 4000, 0, 0));
    double sq = 0.0;
    int n = 0;
    for (int k = 0; k < 1500; ++k) {
        const double t = 0.02 * k;
        if (t < 2.0) continue;
        const Vec2 oracle_xy(fit(0) + fit(2) * t, fit(1) + fit(3) * t);
        sq += (ekf[static_cast<std::size_t>(k)] - oracle_xy).squaredNorm();
        ++n;
    }
    CHECK(std::sqrt(sq / n) < 50.0);
    CHECK((fit.head<2>() - start).norm() < 1e-6);
}

TEST_CASE("smoothing buffer examples") {
    SmoothingBuffer buf(3);
    CHECK_FALSE(buf.push(entry_at({0, 0}, 0)).has_value());
    CHECK_FALSE(buf.push(entry_at({1, 0}, 1)).has_value());
    const auto out = buf.push(entry_at({2, 0}, 2));
    REQUIRE(out.has_value());
    CHECK(out->average_position.x() == doctest::Approx(1.0));
    CHECK(out->average_position.y() == 0.0);
    CHECK(out->middle.sample_index == 1);

    SmoothingBuffer big(31);
    std::optional<SmoothedSample> first;
    for (std::size_t i = 0; i < 31 && !first; ++i) first = big.push(entry_at({double(i), 0}, i));
    REQUIRE(first.has_value());
    CHECK(first->middle.sample_index == 15);

    CHECK_THROWS_AS(SmoothingBuffer(4), InvalidArgument);
    CHECK_THROWS_AS(SmoothingBuffer(0), InvalidArgument);
}

TEST_CASE("smoothing buffer equals a brute-force sliding mean") {
    Rng rng(17);
    std::uniform_real_distribution<double> u(-20000.0, 20000.0);
    double worst = 0.0;
    for (std::size_t n : {3u, 5u, 31u}) {
        for (int seq = 0; seq < 100; ++seq) {
            std::vector<Vec2> pts(200);
            for (auto& p : pts) p = Vec2(u(rng), u(rng));
            const auto expected = oracle::sliding_mean(pts, n);
            SmoothingBuffer buf(n);
            std::size_t produced = 0;
            for (std::size_t i = 0; i < pts.size(); ++i) {
                const auto out = buf.push(entry_at(pts[i], i));
                if (!out) continue;
                worst = std::max(worst, (out->average_position - expected[produced]).cwiseAbs().maxCoeff());
                CHECK(out->middle.sample_index == i - (n - 1) / 2);
                ++produced;
            }
            CHECK(produced == expected.size());
        }
    }
    CHECK(worst < 1e-9);
}

TEST_CASE("range from a smoothed position") {
    const Anchor above{0, Vec3(500, 500, 2300)};
    CHECK(position_to_range({500, 500}, above, 300.0) == doctest::Approx(2000.0));
    const Anchor level{1, Vec3(0, 0, 300)};
    CHECK(position_to_range({3000, 4000}, level, 300.0) == doctest::Approx(5000.0));
    Rng rng(2);
    std::uniform_real_distribution<double> u(-10000, 10000);
    for (int i = 0; i < 1000; ++i) {
        const Anchor a{0, Vec3(u(rng), u(rng), u(rng) / 4)};
        const Vec2 p(u(rng), u(rng));
        const double h = u(rng) / 10;
        CHECK(position_to_range(p, a, h) == euclidean_range(a.position, Vec3(p.x(), p.y(), h)));
    }
}

TEST_CASE("reward shape") {
    CHECK(compute_reward(5010, 5000) == doctest::Approx(0.1).epsilon(1e-12));
    CHECK(compute_reward(4990, 5000) == doctest::Approx(0.1).epsilon(1e-12));
    CHECK(compute_reward(5000, 5000) == 0.5);
    CHECK(compute_reward(5500, 5000) == doctest::Approx(0.002).epsilon(1e-12));
    double previous = compute_reward(5002, 5000);
    for (double d = 3.0; d < 1000.0; d += 7.0) {
        const double r = compute_reward(5000 + d, 5000);
        CHECK(r < previous);
        CHECK(r == compute_reward(5000 - d, 5000));
        previous = r;
    }
}
