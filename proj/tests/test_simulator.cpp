#include <doctest.h>

#include <cmath>
#include <set>

#include "uwbrl/error.hpp"
#include "uwbrl/simulator.hpp"

using namespace uwbrl;

namespace {

Environment single_anchor_env() {
    Environment env;
    env.name = "test";
    env.bounds = {0, 0, 20000, 10000};
    env.anchors = {{0, Vec3(1000, 5000, 2300)}};
    return env;
}

TrajectoryPlan straight(double length_mm) {
    TrajectoryPlan plan;
    plan.waypoints = {{2000, 5000}, {2000 + length_mm, 5000}};
    return plan;
}

double uncorrected_mae(const Episode& ep) {
    double sum = 0.0;
    for (const auto& m : ep.measurements) sum += std::abs(m.measured_range_mm - m.ground_truth().true_range_mm);
    return sum / static_cast<double>(ep.size());
}

}  // namespace

TEST_CASE("trajectory sampling") {
    const auto line = generate_trajectory(straight(1000.0));
    CHECK(line.size() == 501);
    CHECK(line.back().timestamp == doctest::Approx(10.0));
    CHECK(line.back().position.x() == doctest::Approx(3000.0));
    for (std::size_t i = 1; i < line.size(); ++i) {
        CHECK(line[i].timestamp - line[i - 1].timestamp == doctest::Approx(0.02).epsilon(1e-9));
    }

    // Four 1 m sides.
    TrajectoryPlan square;
    square.waypoints = {{0, 0}, {1000, 0}, {1000, 1000}, {0, 1000}, {0, 0}};
    const auto loop = generate_trajectory(square);
    CHECK(loop.size() == 2001);
    CHECK((loop.front().position - loop.back().position).norm() < 1e-9);

    TrajectoryPlan repeated;
    repeated.waypoints = {{5, 5}, {5, 5}};
    CHECK_THROWS_AS(generate_trajectory(repeated), DegeneratePlan);
}

TEST_CASE("line of sight classification") {
    Environment env = single_anchor_env();
    const Anchor& a = env.anchors[0];
    CHECK(classify_los(env, a, {9000, 5000}));
    env.obstacles = {{4000, 4000, 6000, 6000}};
    CHECK_FALSE(classify_los(env, a, {9000, 5000}));
    // Segment through the corner (4000, 4000) only.
    env.obstacles = {{4000, 4000, 6000, 8000}};
    CHECK(classify_los(env, {1, Vec3(2000, 6000, 2300)}, {6000, 2000}));
}

TEST_CASE("measurement error construction") {
    Environment env = single_anchor_env();
    env.los_noise_sigma_mm = 0.0;
    env.channel.los_multipath_count = 0.0;
    env.channel.nlos_multipath_count = 0.0;
    Rng rng(9);
    TagPose pose;
    pose.position = Vec3(9000, 5000, 0);

    SUBCASE("line of sight without noise is exact") {
        const RangeMeasurement m = sample_measurement(env, pose, env.anchors[0], rng);
        CHECK(m.ground_truth().los);
        CHECK(m.measured_range_mm == doctest::Approx(m.ground_truth().true_range_mm).epsilon(1e-12));
    }
    SUBCASE("two tap NLOS bias is 600 mm") {
        env.obstacles = {{4000, 4000, 6000, 6000}};
        env.nlos_error.kind = NlosErrorKind::Lognormal;
        env.nlos_error.mean_mm = 600.0;
        env.nlos_error.lognormal_sigma = 1e-9;
        const RangeMeasurement m = sample_measurement(env, pose, env.anchors[0], rng);
        CHECK_FALSE(m.ground_truth().los);
        CHECK(ranging_error(m.measured_range_mm, m.ground_truth().true_range_mm) == doctest::Approx(600.0));
    }
}

TEST_CASE("reference episode statistics") {
    const Environment env = make_environment("env1");
    Rng rng(7);
    const Episode ep = generate_episode(env, reference_plan(1.0), AnchorPolicy::RoundRobin, rng);
    CHECK(ep.size() > 2800);
    CHECK(ep.size() < 3200);
    std::size_t nlos = 0;
    for (std::size_t i = 0; i < ep.size(); ++i) {
        const auto& m = ep.measurements[i];
        const GroundTruth& t = m.ground_truth();
        const double e = ranging_error(m.measured_range_mm, t.true_range_mm);
        CHECK(std::abs(e) <= 1000.0 + 1e-9);
        if (!t.los) {
            ++nlos;
            CHECK(e >= 0.0);
        }
        // Label consistency with the geometry.
        const Vec2 xy = ep.ground_truth_poses()[i].position.head<2>();
        CHECK(t.los == classify_los(env, ep.anchor(m.anchor_id), xy));
        if (i > 0) CHECK(m.timestamp - ep.measurements[i - 1].timestamp == doctest::Approx(0.02).epsilon(1e-9));
    }
    const double fraction = static_cast<double>(nlos) / static_cast<double>(ep.size());
    CHECK(fraction >= 0.2);
    CHECK(fraction <= 0.5);
}

TEST_CASE("anchor scheduling") {
    Environment env = make_environment("env1");
    REQUIRE(env.anchors.size() == 23);
    Rng rng(1);
    const Episode ep = generate_episode(env, reference_plan(0.25), AnchorPolicy::RoundRobin, rng);
    for (std::size_t start = 0; start + 23 <= ep.size(); start += 7) {
        std::set<int> ids;
        for (std::size_t i = start; i < start + 23; ++i) ids.insert(ep.measurements[i].anchor_id);
        CHECK(ids.size() == 23);
    }
    env.anchors.resize(1);
    const Episode single = generate_episode(env, reference_plan(0.25), AnchorPolicy::UniformRandom, rng);
    for (const auto& m : single.measurements) CHECK(m.anchor_id == env.anchors[0].id);
}

TEST_CASE("episodes are deterministic per seed") {
    const Environment env = make_environment("env1");
    Rng a(123), b(123), c(124);
    const Episode e1 = generate_episode(env, reference_plan(0.25), AnchorPolicy::RoundRobin, a);
    const Episode e2 = generate_episode(env, reference_plan(0.25), AnchorPolicy::RoundRobin, b);
    const Episode e3 = generate_episode(env, reference_plan(0.25), AnchorPolicy::RoundRobin, c);
    REQUIRE(e1.size() == e2.size());
    bool all_equal = true;
    for (std::size_t i = 0; i < e1.size(); ++i) all_equal = all_equal && e1.measurements[i] == e2.measurements[i];
    CHECK(all_equal);
    bool any_diff = false;
    for (std::size_t i = 0; i < e1.size(); ++i) any_diff = any_diff || !(e1.measurements[i] == e3.measurements[i]);
    CHECK(any_diff);
}

TEST_CASE("changed environment is harder") {
    for (std::uint64_t seed : {1u, 2u, 3u}) {
        Rng a(seed), b(seed);
        const Episode e1 = generate_episode(make_environment("env1"), reference_plan(0.5), AnchorPolicy::RoundRobin, a);
        const Episode e2 = generate_episode(make_environment("env2"), reference_plan(0.5), AnchorPolicy::RoundRobin, b);
        CHECK(uncorrected_mae(e2) > uncorrected_mae(e1));
    }
    const Environment e1 = make_environment("env1");
    const Environment e2 = make_environment("env2");
    REQUIRE(e1.anchors.size() == e2.anchors.size());
    for (std::size_t i = 0; i < e1.anchors.size(); ++i) {
        CHECK((e1.anchors[i].position - e2.anchors[i].position).cwiseAbs().maxCoeff() <= 100.0 + 1e-9);
    }
    CHECK_THROWS_AS(make_environment("env9"), ConfigError);
}

TEST_CASE("random plans reach the requested length inside the region") {
    Rng rng(4);
    const Rect region = reference_aisle();
    for (int trial = 0; trial < 20; ++trial) {
        const TrajectoryPlan plan = random_plan(region, 5000.0, rng);
        double length = 0.0;
        for (std::size_t i = 1; i < plan.waypoints.size(); ++i) {
            length += (plan.waypoints[i] - plan.waypoints[i - 1]).norm();
            CHECK(region.contains(plan.waypoints[i]));
        }
        CHECK(length >= 5000.0);
    }
}
