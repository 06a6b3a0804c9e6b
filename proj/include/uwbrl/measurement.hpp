#pragma once

#include <cstddef>
#include <optional>
#include <vector>

#include "uwbrl/cir.hpp"
#include "uwbrl/ranging.hpp"

namespace uwbrl {

// Labels only the simulator knows. Reading them while a firewall::Guard is
// active on the current thread throws GroundTruthAccess and is counted.
struct GroundTruth {
    double true_range_mm = 0.0;
    bool los = true;
};

namespace firewall {

class Guard {
public:
    Guard();
    ~Guard();
    Guard(const Guard&) = delete;
    Guard& operator=(const Guard&) = delete;
};

// Re-opens access inside a guarded region, for evaluation hooks only.
class Exemption {
public:
    Exemption();
    ~Exemption();
    Exemption(const Exemption&) = delete;
    Exemption& operator=(const Exemption&) = delete;
};

bool armed();
std::size_t violations();
void reset_violations();

// Invoked by every ground-truth accessor.
void check_access();

}  // namespace firewall

class RangeMeasurement {
public:
    double timestamp = 0.0;
    int anchor_id = 0;
    double measured_range_mm = 0.0;
    PreprocessedCir cir;

    bool has_ground_truth() const { return eval_meta_.has_value(); }
    const GroundTruth& ground_truth() const;
    void set_ground_truth(const GroundTruth& truth) { eval_meta_ = truth; }
    void clear_ground_truth() { eval_meta_.reset(); }

    friend bool operator==(const RangeMeasurement& a, const RangeMeasurement& b);

private:
    std::optional<GroundTruth> eval_meta_;
};

class Episode {
public:
    std::vector<Anchor> anchors;
    std::vector<RangeMeasurement> measurements;
    double tag_height_mm = 300.0;  // known mounting height of the tag

    std::size_t size() const { return measurements.size(); }
    const Anchor& anchor(int id) const;

    bool has_poses() const { return !poses_.empty(); }
    const std::vector<TagPose>& ground_truth_poses() const;
    void set_ground_truth_poses(std::vector<TagPose> poses) { poses_ = std::move(poses); }

private:
    std::vector<TagPose> poses_;
};

}  // namespace uwbrl
