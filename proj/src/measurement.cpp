#include "uwbrl/measurement.hpp"

#include <atomic>
#include <string>

#include "uwbrl/error.hpp"

namespace uwbrl {

namespace firewall {

namespace {
thread_local int guard_depth = 0;
thread_local int exemption_depth = 0;
std::atomic<std::size_t> violation_count{0};
}  // namespace

Guard::Guard() { ++guard_depth; }
Guard::~Guard() { --guard_depth; }
Exemption::Exemption() { ++exemption_depth; }
Exemption::~Exemption() { --exemption_depth; }

bool armed() { return guard_depth > 0 && exemption_depth == 0; }
std::size_t violations() { return violation_count.load(); }
void reset_violations() { violation_count = 0; }

void check_access() {
    if (armed()) {
        ++violation_count;
        throw GroundTruthAccess("ground truth read on a training code path");
    }
}

}  // namespace firewall

const GroundTruth& RangeMeasurement::ground_truth() const {
    firewall::check_access();
    if (!eval_meta_) throw MissingGroundTruth("measurement carries no ground truth");
    return *eval_meta_;
}

bool operator==(const RangeMeasurement& a, const RangeMeasurement& b) {
    const bool truth_equal =
        a.eval_meta_.has_value() == b.eval_meta_.has_value() &&
        (!a.eval_meta_ || (a.eval_meta_->true_range_mm == b.eval_meta_->true_range_mm &&
                           a.eval_meta_->los == b.eval_meta_->los));
    return a.timestamp == b.timestamp && a.anchor_id == b.anchor_id &&
           a.measured_range_mm == b.measured_range_mm && a.cir.values == b.cir.values && truth_equal;
}

const Anchor& Episode::anchor(int id) const {
    for (const auto& a : anchors) {
        if (a.id == id) return a;
    }
    throw InvalidArgument("unknown anchor id " + std::to_string(id));
}

const std::vector<TagPose>& Episode::ground_truth_poses() const {
    firewall::check_access();
    if (poses_.empty()) throw MissingGroundTruth("episode carries no ground-truth poses");
    return poses_;
}

}  // namespace uwbrl
