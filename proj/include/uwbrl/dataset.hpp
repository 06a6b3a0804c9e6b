#pragma once

#include <string>

#include "uwbrl/measurement.hpp"

namespace uwbrl {

// One row per measurement:
//   timestamp_s,anchor_id,anchor_x_mm,anchor_y_mm,anchor_z_mm,measured_range_mm,
//   true_range_mm,los_flag,cir_0..cir_149
// true_range_mm and los_flag are left empty for measurements without ground truth.
void write_episode_csv(const Episode& episode, const std::string& path);

// Header is mandatory. Throws IoError / CorruptFile.
Episode read_episode_csv(const std::string& path, double tag_height_mm = 300.0);

// timestamp_s,x_mm,y_mm,z_mm,vx_mm_s,vy_mm_s,vz_mm_s
void write_poses_csv(const std::vector<TagPose>& poses, const std::string& path);
std::vector<TagPose> read_poses_csv(const std::string& path);

}  // namespace uwbrl
