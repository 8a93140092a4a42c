#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "gnio/imu/types.hpp"

namespace gnio::eval {

using imu::PoseSample;
using Trajectory = std::vector<PoseSample>;

/// Throws ConfigError unless timestamps are strictly increasing.
void validate_trajectory(std::span<const PoseSample> traj, const std::string& what);

struct Synced {
  Trajectory est;
  Trajectory gt;
};

/// Keeps the ground-truth samples inside the estimate's time range and
/// interpolates the estimate onto them (linear position, slerp rotation).
/// Throws ConfigError when the ranges do not overlap.
Synced synchronize(std::span<const PoseSample> est, std::span<const PoseSample> gt);

/// Translates and yaw-rotates est about its first pose so that position and
/// yaw match gt's first pose. Roll and pitch are untouched.
Trajectory align_first_pose(std::span<const PoseSample> est, std::span<const PoseSample> gt);

/// Least-squares rigid alignment of all positions (no scale).
Trajectory align_umeyama(std::span<const PoseSample> est, std::span<const PoseSample> gt);

/// RMS of per-sample 3D position errors. Throws ShapeError on a length
/// mismatch and ConfigError on empty input.
double ate(std::span<const PoseSample> est, std::span<const PoseSample> gt);
inline double rmse(std::span<const PoseSample> est, std::span<const PoseSample> gt) {
  return ate(est, gt);
}

enum class Alignment { FirstPose, Umeyama, None };

Alignment alignment_from_string(const std::string& s);
std::string to_string(Alignment a);

struct MetricReport {
  double ate_m = 0.0;
  double rmse_m = 0.0;
  double duration_s = 0.0;
  std::size_t n = 0;
  std::string config_hash;
};

nlohmann::json to_json(const MetricReport& r);

/// 64-bit FNV-1a of the compact JSON dump, as 16 hex digits.
std::string config_hash(const nlohmann::json& config);

/// synchronize, align, then ate.
MetricReport evaluate(std::span<const PoseSample> est, std::span<const PoseSample> gt,
                      Alignment alignment = Alignment::FirstPose,
                      const std::string& config_fingerprint = "");

struct NamedTrajectory {
  std::string name;
  Trajectory poses;
};

/// Top-down SVG, one polyline per trajectory, coordinates in cm.
std::string render_svg(std::span<const NamedTrajectory> trajectories);

/// Writes metrics.json, <name>.csv per trajectory and, if any trajectory is
/// given, trajectories.svg.
void emit_outputs(const std::filesystem::path& dir, const MetricReport& report,
                  std::span<const NamedTrajectory> trajectories);

}  // namespace gnio::eval
