#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace gnio::imu {

using Eigen::Matrix3d;
using Eigen::Quaterniond;
using Eigen::Vector3d;

struct ImuSample {
  double t = 0.0;
  Vector3d gyro = Vector3d::Zero();
  Vector3d accel = Vector3d::Zero();
};

struct PoseSample {
  double t = 0.0;
  Vector3d p = Vector3d::Zero();
  Quaterniond q = Quaterniond::Identity();

  [[nodiscard]] Matrix3d rotation() const { return q.toRotationMatrix(); }
};

struct Bias {
  Vector3d gyro = Vector3d::Zero();
  Vector3d accel = Vector3d::Zero();
};

struct Sequence {
  double rate = 100.0;
  std::vector<ImuSample> imu;
  std::vector<PoseSample> gt;
  std::optional<Bias> bias_gt;

  [[nodiscard]] double duration() const;
  /// Throws ConfigError on non-monotone or irregular timestamps, non-unit
  /// quaternions, non-finite values or a gt/imu length mismatch.
  void validate() const;
};

/// N x 6 block, rows [a; w] after alignment.
using AlignedBlock = Eigen::Matrix<double, Eigen::Dynamic, 6, Eigen::RowMajor>;

struct Window {
  AlignedBlock X;
  Vector3d d_gt = Vector3d::Zero();
  double yaw = 0.0;
  double t_start = 0.0;
  double t_end = 0.0;
  std::size_t start_index = 0;
  /// Ground-truth path length over the window, for motion labels.
  double path_length = 0.0;

  [[nodiscard]] std::size_t size() const { return static_cast<std::size_t>(X.rows()); }
};

inline constexpr double kStationaryPathLength = 0.01;

[[nodiscard]] inline bool is_stationary(const Window& w) {
  return w.path_length < kStationaryPathLength;
}

}  // namespace gnio::imu
