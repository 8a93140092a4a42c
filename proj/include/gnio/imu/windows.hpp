#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "gnio/imu/types.hpp"

namespace gnio::imu {

/// x_i = R_align (m_i - b) with R_align = Rz(yaw(R_wb))^T R_wb, so only
/// roll and pitch survive. Throws ConfigError if R_wb is not a rotation.
AlignedBlock gravity_align(std::span<const ImuSample> samples, const Matrix3d& R_wb,
                           const Bias& bias);

/// Per-sample variant: x_i = Rz(ref_yaw)^T R_i (m_i - b). Each sample is
/// rotated by its own orientation into the yaw frame fixed at ref_yaw.
AlignedBlock gravity_align(std::span<const ImuSample> samples,
                           std::span<const Matrix3d> R_wb, double ref_yaw, const Bias& bias);

struct WindowGeometry {
  std::size_t N = 0;
  std::size_t S = 0;
  std::size_t count = 0;
};

/// Window length and stride in samples, and how many windows fit into a
/// sequence of n_samples. A window starting at s reads samples [s, s+N) and
/// ends at the pose of sample s+N. Throws ConfigError if duration*rate or
/// stride*rate is not an integer or the sequence is shorter than a window.
WindowGeometry window_geometry(double rate, std::size_t n_samples, double duration = 1.0,
                               double stride = 0.1);

/// Windows aligned with ground-truth orientation and labelled with d_gt.
std::vector<Window> window_stream(const Sequence& seq, double duration = 1.0,
                                  double stride = 0.1);

/// Position and orientation at time t: linear in position, slerp in
/// rotation. Throws ConfigError if t lies outside the poses or the
/// bracketing samples are more than one sample period apart.
PoseSample interpolate_pose(std::span<const PoseSample> gt, double t);

/// Rz(window.yaw)^T (p(t_end) - p(t_start)).
Vector3d compute_target(std::span<const PoseSample> gt, const Window& window);

}  // namespace gnio::imu
