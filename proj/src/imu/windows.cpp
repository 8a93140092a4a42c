#include "gnio/imu/windows.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "gnio/error.hpp"
#include "gnio/imu/rotation.hpp"

namespace gnio::imu {
namespace {

constexpr double kOrthoTol = 1e-6;
constexpr double kJitter = 1e-6;

void check_rotation(const Matrix3d& R) {
  if (!R.allFinite() || orthonormality_error(R) > kOrthoTol)
    throw ConfigError("gravity_align: rotation is not orthonormal");
}

void check_bias(const Bias& b) {
  if (!b.gyro.allFinite() || !b.accel.allFinite())
    throw ConfigError("gravity_align: bias is not finite");
}

void write_row(AlignedBlock& X, Eigen::Index i, const Matrix3d& R, const ImuSample& s,
               const Bias& b) {
  X.block<1, 3>(i, 0) = (R * (s.accel - b.accel)).transpose();
  X.block<1, 3>(i, 3) = (R * (s.gyro - b.gyro)).transpose();
}

std::size_t to_samples(double seconds, double rate, const char* what) {
  const double n = seconds * rate;
  const double r = std::round(n);
  if (r < 1.0 || std::abs(n - r) > 1e-9 * std::max(1.0, r))
    throw ConfigError(std::string("window: ") + what + " x rate = " + std::to_string(n) +
                      " is not a positive integer");
  return static_cast<std::size_t>(r);
}

}  // namespace

AlignedBlock gravity_align(std::span<const ImuSample> samples, const Matrix3d& R_wb,
                           const Bias& bias) {
  check_rotation(R_wb);
  check_bias(bias);
  const Matrix3d R_align = remove_yaw(R_wb);
  AlignedBlock X(static_cast<Eigen::Index>(samples.size()), 6);
  for (std::size_t i = 0; i < samples.size(); ++i)
    write_row(X, static_cast<Eigen::Index>(i), R_align, samples[i], bias);
  return X;
}

AlignedBlock gravity_align(std::span<const ImuSample> samples,
                           std::span<const Matrix3d> R_wb, double ref_yaw, const Bias& bias) {
  if (samples.size() != R_wb.size())
    throw ShapeError("gravity_align: " + std::to_string(samples.size()) + " samples but " +
                     std::to_string(R_wb.size()) + " rotations");
  check_bias(bias);
  const Matrix3d Rz_t = rot_z(ref_yaw).transpose();
  AlignedBlock X(static_cast<Eigen::Index>(samples.size()), 6);
  for (std::size_t i = 0; i < samples.size(); ++i) {
    check_rotation(R_wb[i]);
    write_row(X, static_cast<Eigen::Index>(i), Rz_t * R_wb[i], samples[i], bias);
  }
  return X;
}

WindowGeometry window_geometry(double rate, std::size_t n_samples, double duration,
                               double stride) {
  if (n_samples == 0) throw ConfigError("window_stream: empty sequence");
  WindowGeometry g;
  g.N = to_samples(duration, rate, "duration");
  g.S = to_samples(stride, rate, "stride");
  if (n_samples < g.N + 1)
    throw ConfigError("window_stream: sequence of " + std::to_string(n_samples) +
                      " samples is shorter than one window of " + std::to_string(g.N));
  g.count = (n_samples - 1 - g.N) / g.S + 1;
  return g;
}

std::vector<Window> window_stream(const Sequence& seq, double duration, double stride) {
  if (seq.imu.empty()) throw ConfigError("window_stream: empty sequence");
  if (seq.gt.size() != seq.imu.size())
    throw ConfigError("window_stream: ground truth does not share the IMU timeline");
  const WindowGeometry g = window_geometry(seq.rate, seq.imu.size(), duration, stride);
  const Bias bias = seq.bias_gt.value_or(Bias{});

  std::vector<Matrix3d> R(seq.gt.size());
  for (std::size_t i = 0; i < R.size(); ++i) R[i] = seq.gt[i].rotation();

  std::vector<Window> out;
  out.reserve(g.count);
  const std::span<const ImuSample> imu(seq.imu);
  const std::span<const Matrix3d> rot(R);
  for (std::size_t k = 0; k < g.count; ++k) {
    const std::size_t s = k * g.S;
    Window w;
    w.start_index = s;
    w.t_start = seq.imu[s].t;
    w.t_end = seq.imu[s + g.N].t;
    w.yaw = yaw_of(R[s]);
    w.X = gravity_align(imu.subspan(s, g.N), rot.subspan(s, g.N), w.yaw, bias);
    w.d_gt = compute_target(seq.gt, w);
    for (std::size_t i = s; i < s + g.N; ++i) w.path_length += (seq.gt[i + 1].p - seq.gt[i].p).norm();
    out.push_back(std::move(w));
  }
  return out;
}

PoseSample interpolate_pose(std::span<const PoseSample> gt, double t) {
  if (gt.empty()) throw ConfigError("interpolate_pose: no ground truth");
  if (t < gt.front().t - kJitter || t > gt.back().t + kJitter)
    throw ConfigError("interpolate_pose: t = " + std::to_string(t) +
                      " outside ground truth [" + std::to_string(gt.front().t) + ", " +
                      std::to_string(gt.back().t) + "]");
  if (gt.size() == 1) return gt.front();
  const double period = (gt.back().t - gt.front().t) / static_cast<double>(gt.size() - 1);

  auto hi = std::lower_bound(gt.begin(), gt.end(), t,
                             [](const PoseSample& p, double v) { return p.t < v; });
  if (hi == gt.end()) hi = gt.end() - 1;
  if (std::abs(hi->t - t) <= 1e-12) return *hi;
  if (hi == gt.begin()) return *hi;
  const auto lo = hi - 1;
  const double gap = hi->t - lo->t;
  if (gap > period + kJitter)
    throw ConfigError("interpolate_pose: gap of " + std::to_string(gap) + " s at t = " +
                      std::to_string(t) + " exceeds the sample period");
  const double a = (t - lo->t) / gap;
  PoseSample out;
  out.t = t;
  out.p = (1.0 - a) * lo->p + a * hi->p;
  out.q = lo->q.slerp(a, hi->q).normalized();
  return out;
}

Vector3d compute_target(std::span<const PoseSample> gt, const Window& window) {
  const PoseSample a = interpolate_pose(gt, window.t_start);
  const PoseSample b = interpolate_pose(gt, window.t_end);
  return rot_z(window.yaw).transpose() * (b.p - a.p);
}

}  // namespace gnio::imu
