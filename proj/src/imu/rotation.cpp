#include "gnio/imu/rotation.hpp"

#include <cmath>
#include <numbers>

namespace gnio {

Matrix3d skew(const Vector3d& v) {
  Matrix3d S;
  S << 0.0, -v.z(), v.y(), v.z(), 0.0, -v.x(), -v.y(), v.x(), 0.0;
  return S;
}

Matrix3d so3_exp(const Vector3d& phi) {
  const double theta = phi.norm();
  const Matrix3d K = skew(phi);
  if (theta < 1e-8) return Matrix3d::Identity() + K + 0.5 * K * K;
  return Matrix3d::Identity() + (std::sin(theta) / theta) * K +
         ((1.0 - std::cos(theta)) / (theta * theta)) * K * K;
}

Vector3d so3_log(const Matrix3d& R) {
  const Eigen::AngleAxisd aa(R);
  return aa.angle() * aa.axis();
}

Matrix3d rot_z(double a) {
  const double c = std::cos(a), s = std::sin(a);
  Matrix3d R;
  R << c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0;
  return R;
}

Matrix3d rot_x(double a) {
  const double c = std::cos(a), s = std::sin(a);
  Matrix3d R;
  R << 1.0, 0.0, 0.0, 0.0, c, -s, 0.0, s, c;
  return R;
}

Matrix3d rot_y(double a) {
  const double c = std::cos(a), s = std::sin(a);
  Matrix3d R;
  R << c, 0.0, s, 0.0, 1.0, 0.0, -s, 0.0, c;
  return R;
}

double yaw_of(const Matrix3d& R) { return std::atan2(R(1, 0), R(0, 0)); }

double heading_norm(const Matrix3d& R) { return std::hypot(R(0, 0), R(1, 0)); }

Matrix3d remove_yaw(const Matrix3d& R) { return rot_z(yaw_of(R)).transpose() * R; }

double orthonormality_error(const Matrix3d& R) {
  return (R * R.transpose() - Matrix3d::Identity()).cwiseAbs().maxCoeff();
}

Matrix3d reorthonormalize(const Matrix3d& R) {
  return Quaterniond(R).normalized().toRotationMatrix();
}

double wrap_angle(double a) {
  constexpr double kPi = std::numbers::pi;
  a = std::fmod(a + kPi, 2.0 * kPi);
  if (a <= 0.0) a += 2.0 * kPi;
  return a - kPi;
}

}  // namespace gnio
