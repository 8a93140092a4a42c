#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace gnio {

using Eigen::Matrix3d;
using Eigen::Quaterniond;
using Eigen::Vector3d;

Matrix3d skew(const Vector3d& v);

/// Rodrigues exponential of a rotation vector.
Matrix3d so3_exp(const Vector3d& phi);
Vector3d so3_log(const Matrix3d& R);

/// Rotation about world z.
Matrix3d rot_z(double angle);
Matrix3d rot_x(double angle);
Matrix3d rot_y(double angle);

/// Heading of a body-to-world rotation in the z-y-x convention,
/// atan2(R(1,0), R(0,0)).
double yaw_of(const Matrix3d& R);

/// Horizontal norm sqrt(R00^2 + R10^2) = |cos(pitch)|; zero at gimbal lock.
double heading_norm(const Matrix3d& R);

/// Rz(yaw(R))^T R: the roll/pitch part of R with heading removed.
Matrix3d remove_yaw(const Matrix3d& R);

/// max |R R^T - I| over entries.
double orthonormality_error(const Matrix3d& R);

/// Nearest rotation via quaternion normalization.
Matrix3d reorthonormalize(const Matrix3d& R);

/// Wraps an angle to (-pi, pi].
double wrap_angle(double a);

}  // namespace gnio
