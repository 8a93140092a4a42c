#pragma once

#include <cstddef>
#include <cstdint>
#include <deque>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Core>
#include <nlohmann/json_fwd.hpp>

#include "gnio/imu/types.hpp"

namespace gnio::ekf {

using Eigen::Matrix3d;
using Eigen::MatrixXd;
using Eigen::Vector3d;

/// Error-state layout of the core block.
inline constexpr Eigen::Index kTheta = 0, kVel = 3, kPos = 6, kBg = 9, kBa = 12;
inline constexpr Eigen::Index kCoreDim = 15;
inline constexpr Eigen::Index kCloneDim = 6;  ///< [dtheta_i, dp_i]

struct NavState {
  Vector3d p = Vector3d::Zero();
  Vector3d v = Vector3d::Zero();
  Matrix3d R = Matrix3d::Identity();
  Vector3d bg = Vector3d::Zero();
  Vector3d ba = Vector3d::Zero();
  double t = 0.0;
};

struct CloneState {
  Vector3d p = Vector3d::Zero();
  Matrix3d R = Matrix3d::Identity();
  double t = 0.0;
  std::size_t tag = 0;  ///< sample index the clone was taken at
};

/// Continuous-time densities; the discrete covariance over dt is density^2 * dt.
struct NoiseParams {
  double gyro_density = 1e-3;       ///< rad/s/sqrt(Hz)
  double accel_density = 1e-2;      ///< m/s^2/sqrt(Hz)
  double gyro_bias_rw = 1e-5;       ///< rad/s^2/sqrt(Hz)
  double accel_bias_rw = 1e-4;      ///< m/s^3/sqrt(Hz)
  double init_sigma_theta = 1e-3;   ///< rad
  double init_sigma_v = 1e-2;       ///< m/s
  double init_sigma_p = 1e-4;       ///< m
  double init_sigma_bg = 1e-3;      ///< rad/s
  double init_sigma_ba = 1e-2;      ///< m/s^2

  void validate() const;
};

struct FilterConfig {
  NoiseParams noise;
  std::size_t clone_capacity = 10;
  double window_s = 1.0;
  double stride_s = 0.1;
  double variance_floor = 1e-6;  ///< m^2, applied to the measurement covariance diagonal
  double max_condition = 1e12;
  Vector3d gravity{0.0, 0.0, -9.81};

  void validate() const;
};

FilterConfig filter_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const FilterConfig& c);

struct YawRotation {
  Matrix3d R_gamma = Matrix3d::Identity();
  double yaw = 0.0;
  bool degenerate = false;  ///< heading undefined (|pitch| at 90 deg); yaw taken as 0
};

YawRotation yaw_rotation(const Matrix3d& R);

/// d(yaw)/d(dtheta) for the perturbation R -> Exp(dtheta) R.
Eigen::RowVector3d yaw_jacobian(const Matrix3d& R);

struct UpdateResult {
  bool accepted = false;
  Vector3d residual = Vector3d::Zero();
  Matrix3d S = Matrix3d::Zero();
  double condition = 0.0;
};

/// Stochastic-cloning error-state EKF. Rotation errors are world-frame:
/// R_true = Exp(dtheta) R_est.
class Ekf {
 public:
  Ekf(const NavState& x0, const FilterConfig& config);
  Ekf(const NavState& x0, const MatrixXd& P0, const FilterConfig& config);

  /// Strapdown step with the measured sample held over dt.
  void propagate(const imu::ImuSample& m, double dt);

  /// Appends a clone of the current pose; marginalizes the oldest clone first
  /// when the buffer is full.
  void clone(std::size_t tag);
  void marginalize(std::size_t index);
  std::optional<std::size_t> find_clone(std::size_t tag) const;

  /// Predicted measurement R_gamma(clone)^T (p - p_clone).
  Vector3d predict_displacement(std::size_t clone_index) const;
  /// Jacobian of predict_displacement w.r.t. the full error state.
  Eigen::Matrix<double, 3, Eigen::Dynamic> measurement_jacobian(std::size_t clone_index) const;

  /// Relative-displacement update against a clone, which is marginalized
  /// afterwards whether or not the measurement was accepted.
  UpdateResult update(std::size_t clone_index, const Vector3d& d_hat, const Matrix3d& sigma);

  /// Applies an error-state correction to the nominal state and clones.
  void inject(const Eigen::VectorXd& dx);

  const NavState& state() const { return x_; }
  const MatrixXd& covariance() const { return P_; }
  const std::deque<CloneState>& clones() const { return clones_; }
  const FilterConfig& config() const { return cfg_; }

 private:
  FilterConfig cfg_;
  NavState x_;
  MatrixXd P_;
  std::deque<CloneState> clones_;
};

/// Initial covariance from the NoiseParams sigmas.
MatrixXd initial_covariance(const NoiseParams& noise);

struct Measurement {
  Vector3d d_hat = Vector3d::Zero();
  Matrix3d sigma = Matrix3d::Identity();
};

/// What a measurement source sees when the filter dispatches a window.
struct WindowRequest {
  std::size_t start = 0;  ///< first IMU sample of the window
  std::size_t end = 0;    ///< one past the last sample; the pose index of "now"
  double t_start = 0.0, t_end = 0.0;
  const imu::AlignedBlock* X = nullptr;  ///< aligned with the filter's orientations and bias
};

using MeasurementFn = std::function<std::optional<Measurement>(const WindowRequest&)>;

/// Ground-truth displacement in the true window-start yaw frame. With
/// noise_sigma > 0 a seeded N(0, noise_sigma^2) perturbation is added.
MeasurementFn oracle_measurements(const imu::Sequence& seq, double claimed_variance,
                                  double noise_sigma = 0.0, std::uint64_t seed = 0);

struct UpdateLog {
  double t = 0.0;
  std::size_t start = 0, end = 0;
  bool accepted = false;
  Vector3d d_hat = Vector3d::Zero();
  Vector3d residual = Vector3d::Zero();
  Vector3d sigma_diag = Vector3d::Zero();
};

struct FilterRun {
  std::vector<imu::PoseSample> poses;  ///< one per IMU sample
  std::vector<NavState> states;
  std::vector<UpdateLog> updates;
  double max_asymmetry = 0.0;
  double min_eigenvalue = 0.0;
  MatrixXd core_covariance;  ///< core block after the last sample
};

/// Initial state from the first ground-truth pose and the finite-difference
/// velocity of the first three poses, biases zero.
NavState initial_state(const imu::Sequence& seq);

/// Full loop: propagate every sample, clone at window starts, and every
/// stride ask `measure` for a displacement over the latest window.
/// An empty `measure` runs pure dead reckoning. With `track_spectrum`, the
/// covariance eigenvalues are checked after every update and marginalization.
FilterRun run_filter(const imu::Sequence& seq, const MeasurementFn& measure,
                     const FilterConfig& config, bool track_spectrum = false);

}  // namespace gnio::ekf
