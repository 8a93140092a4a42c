#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <variant>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "gnio/imu/types.hpp"

namespace gnio::imu {

/// Periodic vertical bob and forward surge laid over walking segments.
/// The frequency is snapped so a whole number of cycles fits the segment.
struct Gait {
  double bob = 0.0;    ///< peak-to-peak vertical amplitude, m
  double surge = 0.0;  ///< peak-to-peak forward amplitude, m
  double freq = 0.0;   ///< step frequency, Hz
};

struct Stationary {
  double T = 0.0;
};

struct ConstVel {
  Vector3d v = Vector3d::Zero();  ///< world-frame velocity, m/s
  double T = 0.0;
  Gait gait;
};

/// p(t) = A sin(2 pi f t) along a world axis.
struct Sinusoid {
  Vector3d axis = Vector3d::UnitX();
  double A = 0.0;
  double f = 0.0;
  double T = 0.0;
};

/// Horizontal circular arc; the body heading follows the path tangent.
struct ArcTurn {
  double radius = 1.0;
  double speed = 0.0;
  double T = 0.0;
  int dir = 1;  ///< +1 turns left (counter-clockwise), -1 turns right
  Gait gait;
};

using Segment = std::variant<Stationary, ConstVel, Sinusoid, ArcTurn>;

struct NoiseSpec {
  double sigma_g = 0.0;  ///< per-sample white gyro noise, rad/s
  double sigma_a = 0.0;  ///< per-sample white accel noise, m/s^2
  Vector3d bg = Vector3d::Zero();
  Vector3d ba = Vector3d::Zero();
};

struct SynthSpec {
  double rate = 100.0;
  std::uint64_t seed = 0;
  NoiseSpec noise;
  std::vector<Segment> segments;
  double yaw0 = 0.0;         ///< initial heading, rad
  double mount_roll = 0.0;   ///< constant sensor roll, rad
  double mount_pitch = 0.0;  ///< constant sensor pitch, rad
  Vector3d origin = Vector3d::Zero();
  double blend_time = 0.5;   ///< velocity blend at segment joins, s
};

/// Throws ConfigError for a non-physical spec.
void validate(const SynthSpec& spec);

/// Samples at t_k = k / rate for k = 0..round(T_total * rate).
Sequence synth_generate(const SynthSpec& spec);

/// Kinematic truth at time t: position, velocity, acceleration, rotation and
/// body angular rate, before noise and bias.
struct TruthState {
  Vector3d p, v, a;
  Matrix3d R;
  Vector3d omega_b;
};

/// Evaluates the trajectory of a spec at arbitrary time, for oracles.
class Trajectory {
 public:
  explicit Trajectory(const SynthSpec& spec);
  [[nodiscard]] TruthState at(double t) const;
  [[nodiscard]] double duration() const { return total_; }

 private:
  struct Entry {
    double t0;
    Vector3d p, v, a;
    double yaw, yaw_rate;
  };
  SynthSpec spec_;
  std::vector<Entry> entries_;
  Matrix3d mount_;
  double total_ = 0.0;
};

SynthSpec synth_spec_from_json(const nlohmann::json& j);
nlohmann::json synth_spec_to_json(const SynthSpec& spec);
SynthSpec load_synth_spec(const std::filesystem::path& path);

/// A random walk mixing standing, straight walking with gait and turns.
/// Speeds are drawn from [0.5, 1.6] m/s; each segment lasts 2 to 5 s.
SynthSpec random_walk_spec(double total_duration, double rate, std::uint64_t seed,
                           const NoiseSpec& noise = {});

}  // namespace gnio::imu
