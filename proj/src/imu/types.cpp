#include "gnio/imu/types.hpp"

#include <cmath>
#include <string>

#include "gnio/error.hpp"

namespace gnio::imu {
namespace {

constexpr double kJitter = 1e-6;
constexpr double kUnitTol = 1e-9;

void check_timeline(double rate, std::size_t i, double t, const char* what) {
  const double expected = static_cast<double>(i) / rate;
  if (!std::isfinite(t) || std::abs(t - expected) > kJitter)
    throw ConfigError(std::string(what) + " sample " + std::to_string(i) + " at t = " +
                      std::to_string(t) + " is off the " + std::to_string(rate) +
                      " Hz grid");
}

}  // namespace

double Sequence::duration() const {
  return imu.size() < 2 ? 0.0 : imu.back().t - imu.front().t;
}

void Sequence::validate() const {
  if (!(rate > 0.0) || !std::isfinite(rate)) throw ConfigError("sequence: invalid rate");
  if (imu.empty()) throw ConfigError("sequence: no IMU samples");
  const double t0 = imu.front().t;
  for (std::size_t i = 0; i < imu.size(); ++i) {
    const auto& s = imu[i];
    check_timeline(rate, i, s.t - t0, "imu");
    if (!s.gyro.allFinite() || !s.accel.allFinite())
      throw ConfigError("sequence: non-finite IMU sample " + std::to_string(i));
  }
  if (!gt.empty() && gt.size() != imu.size())
    throw ConfigError("sequence: " + std::to_string(gt.size()) + " poses for " +
                      std::to_string(imu.size()) + " IMU samples");
  for (std::size_t i = 0; i < gt.size(); ++i) {
    const auto& p = gt[i];
    if (std::abs(p.t - imu[i].t) > kJitter)
      throw ConfigError("sequence: pose " + std::to_string(i) + " is off the IMU timeline");
    if (!p.p.allFinite() || !p.q.coeffs().allFinite())
      throw ConfigError("sequence: non-finite pose " + std::to_string(i));
    if (std::abs(p.q.norm() - 1.0) > kUnitTol)
      throw ConfigError("sequence: pose " + std::to_string(i) + " quaternion is not unit");
  }
}

}  // namespace gnio::imu
