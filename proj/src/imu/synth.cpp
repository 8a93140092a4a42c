#include "gnio/imu/synth.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <random>

#include <nlohmann/json.hpp>

#include "gnio/error.hpp"
#include "gnio/imu/rotation.hpp"

namespace gnio::imu {
using nlohmann::json;

namespace {

constexpr double kPi = std::numbers::pi;
const Vector3d kGravity(0.0, 0.0, -9.81);

struct Kin {
  Vector3d p = Vector3d::Zero(), v = Vector3d::Zero(), a = Vector3d::Zero();
  double yaw = 0.0, yaw_rate = 0.0;
};

double segment_duration(const Segment& s) {
  return std::visit([](const auto& x) { return x.T; }, s);
}

double snapped_freq(const Gait& g, double T) {
  return std::max(1.0, std::round(g.freq * T)) / T;
}

// sin^4(w t / 2) and its first two derivatives: one cycle per period with
// zero velocity and acceleration at every cycle boundary.
struct Bump {
  double f, df, ddf;
};
Bump bump(double w, double t) {
  const double s = std::sin(0.5 * w * t), c = std::cos(0.5 * w * t);
  return {s * s * s * s, 2.0 * w * s * s * s * c, w * w * (3.0 * s * s * c * c - s * s * s * s)};
}

// Gait displacement: vertical bob plus surge along a horizontal unit u(t)
// whose heading turns at the constant rate psi_dot.
void add_gait(Kin& k, const Gait& g, double T, double tau, double heading, double psi_dot) {
  if (g.freq <= 0.0 || (g.bob <= 0.0 && g.surge <= 0.0)) return;
  const double w = 2.0 * kPi * snapped_freq(g, T);
  const Bump b = bump(w, tau);
  k.p.z() += g.bob * b.f;
  k.v.z() += g.bob * b.df;
  k.a.z() += g.bob * b.ddf;

  const Bump s = bump(2.0 * w, tau);
  const Vector3d u(std::cos(heading), std::sin(heading), 0.0);
  const Vector3d du = psi_dot * Vector3d(-u.y(), u.x(), 0.0);
  const Vector3d ddu = -psi_dot * psi_dot * u;
  k.p += g.surge * s.f * u;
  k.v += g.surge * (s.df * u + s.f * du);
  k.a += g.surge * (s.ddf * u + 2.0 * s.df * du + s.f * ddu);
}

// Nominal kinematics of a segment at local time tau, relative to an entry
// position at the origin and entry heading yaw_e.
Kin nominal(const Segment& seg, double tau, double yaw_e) {
  Kin k;
  k.yaw = yaw_e;
  std::visit(
      [&](const auto& s) {
        using S = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<S, ConstVel>) {
          k.p = s.v * tau;
          k.v = s.v;
          const double heading =
              std::hypot(s.v.x(), s.v.y()) > 1e-12 ? std::atan2(s.v.y(), s.v.x()) : yaw_e;
          add_gait(k, s.gait, s.T, tau, heading, 0.0);
        } else if constexpr (std::is_same_v<S, Sinusoid>) {
          const double w = 2.0 * kPi * s.f;
          const Vector3d axis = s.axis.normalized();
          k.p = s.A * std::sin(w * tau) * axis;
          k.v = s.A * w * std::cos(w * tau) * axis;
          k.a = -s.A * w * w * std::sin(w * tau) * axis;
        } else if constexpr (std::is_same_v<S, ArcTurn>) {
          const double d = static_cast<double>(s.dir);
          const double rate = d * s.speed / s.radius;
          const double psi = yaw_e + rate * tau;
          const Vector3d r0(std::sin(yaw_e), -std::cos(yaw_e), 0.0);
          const Vector3d r(std::sin(psi), -std::cos(psi), 0.0);
          k.p = d * s.radius * (r - r0);
          k.v = s.speed * Vector3d(std::cos(psi), std::sin(psi), 0.0);
          k.a = s.speed * rate * Vector3d(-std::sin(psi), std::cos(psi), 0.0);
          k.yaw = psi;
          k.yaw_rate = rate;
          add_gait(k, s.gait, s.T, tau, psi, rate);
        }
      },
      seg);
  return k;
}

// Ramp (1 - cos(pi x)) / 2 on [0, 1]: the share of the entry mismatch that
// has been removed after x of the blend window.
struct Blend {
  double pos, vel, acc;  // multipliers of the mismatch for p, v, a
};
Blend blend(double tau, double tb) {
  if (tau >= tb) return {0.5 * tb, 0.0, 0.0};
  const double x = tau / tb;
  return {tb * (0.5 * x + std::sin(kPi * x) / (2.0 * kPi)), 0.5 * (1.0 + std::cos(kPi * x)),
          -0.5 * kPi * std::sin(kPi * x) / tb};
}

// Removes an entry acceleration mismatch: phi(x) = x^2/2 - 2x^3/3 + x^4/4
// has phi''(0) = 1 and phi'(1) = phi''(1) = 0.
Blend accel_blend(double tau, double tb) {
  if (tau >= tb) return {tb * tb / 12.0, 0.0, 0.0};
  const double x = tau / tb;
  return {tb * tb * x * x * (0.5 - 2.0 * x / 3.0 + 0.25 * x * x), tb * x * (1.0 - x) * (1.0 - x),
          (1.0 - x) * (1.0 - 3.0 * x)};
}

}  // namespace

void validate(const SynthSpec& spec) {
  if (spec.rate != 100.0 && spec.rate != 200.0)
    throw ConfigError("synth: rate must be 100 or 200 Hz, got " + std::to_string(spec.rate));
  if (spec.segments.empty()) throw ConfigError("synth: no segments");
  if (!(spec.blend_time > 0.0)) throw ConfigError("synth: blend_time must be positive");
  const auto& n = spec.noise;
  if (!(n.sigma_g >= 0.0) || !(n.sigma_a >= 0.0) || !n.bg.allFinite() || !n.ba.allFinite())
    throw ConfigError("synth: noise must be finite and non-negative");
  double total = 0.0;
  for (std::size_t i = 0; i < spec.segments.size(); ++i) {
    const std::string where = "synth: segment " + std::to_string(i) + ": ";
    const double T = segment_duration(spec.segments[i]);
    if (!(T > 0.0) || !std::isfinite(T)) throw ConfigError(where + "duration must be positive");
    total += T;
    auto check_gait = [&](const Gait& g) {
      if (!(g.bob >= 0.0) || !(g.surge >= 0.0) || !(g.freq >= 0.0))
        throw ConfigError(where + "gait values must be non-negative");
    };
    std::visit(
        [&](const auto& s) {
          using S = std::decay_t<decltype(s)>;
          if constexpr (std::is_same_v<S, ConstVel>) {
            if (!s.v.allFinite()) throw ConfigError(where + "velocity must be finite");
            check_gait(s.gait);
          } else if constexpr (std::is_same_v<S, Sinusoid>) {
            if (!(s.axis.norm() > 0.0)) throw ConfigError(where + "axis must be non-zero");
            if (!(s.f >= 0.0) || !std::isfinite(s.A)) throw ConfigError(where + "bad A or f");
          } else if constexpr (std::is_same_v<S, ArcTurn>) {
            if (!(s.radius > 0.0)) throw ConfigError(where + "radius must be positive");
            if (!(s.speed >= 0.0)) throw ConfigError(where + "speed must be non-negative");
            if (s.dir != 1 && s.dir != -1) throw ConfigError(where + "dir must be +1 or -1");
            check_gait(s.gait);
          }
        },
        spec.segments[i]);
  }
  const double n_samples = total * spec.rate;
  if (std::abs(n_samples - std::round(n_samples)) > 1e-6)
    throw ConfigError("synth: total duration x rate is not an integer");
}

Trajectory::Trajectory(const SynthSpec& spec) : spec_(spec) {
  validate(spec_);
  mount_ = rot_y(spec_.mount_pitch) * rot_x(spec_.mount_roll);
  Entry e{0.0, spec_.origin, Vector3d::Zero(), Vector3d::Zero(), spec_.yaw0, 0.0};
  const Kin k0 = nominal(spec_.segments.front(), 0.0, spec_.yaw0);
  e.v = k0.v;
  e.a = k0.a;
  e.yaw_rate = k0.yaw_rate;
  for (const auto& seg : spec_.segments) {
    entries_.push_back(e);
    const double T = segment_duration(seg);
    total_ += T;
    const TruthState end = at(total_);
    const Kin kn = nominal(seg, T, e.yaw);
    const Kin k0s = nominal(seg, 0.0, e.yaw);
    const Blend b = blend(T, std::min(spec_.blend_time, T));
    const double dw = e.yaw_rate - k0s.yaw_rate;
    Entry next{total_, end.p, end.v, end.a, kn.yaw + dw * b.pos, kn.yaw_rate + dw * b.vel};
    e = next;
  }
}

TruthState Trajectory::at(double t) const {
  auto it = std::upper_bound(entries_.begin(), entries_.end(), t,
                             [](double v, const Entry& e) { return v < e.t0; });
  const std::size_t idx = it == entries_.begin() ? 0 : static_cast<std::size_t>(it - entries_.begin()) - 1;
  const Entry& e = entries_[idx];
  const Segment& seg = spec_.segments[idx];
  const double T = segment_duration(seg);
  const double tau = std::clamp(t - e.t0, 0.0, T);

  const Kin k0 = nominal(seg, 0.0, e.yaw);
  const Kin k = nominal(seg, tau, e.yaw);
  const double tb = std::min(spec_.blend_time, T);
  const Blend b = blend(tau, tb);
  const Blend ba = accel_blend(tau, tb);
  const Vector3d dv = e.v - k0.v;
  const Vector3d da = e.a - k0.a;
  const double dw = e.yaw_rate - k0.yaw_rate;

  TruthState s;
  s.p = e.p + (k.p - k0.p) + dv * b.pos + da * ba.pos;
  s.v = k.v + dv * b.vel + da * ba.vel;
  s.a = k.a + dv * b.acc + da * ba.acc;
  const double yaw = k.yaw + dw * b.pos;
  const double yaw_rate = k.yaw_rate + dw * b.vel;
  s.R = rot_z(yaw) * mount_;
  s.omega_b = yaw_rate * mount_.transpose().col(2);
  return s;
}

Sequence synth_generate(const SynthSpec& spec) {
  const Trajectory traj(spec);
  const auto n = static_cast<std::size_t>(std::llround(traj.duration() * spec.rate));
  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  const auto& noise = spec.noise;

  Sequence seq;
  seq.rate = spec.rate;
  seq.bias_gt = Bias{noise.bg, noise.ba};
  seq.imu.reserve(n + 1);
  seq.gt.reserve(n + 1);
  for (std::size_t k = 0; k <= n; ++k) {
    const double t = static_cast<double>(k) / spec.rate;
    const TruthState s = traj.at(t);
    ImuSample m;
    m.t = t;
    m.gyro = s.omega_b + noise.bg;
    m.accel = s.R.transpose() * (s.a - kGravity) + noise.ba;
    for (int i = 0; i < 3; ++i) m.gyro[i] += noise.sigma_g * gauss(rng);
    for (int i = 0; i < 3; ++i) m.accel[i] += noise.sigma_a * gauss(rng);
    seq.imu.push_back(m);
    seq.gt.push_back({t, s.p, Quaterniond(s.R).normalized()});
  }
  return seq;
}

namespace {

double num(const json& j, const char* key) {
  if (!j.contains(key)) throw ConfigError(std::string("synth: missing field '") + key + "'");
  if (!j[key].is_number()) throw ConfigError(std::string("synth: '") + key + "' must be a number");
  return j[key].get<double>();
}

Vector3d vec3(const json& j, const std::string& what) {
  if (!j.is_array() || j.size() != 3) throw ConfigError("synth: " + what + " must be a 3-vector");
  Vector3d v;
  for (int i = 0; i < 3; ++i) {
    if (!j[static_cast<std::size_t>(i)].is_number())
      throw ConfigError("synth: " + what + " must be numeric");
    v[i] = j[static_cast<std::size_t>(i)].get<double>();
  }
  return v;
}

void check_keys(const json& j, std::initializer_list<const char*> allowed, const std::string& what) {
  for (const auto& [key, _] : j.items()) {
    if (std::none_of(allowed.begin(), allowed.end(), [&](const char* a) { return key == a; })) {
      std::string list;
      for (const char* a : allowed) list += (list.empty() ? "" : ", ") + std::string(a);
      throw ConfigError("synth: unknown field '" + key + "' in " + what + " (valid: " + list + ")");
    }
  }
}

Gait gait_from(const json& j) {
  Gait g;
  if (!j.contains("gait")) return g;
  const auto& gj = j["gait"];
  check_keys(gj, {"bob", "surge", "freq"}, "gait");
  g.bob = gj.value("bob", 0.0);
  g.surge = gj.value("surge", 0.0);
  g.freq = gj.value("freq", 0.0);
  return g;
}

json gait_to(const Gait& g) { return {{"bob", g.bob}, {"surge", g.surge}, {"freq", g.freq}}; }

json vec_to(const Vector3d& v) { return json::array({v.x(), v.y(), v.z()}); }

Segment segment_from(const json& j) {
  if (!j.is_object() || !j.contains("kind") || !j["kind"].is_string())
    throw ConfigError("synth: each segment needs a string 'kind'");
  const auto kind = j["kind"].get<std::string>();
  if (kind == "stationary") {
    check_keys(j, {"kind", "T"}, kind);
    return Stationary{num(j, "T")};
  }
  if (kind == "const_vel") {
    check_keys(j, {"kind", "v", "T", "gait"}, kind);
    if (!j.contains("v")) throw ConfigError("synth: const_vel needs 'v'");
    return ConstVel{vec3(j["v"], "v"), num(j, "T"), gait_from(j)};
  }
  if (kind == "sinusoid") {
    check_keys(j, {"kind", "axis", "A", "f", "T"}, kind);
    Vector3d axis = Vector3d::UnitX();
    if (j.contains("axis")) {
      const auto& a = j["axis"];
      if (a.is_string()) {
        const auto s = a.get<std::string>();
        if (s == "x") axis = Vector3d::UnitX();
        else if (s == "y") axis = Vector3d::UnitY();
        else if (s == "z") axis = Vector3d::UnitZ();
        else throw ConfigError("synth: sinusoid axis must be x, y, z or a 3-vector");
      } else {
        axis = vec3(a, "axis");
      }
    }
    return Sinusoid{axis, num(j, "A"), num(j, "f"), num(j, "T")};
  }
  if (kind == "arc_turn") {
    check_keys(j, {"kind", "radius", "speed", "T", "dir", "gait"}, kind);
    int dir = 1;
    if (j.contains("dir")) {
      const auto& d = j["dir"];
      if (d.is_string()) {
        const auto s = d.get<std::string>();
        if (s == "left") dir = 1;
        else if (s == "right") dir = -1;
        else throw ConfigError("synth: arc_turn dir must be left or right");
      } else {
        dir = d.get<int>();
      }
    }
    return ArcTurn{num(j, "radius"), num(j, "speed"), num(j, "T"), dir, gait_from(j)};
  }
  throw ConfigError("synth: unknown segment kind '" + kind + "'");
}

}  // namespace

SynthSpec synth_spec_from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("synth: spec must be a JSON object");
  check_keys(j, {"rate", "seed", "noise", "segments", "yaw0", "mount", "origin", "blend_time"},
             "spec");
  SynthSpec s;
  try {
    s.rate = num(j, "rate");
    s.seed = j.value("seed", std::uint64_t{0});
    if (j.contains("noise")) {
      const auto& n = j["noise"];
      check_keys(n, {"sigma_g", "sigma_a", "bg", "ba"}, "noise");
      s.noise.sigma_g = n.value("sigma_g", 0.0);
      s.noise.sigma_a = n.value("sigma_a", 0.0);
      if (n.contains("bg")) s.noise.bg = vec3(n["bg"], "noise.bg");
      if (n.contains("ba")) s.noise.ba = vec3(n["ba"], "noise.ba");
    }
    if (!j.contains("segments") || !j["segments"].is_array())
      throw ConfigError("synth: 'segments' must be an array");
    for (const auto& seg : j["segments"]) s.segments.push_back(segment_from(seg));
    s.yaw0 = j.value("yaw0", 0.0);
    if (j.contains("mount")) {
      check_keys(j["mount"], {"roll", "pitch"}, "mount");
      s.mount_roll = j["mount"].value("roll", 0.0);
      s.mount_pitch = j["mount"].value("pitch", 0.0);
    }
    if (j.contains("origin")) s.origin = vec3(j["origin"], "origin");
    s.blend_time = j.value("blend_time", 0.5);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("synth: ") + e.what());
  }
  validate(s);
  return s;
}

json synth_spec_to_json(const SynthSpec& s) {
  json segs = json::array();
  for (const auto& seg : s.segments) {
    std::visit(
        [&](const auto& x) {
          using S = std::decay_t<decltype(x)>;
          if constexpr (std::is_same_v<S, Stationary>) {
            segs.push_back({{"kind", "stationary"}, {"T", x.T}});
          } else if constexpr (std::is_same_v<S, ConstVel>) {
            segs.push_back({{"kind", "const_vel"}, {"v", vec_to(x.v)}, {"T", x.T}, {"gait", gait_to(x.gait)}});
          } else if constexpr (std::is_same_v<S, Sinusoid>) {
            segs.push_back({{"kind", "sinusoid"}, {"axis", vec_to(x.axis)}, {"A", x.A}, {"f", x.f}, {"T", x.T}});
          } else {
            segs.push_back({{"kind", "arc_turn"}, {"radius", x.radius}, {"speed", x.speed},
                            {"T", x.T}, {"dir", x.dir}, {"gait", gait_to(x.gait)}});
          }
        },
        seg);
  }
  return {{"rate", s.rate},
          {"seed", s.seed},
          {"noise", {{"sigma_g", s.noise.sigma_g}, {"sigma_a", s.noise.sigma_a},
                     {"bg", vec_to(s.noise.bg)}, {"ba", vec_to(s.noise.ba)}}},
          {"segments", segs},
          {"yaw0", s.yaw0},
          {"mount", {{"roll", s.mount_roll}, {"pitch", s.mount_pitch}}},
          {"origin", vec_to(s.origin)},
          {"blend_time", s.blend_time}};
}

SynthSpec load_synth_spec(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  return synth_spec_from_json(j);
}

SynthSpec random_walk_spec(double total_duration, double rate, std::uint64_t seed,
                           const NoiseSpec& noise) {
  SynthSpec spec;
  spec.rate = rate;
  spec.seed = seed;
  spec.noise = noise;
  std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ULL);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto uniform = [&](double lo, double hi) { return lo + (hi - lo) * unit(rng); };
  auto tenths = [&](double lo, double hi) { return std::round(uniform(lo, hi) * 10.0) / 10.0; };

  const auto total_ticks = static_cast<long>(std::llround(total_duration * 10.0));
  if (total_ticks < 1) throw ConfigError("random_walk_spec: duration too short");
  spec.yaw0 = uniform(-kPi, kPi);
  spec.mount_roll = uniform(-0.15, 0.15);
  spec.mount_pitch = uniform(-0.15, 0.15);

  // Heading is tracked with the same blend rule the generator applies.
  double heading = spec.yaw0, yaw_rate = 0.0;
  const double tb = spec.blend_time;
  long used = 0;
  bool first = true;
  while (used < total_ticks) {
    double T = first ? tenths(1.0, 2.0) : tenths(2.0, 5.0);
    long ticks = std::min(static_cast<long>(std::llround(T * 10.0)), total_ticks - used);
    T = static_cast<double>(ticks) / 10.0;
    const double p = unit(rng);
    const double speed = uniform(0.5, 1.6);
    const Gait gait{0.03 + 0.02 * speed, 0.02 * speed, 1.4 + 0.4 * speed};
    double nominal_rate = 0.0, nominal_turn = 0.0;
    if (first || p < 0.25) {
      spec.segments.emplace_back(Stationary{T});
    } else if (p < 0.7) {
      const Vector3d v = speed * Vector3d(std::cos(heading), std::sin(heading), 0.0);
      spec.segments.emplace_back(ConstVel{v, T, gait});
    } else {
      const double radius = uniform(1.5, 4.0);
      const int dir = unit(rng) < 0.5 ? 1 : -1;
      spec.segments.emplace_back(ArcTurn{radius, speed, T, dir, gait});
      nominal_rate = dir * speed / radius;
      nominal_turn = nominal_rate * T;
    }
    const double b = std::min(tb, T);
    const double dw = yaw_rate - nominal_rate;
    heading += nominal_turn + dw * 0.5 * b;
    yaw_rate = nominal_rate;
    used += ticks;
    first = false;
  }
  return spec;
}

}  // namespace gnio::imu
