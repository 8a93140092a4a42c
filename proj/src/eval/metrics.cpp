#include "gnio/eval/metrics.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <limits>

#include <Eigen/Geometry>
#include <nlohmann/json.hpp>

#include "gnio/error.hpp"
#include "gnio/imu/io.hpp"
#include "gnio/imu/rotation.hpp"

namespace gnio::eval {
namespace fs = std::filesystem;
using Eigen::Matrix3d;
using Eigen::Vector3d;

void validate_trajectory(std::span<const PoseSample> traj, const std::string& what) {
  for (std::size_t i = 1; i < traj.size(); ++i)
    if (!(traj[i].t > traj[i - 1].t))
      throw ConfigError(what + ": timestamps not strictly increasing at sample " +
                        std::to_string(i));
}

namespace {

PoseSample interpolate(std::span<const PoseSample> traj, double t) {
  auto hi = std::lower_bound(traj.begin(), traj.end(), t,
                             [](const PoseSample& p, double v) { return p.t < v; });
  if (hi == traj.end()) return traj.back();
  if (hi->t == t || hi == traj.begin()) return *hi;
  const auto lo = hi - 1;
  const double a = (t - lo->t) / (hi->t - lo->t);
  PoseSample out;
  out.t = t;
  out.p = (1.0 - a) * lo->p + a * hi->p;
  out.q = lo->q.slerp(a, hi->q).normalized();
  return out;
}

void require_same_length(std::span<const PoseSample> a, std::span<const PoseSample> b) {
  if (a.empty() || b.empty()) throw ConfigError("eval: empty trajectory");
  if (a.size() != b.size())
    throw ShapeError("eval: length mismatch " + std::to_string(a.size()) + " vs " +
                     std::to_string(b.size()));
}

Trajectory apply(std::span<const PoseSample> traj, const Matrix3d& R, const Vector3d& t) {
  Trajectory out(traj.begin(), traj.end());
  const Eigen::Quaterniond qR(R);
  for (auto& s : out) {
    s.p = R * s.p + t;
    s.q = (qR * s.q).normalized();
  }
  return out;
}

std::string fmt(double v) {
  std::array<char, 32> buf{};
  std::snprintf(buf.data(), buf.size(), "%.2f", v);
  std::string s(buf.data());
  return s == "-0.00" ? "0.00" : s;
}

std::string escape_xml(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

std::string colour_for(const std::string& name, std::size_t i) {
  if (name == "gt") return "#000000";
  if (name == "estimate") return "#1f77b4";
  if (name == "dead_reckoning") return "#d62728";
  static constexpr std::array<const char*, 5> palette{"#2ca02c", "#9467bd", "#ff7f0e", "#8c564b",
                                                      "#17becf"};
  return palette[i % palette.size()];
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("write failed: " + path.string());
}

}  // namespace

Synced synchronize(std::span<const PoseSample> est, std::span<const PoseSample> gt) {
  if (est.empty() || gt.empty()) throw ConfigError("eval: empty trajectory");
  validate_trajectory(est, "estimate");
  validate_trajectory(gt, "ground truth");
  Synced s;
  for (const auto& g : gt) {
    if (g.t < est.front().t || g.t > est.back().t) continue;
    s.gt.push_back(g);
    s.est.push_back(interpolate(est, g.t));
  }
  if (s.gt.empty()) throw ConfigError("eval: estimate and ground truth do not overlap in time");
  return s;
}

Trajectory align_first_pose(std::span<const PoseSample> est, std::span<const PoseSample> gt) {
  if (est.empty() || gt.empty()) throw ConfigError("eval: empty trajectory");
  const double dyaw = wrap_angle(yaw_of(gt.front().rotation()) - yaw_of(est.front().rotation()));
  const Matrix3d R = rot_z(dyaw);
  return apply(est, R, gt.front().p - R * est.front().p);
}

Trajectory align_umeyama(std::span<const PoseSample> est, std::span<const PoseSample> gt) {
  require_same_length(est, gt);
  Eigen::Matrix3Xd src(3, est.size()), dst(3, gt.size());
  for (std::size_t i = 0; i < est.size(); ++i) {
    src.col(static_cast<Eigen::Index>(i)) = est[i].p;
    dst.col(static_cast<Eigen::Index>(i)) = gt[i].p;
  }
  const Eigen::Matrix4d T = Eigen::umeyama(src, dst, false);
  return apply(est, T.topLeftCorner<3, 3>(), T.topRightCorner<3, 1>());
}

double ate(std::span<const PoseSample> est, std::span<const PoseSample> gt) {
  require_same_length(est, gt);
  double se = 0.0;
  for (std::size_t i = 0; i < est.size(); ++i) se += (est[i].p - gt[i].p).squaredNorm();
  return std::sqrt(se / static_cast<double>(est.size()));
}

Alignment alignment_from_string(const std::string& s) {
  if (s == "first_pose") return Alignment::FirstPose;
  if (s == "umeyama") return Alignment::Umeyama;
  if (s == "none") return Alignment::None;
  throw ConfigError("unknown alignment '" + s + "' (valid: first_pose, umeyama, none)");
}

std::string to_string(Alignment a) {
  switch (a) {
    case Alignment::FirstPose: return "first_pose";
    case Alignment::Umeyama: return "umeyama";
    case Alignment::None: return "none";
  }
  return "first_pose";
}

nlohmann::json to_json(const MetricReport& r) {
  return {{"ate_m", r.ate_m},
          {"rmse_m", r.rmse_m},
          {"duration_s", r.duration_s},
          {"n", r.n},
          {"config_hash", r.config_hash}};
}

std::string config_hash(const nlohmann::json& config) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : config.dump()) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  std::array<char, 17> buf{};
  std::snprintf(buf.data(), buf.size(), "%016llx", static_cast<unsigned long long>(h));
  return buf.data();
}

MetricReport evaluate(std::span<const PoseSample> est, std::span<const PoseSample> gt,
                      Alignment alignment, const std::string& config_fingerprint) {
  const Synced s = synchronize(est, gt);
  Trajectory aligned;
  switch (alignment) {
    case Alignment::FirstPose: aligned = align_first_pose(s.est, s.gt); break;
    case Alignment::Umeyama: aligned = align_umeyama(s.est, s.gt); break;
    case Alignment::None: aligned = s.est; break;
  }
  MetricReport r;
  r.ate_m = ate(aligned, s.gt);
  r.rmse_m = rmse(aligned, s.gt);
  r.duration_s = s.gt.back().t - s.gt.front().t;
  r.n = s.gt.size();
  r.config_hash = config_fingerprint;
  return r;
}

std::string render_svg(std::span<const NamedTrajectory> trajectories) {
  double xmin = std::numeric_limits<double>::infinity(), xmax = -xmin;
  double ymin = xmin, ymax = -xmin;
  for (const auto& tr : trajectories)
    for (const auto& s : tr.poses) {
      xmin = std::min(xmin, 100.0 * s.p.x());
      xmax = std::max(xmax, 100.0 * s.p.x());
      ymin = std::min(ymin, -100.0 * s.p.y());
      ymax = std::max(ymax, -100.0 * s.p.y());
    }
  if (!std::isfinite(xmin)) xmin = xmax = ymin = ymax = 0.0;
  const double span = std::max({xmax - xmin, ymax - ymin, 100.0});
  const double margin = 0.1 * span;
  const double legend_h = 0.06 * span * static_cast<double>(trajectories.size() + 1);
  const double vx = xmin - margin, vy = ymin - margin;
  const double vw = (xmax - xmin) + 2 * margin, vh = (ymax - ymin) + 2 * margin + legend_h;
  const double stroke = span / 400.0;
  const double font = span / 30.0;

  std::string out;
  out += "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"" + fmt(vx) + " " + fmt(vy) + " " +
         fmt(vw) + " " + fmt(vh) + "\">\n";
  out += "<rect x=\"" + fmt(vx) + "\" y=\"" + fmt(vy) + "\" width=\"" + fmt(vw) + "\" height=\"" +
         fmt(vh) + "\" fill=\"#ffffff\"/>\n";
  for (std::size_t i = 0; i < trajectories.size(); ++i) {
    const auto& tr = trajectories[i];
    out += "<polyline fill=\"none\" stroke=\"" + colour_for(tr.name, i) + "\" stroke-width=\"" +
           fmt(stroke) + "\" points=\"";
    for (std::size_t k = 0; k < tr.poses.size(); ++k) {
      if (k) out += ' ';
      out += fmt(100.0 * tr.poses[k].p.x()) + "," + fmt(-100.0 * tr.poses[k].p.y());
    }
    out += "\"/>\n";
  }

  // Legend below the plot area.
  const double lx = xmin, ly0 = ymax + margin;
  for (std::size_t i = 0; i < trajectories.size(); ++i) {
    const double ly = ly0 + 0.06 * span * static_cast<double>(i);
    out += "<line x1=\"" + fmt(lx) + "\" y1=\"" + fmt(ly) + "\" x2=\"" + fmt(lx + 0.08 * span) +
           "\" y2=\"" + fmt(ly) + "\" stroke=\"" + colour_for(trajectories[i].name, i) +
           "\" stroke-width=\"" + fmt(3 * stroke) + "\"/>\n";
    out += "<text x=\"" + fmt(lx + 0.1 * span) + "\" y=\"" + fmt(ly + 0.35 * font) +
           "\" font-size=\"" + fmt(font) + "\" font-family=\"sans-serif\">" +
           escape_xml(trajectories[i].name) + "</text>\n";
  }

  // Scale bar: the largest 1/2/5 x 10^k metres not exceeding a fifth of the span.
  const double target_m = span / 500.0;
  const double decade = std::pow(10.0, std::floor(std::log10(target_m)));
  double bar_m = decade;
  for (double f : {2.0, 5.0})
    if (f * decade <= target_m) bar_m = f * decade;
  const double by = ly0 + 0.06 * span * static_cast<double>(trajectories.size());
  const double bx = xmax - 100.0 * bar_m;
  out += "<line x1=\"" + fmt(bx) + "\" y1=\"" + fmt(by) + "\" x2=\"" + fmt(xmax) + "\" y2=\"" +
         fmt(by) + "\" stroke=\"#000000\" stroke-width=\"" + fmt(3 * stroke) + "\"/>\n";
  char label[32];
  std::snprintf(label, sizeof label, "%g m", bar_m);
  out += "<text x=\"" + fmt(bx) + "\" y=\"" + fmt(by - 0.5 * font) + "\" font-size=\"" +
         fmt(font) + "\" font-family=\"sans-serif\">" + label + "</text>\n";
  out += "</svg>\n";
  return out;
}

void emit_outputs(const fs::path& dir, const MetricReport& report,
                  std::span<const NamedTrajectory> trajectories) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
  write_text(dir / "metrics.json", to_json(report).dump(2) + "\n");
  if (trajectories.empty()) return;
  for (const auto& tr : trajectories) imu::write_pose_csv(dir / (tr.name + ".csv"), tr.poses);
  write_text(dir / "trajectories.svg", render_svg(trajectories));
}

}  // namespace gnio::eval
