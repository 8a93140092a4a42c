#include "gnio/ekf/filter.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <random>

#include <Eigen/Eigenvalues>
#include <Eigen/LU>
#include <nlohmann/json.hpp>

#include "gnio/error.hpp"
#include "gnio/imu/rotation.hpp"
#include "gnio/imu/windows.hpp"

namespace gnio::ekf {
using nlohmann::json;
using Eigen::Index;

namespace {

constexpr double kDegenerateHeading = 1e-6;

void symmetrize(MatrixXd& P) { P = 0.5 * (P + P.transpose()).eval(); }

void remove_block(MatrixXd& P, Index at, Index n) {
  const Index dim = P.rows();
  const Index tail = dim - at - n;
  MatrixXd out(dim - n, dim - n);
  out.topLeftCorner(at, at) = P.topLeftCorner(at, at);
  out.topRightCorner(at, tail) = P.topRightCorner(at, tail);
  out.bottomLeftCorner(tail, at) = P.bottomLeftCorner(tail, at);
  out.bottomRightCorner(tail, tail) = P.bottomRightCorner(tail, tail);
  P = std::move(out);
}

double asymmetry(const MatrixXd& P) { return (P - P.transpose()).cwiseAbs().maxCoeff(); }

}  // namespace

void NoiseParams::validate() const {
  for (double v : {gyro_density, accel_density, gyro_bias_rw, accel_bias_rw, init_sigma_theta,
                   init_sigma_v, init_sigma_p, init_sigma_bg, init_sigma_ba})
    if (!(v >= 0.0) || !std::isfinite(v)) throw ConfigError("filter noise parameters must be >= 0");
}

void FilterConfig::validate() const {
  noise.validate();
  if (clone_capacity == 0) throw ConfigError("filter: clone_capacity must be positive");
  if (!(window_s > 0.0) || !(stride_s > 0.0))
    throw ConfigError("filter: window_s and stride_s must be positive");
  if (!(variance_floor >= 0.0)) throw ConfigError("filter: variance_floor must be >= 0");
  if (!(max_condition > 1.0)) throw ConfigError("filter: max_condition must exceed 1");
  if (!gravity.allFinite()) throw ConfigError("filter: gravity must be finite");
}

FilterConfig filter_config_from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("filter config must be a JSON object");
  static const std::vector<std::string> keys{"noise",         "clone_capacity", "window_s",
                                             "stride_s",      "variance_floor", "max_condition",
                                             "gravity"};
  static const std::vector<std::string> noise_keys{
      "gyro_density",     "accel_density", "gyro_bias_rw",  "accel_bias_rw", "init_sigma_theta",
      "init_sigma_v",     "init_sigma_p",  "init_sigma_bg", "init_sigma_ba"};
  auto check = [](const json& obj, const std::vector<std::string>& valid, const std::string& where) {
    for (const auto& [key, value] : obj.items())
      if (std::find(valid.begin(), valid.end(), key) == valid.end()) {
        std::string list;
        for (const auto& v : valid) list += (list.empty() ? "" : ", ") + v;
        throw ConfigError(where + ": unknown key '" + key + "' (valid: " + list + ")");
      }
  };
  check(j, keys, "filter");
  FilterConfig c;
  try {
    if (j.contains("noise")) {
      const auto& n = j.at("noise");
      check(n, noise_keys, "filter.noise");
      auto& o = c.noise;
      o.gyro_density = n.value("gyro_density", o.gyro_density);
      o.accel_density = n.value("accel_density", o.accel_density);
      o.gyro_bias_rw = n.value("gyro_bias_rw", o.gyro_bias_rw);
      o.accel_bias_rw = n.value("accel_bias_rw", o.accel_bias_rw);
      o.init_sigma_theta = n.value("init_sigma_theta", o.init_sigma_theta);
      o.init_sigma_v = n.value("init_sigma_v", o.init_sigma_v);
      o.init_sigma_p = n.value("init_sigma_p", o.init_sigma_p);
      o.init_sigma_bg = n.value("init_sigma_bg", o.init_sigma_bg);
      o.init_sigma_ba = n.value("init_sigma_ba", o.init_sigma_ba);
    }
    c.clone_capacity = j.value("clone_capacity", c.clone_capacity);
    c.window_s = j.value("window_s", c.window_s);
    c.stride_s = j.value("stride_s", c.stride_s);
    c.variance_floor = j.value("variance_floor", c.variance_floor);
    c.max_condition = j.value("max_condition", c.max_condition);
    if (j.contains("gravity")) {
      const auto g = j.at("gravity").get<std::vector<double>>();
      if (g.size() != 3) throw ConfigError("filter: gravity must have 3 components");
      c.gravity = Vector3d(g[0], g[1], g[2]);
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("filter config: ") + e.what());
  }
  c.validate();
  return c;
}

json to_json(const FilterConfig& c) {
  const auto& n = c.noise;
  return {{"noise",
           {{"gyro_density", n.gyro_density},
            {"accel_density", n.accel_density},
            {"gyro_bias_rw", n.gyro_bias_rw},
            {"accel_bias_rw", n.accel_bias_rw},
            {"init_sigma_theta", n.init_sigma_theta},
            {"init_sigma_v", n.init_sigma_v},
            {"init_sigma_p", n.init_sigma_p},
            {"init_sigma_bg", n.init_sigma_bg},
            {"init_sigma_ba", n.init_sigma_ba}}},
          {"clone_capacity", c.clone_capacity},
          {"window_s", c.window_s},
          {"stride_s", c.stride_s},
          {"variance_floor", c.variance_floor},
          {"max_condition", c.max_condition},
          {"gravity", {c.gravity.x(), c.gravity.y(), c.gravity.z()}}};
}

YawRotation yaw_rotation(const Matrix3d& R) {
  YawRotation y;
  if (heading_norm(R) < kDegenerateHeading) {
    y.degenerate = true;
    return y;
  }
  y.yaw = yaw_of(R);
  y.R_gamma = rot_z(y.yaw);
  return y;
}

Eigen::RowVector3d yaw_jacobian(const Matrix3d& R) {
  const double h2 = R(0, 0) * R(0, 0) + R(1, 0) * R(1, 0);
  if (h2 < kDegenerateHeading * kDegenerateHeading) return Eigen::RowVector3d::Zero();
  return Eigen::RowVector3d(-R(0, 0) * R(2, 0), -R(1, 0) * R(2, 0), h2) / h2;
}

MatrixXd initial_covariance(const NoiseParams& n) {
  Eigen::VectorXd d(kCoreDim);
  d << Vector3d::Constant(n.init_sigma_theta), Vector3d::Constant(n.init_sigma_v),
      Vector3d::Constant(n.init_sigma_p), Vector3d::Constant(n.init_sigma_bg),
      Vector3d::Constant(n.init_sigma_ba);
  return d.array().square().matrix().asDiagonal();
}

Ekf::Ekf(const NavState& x0, const FilterConfig& config)
    : Ekf(x0, initial_covariance(config.noise), config) {}

Ekf::Ekf(const NavState& x0, const MatrixXd& P0, const FilterConfig& config)
    : cfg_(config), x_(x0), P_(P0) {
  cfg_.validate();
  if (P_.rows() != kCoreDim || P_.cols() != kCoreDim)
    throw ShapeError("initial covariance must be 15x15");
  if (orthonormality_error(x_.R) > 1e-9) throw ConfigError("initial R is not orthonormal");
}

void Ekf::propagate(const imu::ImuSample& m, double dt) {
  if (!(dt > 0.0)) throw ConfigError("propagate: dt must be positive, got " + std::to_string(dt));
  const Matrix3d R = x_.R;
  const Vector3d w = m.gyro - x_.bg;
  const Vector3d a = m.accel - x_.ba;
  // Specific force rotated with the mid-step attitude.
  const Vector3d Ra = R * so3_exp(0.5 * w * dt) * a;
  const Vector3d a_w = Ra + cfg_.gravity;

  x_.p += x_.v * dt + 0.5 * a_w * dt * dt;
  x_.v += a_w * dt;
  x_.R = reorthonormalize(R * so3_exp(w * dt));
  x_.t += dt;

  Eigen::Matrix<double, kCoreDim, kCoreDim> F = Eigen::Matrix<double, kCoreDim, kCoreDim>::Identity();
  const Matrix3d Sa = skew(Ra);
  F.block<3, 3>(kTheta, kBg) = -R * dt;
  F.block<3, 3>(kVel, kTheta) = -Sa * dt;
  F.block<3, 3>(kVel, kBa) = -R * dt;
  F.block<3, 3>(kPos, kVel) = Matrix3d::Identity() * dt;
  F.block<3, 3>(kPos, kTheta) = -0.5 * Sa * dt * dt;
  F.block<3, 3>(kPos, kBa) = -0.5 * R * dt * dt;

  const auto& n = cfg_.noise;
  Eigen::Matrix<double, kCoreDim, 1> q;
  q << Vector3d::Constant(n.gyro_density * n.gyro_density * dt),
      Vector3d::Constant(n.accel_density * n.accel_density * dt), Vector3d::Zero(),
      Vector3d::Constant(n.gyro_bias_rw * n.gyro_bias_rw * dt),
      Vector3d::Constant(n.accel_bias_rw * n.accel_bias_rw * dt);

  const Index rest = P_.rows() - kCoreDim;
  P_.topLeftCorner<kCoreDim, kCoreDim>() =
      F * P_.topLeftCorner<kCoreDim, kCoreDim>() * F.transpose();
  P_.topLeftCorner<kCoreDim, kCoreDim>().diagonal() += q;
  if (rest > 0) {
    P_.topRightCorner(kCoreDim, rest) = F * P_.topRightCorner(kCoreDim, rest);
    P_.bottomLeftCorner(rest, kCoreDim) = P_.topRightCorner(kCoreDim, rest).transpose();
  }
  auto core = P_.topLeftCorner<kCoreDim, kCoreDim>();
  core = 0.5 * (core + core.transpose()).eval();
}

void Ekf::clone(std::size_t tag) {
  if (clones_.size() >= cfg_.clone_capacity) marginalize(0);
  const Index dim = P_.rows();
  MatrixXd J = MatrixXd::Zero(kCloneDim, dim);
  J.block<3, 3>(0, kTheta).setIdentity();
  J.block<3, 3>(3, kPos).setIdentity();
  const MatrixXd JP = J * P_;
  MatrixXd out(dim + kCloneDim, dim + kCloneDim);
  out.topLeftCorner(dim, dim) = P_;
  out.bottomLeftCorner(kCloneDim, dim) = JP;
  out.topRightCorner(dim, kCloneDim) = JP.transpose();
  out.bottomRightCorner<kCloneDim, kCloneDim>() = JP * J.transpose();
  P_ = std::move(out);
  clones_.push_back({x_.p, x_.R, x_.t, tag});
}

void Ekf::marginalize(std::size_t index) {
  if (index >= clones_.size()) throw ConfigError("marginalize: no clone at index " + std::to_string(index));
  remove_block(P_, kCoreDim + static_cast<Index>(index) * kCloneDim, kCloneDim);
  clones_.erase(clones_.begin() + static_cast<std::ptrdiff_t>(index));
}

std::optional<std::size_t> Ekf::find_clone(std::size_t tag) const {
  for (std::size_t i = 0; i < clones_.size(); ++i)
    if (clones_[i].tag == tag) return i;
  return std::nullopt;
}

Vector3d Ekf::predict_displacement(std::size_t clone_index) const {
  const auto& c = clones_.at(clone_index);
  return yaw_rotation(c.R).R_gamma.transpose() * (x_.p - c.p);
}

Eigen::Matrix<double, 3, Eigen::Dynamic> Ekf::measurement_jacobian(std::size_t clone_index) const {
  const auto& c = clones_.at(clone_index);
  const auto yr = yaw_rotation(c.R);
  const double cy = std::cos(yr.yaw), sy = std::sin(yr.yaw);
  Matrix3d dRt;  // d(Rz(yaw)^T)/d(yaw)
  dRt << -sy, cy, 0, -cy, -sy, 0, 0, 0, 0;
  const Index at = kCoreDim + static_cast<Index>(clone_index) * kCloneDim;
  Eigen::Matrix<double, 3, Eigen::Dynamic> H = Eigen::Matrix<double, 3, Eigen::Dynamic>::Zero(3, P_.rows());
  H.block<3, 3>(0, kPos) = yr.R_gamma.transpose();
  H.block<3, 3>(0, at + 3) = -yr.R_gamma.transpose();
  H.block<3, 3>(0, at) = (dRt * (x_.p - c.p)) * yaw_jacobian(c.R);
  return H;
}

UpdateResult Ekf::update(std::size_t clone_index, const Vector3d& d_hat, const Matrix3d& sigma) {
  if (clone_index >= clones_.size())
    throw ConfigError("update: no clone at index " + std::to_string(clone_index));
  if (!d_hat.allFinite() || !sigma.allFinite())
    throw NonFiniteError("update: non-finite measurement");
  Matrix3d Sig = 0.5 * (sigma + sigma.transpose());
  for (int i = 0; i < 3; ++i) Sig(i, i) = std::max(Sig(i, i), cfg_.variance_floor);

  UpdateResult r;
  const auto H = measurement_jacobian(clone_index);
  r.residual = d_hat - predict_displacement(clone_index);
  const MatrixXd PHt = P_ * H.transpose();
  r.S = H * PHt + Sig;
  r.S = 0.5 * (r.S + r.S.transpose()).eval();
  const Eigen::SelfAdjointEigenSolver<Matrix3d> es(r.S, Eigen::EigenvaluesOnly);
  const double lo = es.eigenvalues()(0), hi = es.eigenvalues()(2);
  r.condition = lo > 0.0 ? hi / lo : std::numeric_limits<double>::infinity();
  r.accepted = r.condition <= cfg_.max_condition;
  if (r.accepted) {
    const MatrixXd K = PHt * r.S.inverse();
    const Eigen::VectorXd dx = K * r.residual;
    MatrixXd IKH = -K * H;
    IKH.diagonal().array() += 1.0;
    P_ = IKH * P_ * IKH.transpose() + K * Sig * K.transpose();
    symmetrize(P_);
    inject(dx);
  }
  marginalize(clone_index);
  return r;
}

void Ekf::inject(const Eigen::VectorXd& dx) {
  if (dx.size() != P_.rows()) throw ShapeError("inject: correction has wrong dimension");
  x_.R = reorthonormalize(so3_exp(dx.segment<3>(kTheta)) * x_.R);
  x_.v += dx.segment<3>(kVel);
  x_.p += dx.segment<3>(kPos);
  x_.bg += dx.segment<3>(kBg);
  x_.ba += dx.segment<3>(kBa);
  for (std::size_t i = 0; i < clones_.size(); ++i) {
    const Index at = kCoreDim + static_cast<Index>(i) * kCloneDim;
    clones_[i].R = reorthonormalize(so3_exp(dx.segment<3>(at)) * clones_[i].R);
    clones_[i].p += dx.segment<3>(at + 3);
  }
}

MeasurementFn oracle_measurements(const imu::Sequence& seq, double claimed_variance,
                                  double noise_sigma, std::uint64_t seed) {
  if (!(claimed_variance > 0.0)) throw ConfigError("oracle: claimed variance must be positive");
  auto rng = std::make_shared<std::mt19937_64>(seed);
  return [&seq, claimed_variance, noise_sigma, rng](const WindowRequest& w) -> std::optional<Measurement> {
    const auto& a = seq.gt.at(w.start);
    const auto& b = seq.gt.at(w.end);
    Measurement m;
    m.d_hat = rot_z(yaw_of(a.rotation())).transpose() * (b.p - a.p);
    if (noise_sigma > 0.0) {
      std::normal_distribution<double> n(0.0, noise_sigma);
      for (int i = 0; i < 3; ++i) m.d_hat[i] += n(*rng);
    }
    m.sigma = claimed_variance * Matrix3d::Identity();
    return m;
  };
}

NavState initial_state(const imu::Sequence& seq) {
  if (seq.gt.size() < 3) throw ConfigError("initial_state: need at least 3 ground-truth poses");
  NavState x;
  const auto& g = seq.gt;
  x.p = g[0].p;
  x.R = reorthonormalize(g[0].rotation());
  x.t = g[0].t;
  const double dt = g[1].t - g[0].t;
  // Second-order one-sided difference.
  x.v = (-3.0 * g[0].p + 4.0 * g[1].p - g[2].p) / (2.0 * dt);
  return x;
}

FilterRun run_filter(const imu::Sequence& seq, const MeasurementFn& measure,
                     const FilterConfig& config, bool track_spectrum) {
  const std::size_t n = seq.imu.size();
  const auto geo = imu::window_geometry(seq.rate, n, config.window_s, config.stride_s);
  const std::size_t N = geo.N, S = geo.S;
  if (N / S > config.clone_capacity)
    throw ConfigError("filter: clone_capacity " + std::to_string(config.clone_capacity) +
                      " cannot hold the " + std::to_string(N / S) + " clones of one window");

  Ekf ekf(initial_state(seq), config);
  FilterRun run;
  if (track_spectrum) run.min_eigenvalue = std::numeric_limits<double>::infinity();
  run.poses.reserve(n);
  run.states.reserve(n);
  std::vector<Matrix3d> R_hist(n);
  auto track = [&] {
    if (!track_spectrum) return;
    const auto& P = ekf.covariance();
    run.max_asymmetry = std::max(run.max_asymmetry, asymmetry(P));
    const Eigen::SelfAdjointEigenSolver<MatrixXd> es(P, Eigen::EigenvaluesOnly);
    run.min_eigenvalue = std::min(run.min_eigenvalue, es.eigenvalues()(0));
  };
  const double max_dt = 2.0 / seq.rate;

  for (std::size_t k = 0; k < n; ++k) {
    if (measure && k >= N && (k - N) % S == 0) {
      if (const auto idx = ekf.find_clone(k - N)) {
        const auto& st = ekf.state();
        const auto X = imu::gravity_align(std::span(seq.imu).subspan(k - N, N),
                                          std::span<const Matrix3d>(R_hist).subspan(k - N, N),
                                          yaw_of(ekf.clones()[*idx].R), {st.bg, st.ba});
        const WindowRequest req{k - N, k, seq.imu[k - N].t, seq.imu[k].t, &X};
        UpdateLog log{seq.imu[k].t, k - N, k};
        if (const auto m = measure(req)) {
          const auto r = ekf.update(*idx, m->d_hat, m->sigma);
          log.accepted = r.accepted;
          log.d_hat = m->d_hat;
          log.residual = r.residual;
          log.sigma_diag = m->sigma.diagonal();
        } else {
          ekf.marginalize(*idx);
        }
        run.updates.push_back(log);
        track();
      }
    }
    if (measure && k % S == 0 && k + N < n) {
      ekf.clone(k);
      track();
    }
    const auto& st = ekf.state();
    R_hist[k] = st.R;
    run.states.push_back(st);
    run.poses.push_back({seq.imu[k].t, st.p, Eigen::Quaterniond(st.R).normalized()});
    if (k + 1 < n) {
      const double dt = seq.imu[k + 1].t - seq.imu[k].t;
      if (dt > max_dt) throw ConfigError("filter: IMU gap of " + std::to_string(dt) + " s");
      // Trapezoidal input: the mean of the samples bounding the step.
      imu::ImuSample m = seq.imu[k];
      m.gyro = 0.5 * (seq.imu[k].gyro + seq.imu[k + 1].gyro);
      m.accel = 0.5 * (seq.imu[k].accel + seq.imu[k + 1].accel);
      ekf.propagate(m, dt);
    }
  }
  run.core_covariance = ekf.covariance().topLeftCorner(kCoreDim, kCoreDim);
  return run;
}

}  // namespace gnio::ekf
