#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <random>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include "gnio/error.hpp"
#include "gnio/imu/io.hpp"
#include "gnio/imu/rotation.hpp"
#include "gnio/imu/synth.hpp"
#include "gnio/imu/windows.hpp"

namespace {

using namespace gnio;
using namespace gnio::imu;
namespace fs = std::filesystem;
constexpr double kPi = std::numbers::pi;

SynthSpec one_segment(Segment seg, double rate = 100.0) {
  SynthSpec s;
  s.rate = rate;
  s.segments = {seg};
  return s;
}

fs::path temp_dir(const std::string& name) {
  auto p = fs::temp_directory_path() / ("gnio_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

// Rotates the world frame of a sequence about z; body-frame IMU data is unchanged.
Sequence rotate_world(const Sequence& seq, double yaw) {
  Sequence out = seq;
  const Eigen::AngleAxisd rz(yaw, Vector3d::UnitZ());
  for (auto& p : out.gt) {
    p.p = rz * p.p;
    p.q = (Quaterniond(rz) * p.q).normalized();
  }
  return out;
}

TEST(Rotation, ExpLogRoundTrip) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-1.5, 1.5);
  for (int i = 0; i < 50; ++i) {
    const Vector3d phi(u(rng), u(rng), u(rng));
    const Matrix3d R = so3_exp(phi);
    EXPECT_LT(orthonormality_error(R), 1e-14);
    EXPECT_LT((so3_log(R) - phi).norm(), 1e-10);
    EXPECT_LT((R - Eigen::AngleAxisd(phi.norm(), phi.normalized()).toRotationMatrix()).norm(), 1e-13);
  }
}

TEST(Rotation, YawOfAndRemoveYaw) {
  const Matrix3d R = rot_z(0.7) * rot_y(0.2) * rot_x(-0.3);
  EXPECT_NEAR(yaw_of(R), 0.7, 1e-14);
  EXPECT_NEAR(yaw_of(remove_yaw(R)), 0.0, 1e-14);
  EXPECT_NEAR(wrap_angle(3 * kPi), kPi, 1e-12);
  EXPECT_NEAR(wrap_angle(-0.5), -0.5, 1e-15);
}

TEST(GravityAlign, IdentityRotationZeroBiasIsIdentity) {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> n(0.0, 2.0);
  std::vector<ImuSample> s(20);
  for (auto& x : s) x = {0.0, {n(rng), n(rng), n(rng)}, {n(rng), n(rng), n(rng)}};
  const AlignedBlock X = gravity_align(s, Matrix3d::Identity(), Bias{});
  for (std::size_t i = 0; i < s.size(); ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    for (int c = 0; c < 3; ++c) {
      EXPECT_EQ(X(r, c), s[i].accel[c]);
      EXPECT_EQ(X(r, 3 + c), s[i].gyro[c]);
    }
  }
}

TEST(GravityAlign, StationaryReadsGravityUp) {
  const Sequence seq = synth_generate(one_segment(Stationary{10.0}));
  for (const auto& m : seq.imu) {
    EXPECT_LT((m.accel - Vector3d(0, 0, 9.81)).norm(), 1e-12);
    EXPECT_EQ(m.gyro.norm(), 0.0);
  }
  const AlignedBlock X = gravity_align(std::span(seq.imu).first(100), Matrix3d::Identity(), Bias{});
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    EXPECT_NEAR(X(i, 2), 9.81, 1e-12);
    EXPECT_NEAR(X.row(i).tail<3>().norm(), 0.0, 1e-15);
  }
}

TEST(GravityAlign, TiltedStationaryStillReadsGravityUp) {
  auto spec = one_segment(Stationary{2.0});
  spec.mount_roll = 0.3;
  spec.mount_pitch = -0.2;
  spec.yaw0 = 1.1;
  const Sequence seq = synth_generate(spec);
  const Matrix3d R = seq.gt.front().rotation();
  const AlignedBlock X = gravity_align(std::span(seq.imu).first(100), R, Bias{});
  for (Eigen::Index i = 0; i < X.rows(); ++i)
    EXPECT_LT((X.row(i).head<3>().transpose() - Vector3d(0, 0, 9.81)).norm(), 1e-12);
}

TEST(GravityAlign, Yaw90MatchesUnrotated) {
  auto spec = random_walk_spec(12.0, 100.0, 5);
  const Sequence seq = synth_generate(spec);
  const Sequence rot = rotate_world(seq, kPi / 2);
  const Matrix3d R = seq.gt[0].rotation();
  const Matrix3d R90 = rot.gt[0].rotation();
  const AlignedBlock a = gravity_align(std::span(seq.imu).first(100), R, Bias{});
  const AlignedBlock b = gravity_align(std::span(rot.imu).first(100), R90, Bias{});
  EXPECT_LT((a - b).cwiseAbs().maxCoeff(), 1e-9);
}

TEST(GravityAlign, BiasIsSubtractedPerSensor) {
  std::vector<ImuSample> s{{0.0, {1, 2, 3}, {4, 5, 6}}};
  const Bias b{{0.5, 0.5, 0.5}, {1, 1, 1}};
  const AlignedBlock X = gravity_align(s, Matrix3d::Identity(), b);
  EXPECT_EQ(X(0, 0), 3.0);
  EXPECT_EQ(X(0, 3), 0.5);
}

TEST(GravityAlign, RejectsNonOrthonormal) {
  std::vector<ImuSample> s(3);
  Matrix3d R = Matrix3d::Identity();
  R(0, 0) = 1.0 + 1e-5;
  EXPECT_THROW(gravity_align(s, R, Bias{}), ConfigError);
  Bias bad;
  bad.accel.x() = std::nan("");
  EXPECT_THROW(gravity_align(s, Matrix3d::Identity(), bad), ConfigError);
}

TEST(GravityAlign, EquivariantUnderRandomYaw) {
  const Sequence seq = synth_generate(random_walk_spec(15.0, 100.0, 11, {0.01, 0.05, {}, {}}));
  const auto base = window_stream(seq);
  std::mt19937_64 rng(12);
  std::uniform_real_distribution<double> u(-kPi, kPi);
  for (int trial = 0; trial < 5; ++trial) {
    const auto w = window_stream(rotate_world(seq, u(rng)));
    ASSERT_EQ(w.size(), base.size());
    for (std::size_t k = 0; k < w.size(); ++k) {
      EXPECT_LT((w[k].X - base[k].X).cwiseAbs().maxCoeff(), 1e-9);
      EXPECT_LT((w[k].d_gt - base[k].d_gt).norm(), 1e-9);
    }
  }
}

TEST(WindowStream, CountsAndSizes) {
  const Sequence s100 = synth_generate(one_segment(Stationary{10.0}, 100.0));
  const auto w = window_stream(s100);
  EXPECT_EQ(w.size(), 91u);
  EXPECT_EQ(w.front().size(), 100u);
  EXPECT_EQ(w[1].start_index, 10u);
  EXPECT_DOUBLE_EQ(w.back().t_end, 10.0);

  const Sequence s200 = synth_generate(one_segment(Stationary{10.0}, 200.0));
  const auto g = window_geometry(200.0, s200.imu.size());
  EXPECT_EQ(g.N, 200u);
  EXPECT_EQ(g.S, 20u);
  EXPECT_EQ(window_stream(s200).front().size(), 200u);
}

TEST(WindowStream, Errors) {
  const Sequence short_seq = synth_generate(one_segment(Stationary{0.5}));
  EXPECT_THROW(window_stream(short_seq), ConfigError);
  EXPECT_THROW(window_stream(Sequence{}), ConfigError);
  const Sequence s = synth_generate(one_segment(Stationary{3.0}));
  EXPECT_THROW(window_stream(s, 1.005, 0.1), ConfigError);
  EXPECT_THROW(window_stream(s, 1.0, 0.015), ConfigError);
}

TEST(WindowStream, PartitionAndOverlap) {
  auto spec = one_segment(ConstVel{{0.8, 0.3, 0.0}, 6.0, {0.05, 0.02, 1.8}});
  const Sequence seq = synth_generate(spec);
  const auto part = window_stream(seq, 1.0, 1.0);
  ASSERT_EQ(part.size(), 6u);
  for (std::size_t k = 0; k + 1 < part.size(); ++k) {
    EXPECT_EQ(part[k + 1].start_index, part[k].start_index + 100);
    EXPECT_DOUBLE_EQ(part[k].t_end, part[k + 1].t_start);
  }
  const auto over = window_stream(seq, 1.0, 0.3);
  for (std::size_t k = 0; k + 1 < over.size(); ++k) {
    const auto& a = over[k];
    const auto& b = over[k + 1];
    // Constant heading: shared samples align identically.
    EXPECT_EQ(a.X.bottomRows(70), b.X.topRows(70));
    EXPECT_NE(a.X.row(29), b.X.row(0));
  }
}

TEST(ComputeTarget, StationaryIsZero) {
  const Sequence seq = synth_generate(one_segment(Stationary{3.0}));
  for (const auto& w : window_stream(seq)) EXPECT_EQ(w.d_gt, Vector3d::Zero());
}

TEST(ComputeTarget, ConstantVelocityAndYaw90) {
  auto spec = one_segment(ConstVel{{1.0, 0.0, 0.0}, 3.0, {}});
  const Sequence seq = synth_generate(spec);
  const auto w = window_stream(seq);
  EXPECT_LT((w.front().d_gt - Vector3d(1, 0, 0)).norm(), 1e-12);

  spec.yaw0 = kPi / 2;
  const auto w90 = window_stream(synth_generate(spec));
  EXPECT_NEAR(w90.front().yaw, kPi / 2, 1e-12);
  // Independent frame transform: express (1,0,0) in a frame rotated +90 deg.
  const Vector3d expect = Eigen::AngleAxisd(kPi / 2, Vector3d::UnitZ()).inverse() * Vector3d(1, 0, 0);
  EXPECT_LT((w90.front().d_gt - expect).norm(), 1e-12);
  EXPECT_LT((w90.front().d_gt - Vector3d(0, -1, 0)).norm(), 1e-12);
}

TEST(ComputeTarget, Telescopes) {
  SynthSpec spec;
  spec.segments = {Sinusoid{{1, 0.5, 0.2}, 0.7, 0.3, 4.0}, ConstVel{{0.4, -0.9, 0.1}, 4.0, {0.04, 0.03, 1.7}}};
  const Sequence seq = synth_generate(spec);
  const auto w = window_stream(seq, 1.0, 1.0);
  Vector3d sum = Vector3d::Zero();
  for (const auto& x : w) {
    EXPECT_EQ(x.yaw, 0.0);
    sum += x.d_gt;
  }
  EXPECT_LT((sum - (seq.gt.back().p - seq.gt.front().p)).norm(), 1e-12);
}

TEST(ComputeTarget, InterpolatesBetweenSamples) {
  const Sequence seq = synth_generate(one_segment(ConstVel{{2.0, 0.0, 0.0}, 2.0, {}}));
  const PoseSample p = interpolate_pose(seq.gt, 0.505);
  EXPECT_NEAR(p.p.x(), 1.01, 1e-12);
  Window w;
  w.t_start = 0.005;
  w.t_end = 1.005;
  EXPECT_LT((compute_target(seq.gt, w) - Vector3d(2, 0, 0)).norm(), 1e-12);
}

TEST(ComputeTarget, GapInGroundTruthIsAnError) {
  const Sequence seq = synth_generate(one_segment(ConstVel{{1.0, 0.0, 0.0}, 3.0, {}}));
  auto gt = seq.gt;
  gt.erase(gt.begin() + 150);
  Window w;
  w.t_start = 0.5;
  w.t_end = 1.495;
  EXPECT_THROW(compute_target(gt, w), ConfigError);
  w.t_end = 3.5;
  EXPECT_THROW(compute_target(seq.gt, w), ConfigError);
}

TEST(Synth, SinusoidDoubleIntegrationOracle) {
  auto spec = one_segment(Sinusoid{Vector3d::UnitX(), 1.0, 0.5, 10.0}, 200.0);
  const Sequence seq = synth_generate(spec);
  const Vector3d g(0, 0, -9.81);
  const TruthState s0 = Trajectory(spec).at(0.0);
  Vector3d p = seq.gt[0].p, v = s0.v;
  auto world_acc = [&](std::size_t k) { return Vector3d(seq.gt[k].rotation() * seq.imu[k].accel + g); };
  double max_err = 0.0;
  const double dt = 1.0 / 200.0;
  for (std::size_t k = 1; k < seq.imu.size(); ++k) {
    const Vector3d a0 = world_acc(k - 1), a1 = world_acc(k);
    const Vector3d v1 = v + 0.5 * (a0 + a1) * dt;
    p += 0.5 * (v + v1) * dt;
    v = v1;
    const double t = seq.imu[k].t;
    max_err = std::max(max_err, (p - Vector3d(std::sin(kPi * t), 0, 0)).norm());
  }
  EXPECT_LT(max_err, 1e-3);
}

TEST(Synth, ArcTurnGyroIsSpeedOverRadius) {
  const Sequence seq = synth_generate(one_segment(ArcTurn{2.0, 1.0, 5.0, 1, {}}));
  for (const auto& m : seq.imu) EXPECT_NEAR(m.gyro.z(), 0.5, 1e-12);
  const Sequence right = synth_generate(one_segment(ArcTurn{2.0, 1.0, 5.0, -1, {}}));
  for (const auto& m : right.imu) EXPECT_NEAR(m.gyro.z(), -0.5, 1e-12);
  // Centripetal: speed^2 / r = 0.5 m/s^2 towards the centre (body +y on a left turn).
  EXPECT_NEAR(seq.imu[100].accel.y(), 0.5, 1e-12);
}

TEST(Synth, AnalyticDerivativesMatchFiniteDifferences) {
  for (std::uint64_t seed = 0; seed < 6; ++seed) {
    const Trajectory traj(random_walk_spec(30.0, 100.0, seed));
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0.01, traj.duration() - 0.01);
    const double h = 1e-5;
    for (int i = 0; i < 200; ++i) {
      const double t = u(rng);
      const TruthState a = traj.at(t - h), b = traj.at(t + h), c = traj.at(t);
      EXPECT_LT(((b.p - a.p) / (2 * h) - c.v).norm(), 1e-6) << "seed " << seed << " t " << t;
      EXPECT_LT(((b.v - a.v) / (2 * h) - c.a).norm(), 1e-5) << "seed " << seed << " t " << t;
      const Matrix3d Rdot = (b.R - a.R) / (2 * h);
      EXPECT_LT((Rdot - c.R * skew(c.omega_b)).norm(), 1e-6) << "seed " << seed << " t " << t;
    }
  }
}

TEST(Synth, ContinuousAtJoins) {
  SynthSpec spec;
  spec.segments = {Stationary{1.0}, ConstVel{{1.2, 0.0, 0.0}, 2.0, {0.05, 0.02, 1.9}},
                   ArcTurn{2.0, 1.0, 2.0, -1, {0.05, 0.02, 1.9}}, Sinusoid{Vector3d::UnitY(), 0.3, 0.4, 2.0},
                   Stationary{1.0}};
  const Trajectory traj(spec);
  for (double t0 : {1.0, 3.0, 5.0, 7.0}) {
    const double e = 1e-9;
    const TruthState a = traj.at(t0 - e), b = traj.at(t0 + e);
    EXPECT_LT((a.p - b.p).norm(), 1e-7) << t0;
    EXPECT_LT((a.v - b.v).norm(), 1e-7) << t0;
    EXPECT_LT((a.a - b.a).norm(), 1e-6) << t0;
    EXPECT_LT((a.R - b.R).norm(), 1e-7) << t0;
    EXPECT_LT((a.omega_b - b.omega_b).norm(), 1e-7) << t0;
  }
}

TEST(Synth, DeterministicGivenSeed) {
  const NoiseSpec noise{0.01, 0.05, {0.01, -0.02, 0.005}, {0.1, 0.05, -0.08}};
  const auto spec = random_walk_spec(10.0, 200.0, 42, noise);
  const Sequence a = synth_generate(spec), b = synth_generate(spec);
  ASSERT_EQ(a.imu.size(), 2001u);
  for (std::size_t i = 0; i < a.imu.size(); ++i) {
    EXPECT_EQ(a.imu[i].accel, b.imu[i].accel);
    EXPECT_EQ(a.imu[i].gyro, b.imu[i].gyro);
  }
  auto other = spec;
  other.seed = 43;
  EXPECT_NE(synth_generate(other).imu[5].accel, a.imu[5].accel);
  a.validate();
}

TEST(Synth, RejectsNonPhysicalSpecs) {
  EXPECT_THROW(synth_generate(one_segment(Stationary{0.0})), ConfigError);
  EXPECT_THROW(synth_generate(one_segment(ArcTurn{-1.0, 1.0, 2.0, 1, {}})), ConfigError);
  EXPECT_THROW(synth_generate(one_segment(Stationary{1.0}, 150.0)), ConfigError);
  EXPECT_THROW(synth_generate(SynthSpec{}), ConfigError);
  EXPECT_THROW(synth_generate(one_segment(Stationary{1.003})), ConfigError);
}

TEST(Synth, JsonRoundTrip) {
  const auto spec = random_walk_spec(8.0, 100.0, 9, {0.01, 0.02, {0.001, 0, 0}, {0, 0.1, 0}});
  const auto back = synth_spec_from_json(nlohmann::json::parse(synth_spec_to_json(spec).dump()));
  const Sequence a = synth_generate(spec), b = synth_generate(back);
  ASSERT_EQ(a.imu.size(), b.imu.size());
  for (std::size_t i = 0; i < a.imu.size(); ++i) EXPECT_EQ(a.imu[i].accel, b.imu[i].accel);

  const auto j = nlohmann::json::parse(R"({"rate":200,"seed":1,
      "noise":{"sigma_g":0,"sigma_a":0,"bg":[0,0,0],"ba":[0,0,0]},
      "segments":[{"kind":"sinusoid","axis":"x","A":1,"f":0.5,"T":10},
                  {"kind":"arc_turn","radius":2,"speed":1,"T":3,"dir":"right"}]})");
  const SynthSpec s = synth_spec_from_json(j);
  EXPECT_EQ(s.segments.size(), 2u);
  EXPECT_EQ(std::get<ArcTurn>(s.segments[1]).dir, -1);
  EXPECT_THROW(synth_spec_from_json(nlohmann::json::parse(R"({"rate":100,"segments":[{"kind":"hop","T":1}]})")),
               ConfigError);
  EXPECT_THROW(synth_spec_from_json(nlohmann::json::parse(R"({"rate":100,"segments":[{"kind":"stationary","T":1,"x":2}]})")),
               ConfigError);
}

TEST(Io, SaveLoadIsBitIdentical) {
  const NoiseSpec noise{0.013, 0.071, {0.01, -0.02, 0.005}, {0.1, 0.05, -0.08}};
  const Sequence seq = synth_generate(random_walk_spec(6.0, 200.0, 77, noise));
  const auto dir = temp_dir("roundtrip");
  save_sequence(dir, seq);
  const Sequence back = load_sequence(dir);
  EXPECT_EQ(back.rate, seq.rate);
  ASSERT_EQ(back.imu.size(), seq.imu.size());
  ASSERT_EQ(back.gt.size(), seq.gt.size());
  for (std::size_t i = 0; i < seq.imu.size(); ++i) {
    EXPECT_EQ(back.imu[i].t, seq.imu[i].t);
    EXPECT_EQ(back.imu[i].gyro, seq.imu[i].gyro);
    EXPECT_EQ(back.imu[i].accel, seq.imu[i].accel);
    EXPECT_EQ(back.gt[i].p, seq.gt[i].p);
    EXPECT_EQ(back.gt[i].q.coeffs(), seq.gt[i].q.coeffs());
  }
  ASSERT_TRUE(back.bias_gt.has_value());
  EXPECT_EQ(back.bias_gt->accel, seq.bias_gt->accel);
  fs::remove_all(dir);
}

TEST(Io, FormatDoubleRoundTrips) {
  std::mt19937_64 rng(8);
  std::normal_distribution<double> n(0.0, 1e3);
  for (int i = 0; i < 1000; ++i) {
    const double v = n(rng);
    EXPECT_EQ(std::stod(format_double(v)), v);
  }
}

TEST(Io, MalformedCsvNamesTheLine) {
  const auto dir = temp_dir("malformed");
  {
    std::ofstream out(dir / "imu.csv");
    out << "t,wx,wy,wz,ax,ay,az\n0,0,0,0,0,0,9.81\n0.01,0,0,zero,0,0,9.81\n";
  }
  try {
    read_imu_csv(dir / "imu.csv");
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find(":3:"), std::string::npos) << e.what();
  }
  {
    std::ofstream out(dir / "imu.csv");
    out << "t,ax,ay,az\n";
  }
  EXPECT_THROW(read_imu_csv(dir / "imu.csv"), ConfigError);
  EXPECT_THROW(read_imu_csv(dir / "missing.csv"), IoError);
  fs::remove_all(dir);
}

TEST(Sequence, ValidateCatchesIrregularTimeline) {
  Sequence seq = synth_generate(one_segment(Stationary{1.0}));
  seq.validate();
  seq.imu[10].t += 1e-4;
  EXPECT_THROW(seq.validate(), ConfigError);
}

}  // namespace
