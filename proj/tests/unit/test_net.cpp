#include <cmath>
#include <cstdio>
#include <filesystem>
#include <numbers>
#include <random>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include "gnio/autodiff/gradcheck.hpp"
#include "gnio/error.hpp"
#include "gnio/imu/synth.hpp"
#include "gnio/imu/windows.hpp"
#include "gnio/net/gnio_net.hpp"
#include "test_util.hpp"

namespace {

using namespace gnio;
using namespace gnio::net;
using Mat = std::vector<std::vector<double>>;  // [C][L]

Tensor random_input(std::mt19937_64& rng, std::size_t B = 1, std::size_t N = 100) {
  return test::random_tensor(rng, {B, 6, N}, -2.0, 2.0);
}

// Random running statistics so eval mode is not the identity normalization.
void randomize_running_stats(GnioNet& net, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> mean(-0.5, 0.5), var(0.5, 2.0);
  auto st = net.state();
  for (auto& [name, t] : st) {
    if (name.ends_with("running_mean"))
      for (auto& v : t.mutable_data()) v = mean(rng);
    if (name.ends_with("running_var"))
      for (auto& v : t.mutable_data()) v = var(rng);
  }
  net.load_state(st);
}

// ---- straight-line reference encoder -------------------------------------

struct Ref {
  const ad::NamedTensors& s;

  const Tensor& at(const std::string& n) const { return s.at(n); }

  Mat conv(const Mat& x, const std::string& name, std::size_t stride, std::size_t pad) const {
    const Tensor& w = at(name);
    const std::size_t co = w.dim(0), ci = w.dim(1), k = w.dim(2), L = x[0].size();
    const std::size_t lout = (L + 2 * pad - k) / stride + 1;
    Mat y(co, std::vector<double>(lout, 0.0));
    for (std::size_t o = 0; o < co; ++o)
      for (std::size_t t = 0; t < lout; ++t) {
        double acc = 0.0;
        for (std::size_t c = 0; c < ci; ++c)
          for (std::size_t j = 0; j < k; ++j) {
            const long idx = static_cast<long>(t * stride + j) - static_cast<long>(pad);
            if (idx < 0 || idx >= static_cast<long>(L)) continue;
            acc += w.at((o * ci + c) * k + j) * x[c][static_cast<std::size_t>(idx)];
          }
        y[o][t] = acc;
      }
    return y;
  }

  Mat bn(Mat x, const std::string& p) const {
    const Tensor &g = at(p + ".gamma"), &b = at(p + ".beta");
    const Tensor &m = at(p + ".running_mean"), &v = at(p + ".running_var");
    for (std::size_t c = 0; c < x.size(); ++c)
      for (auto& e : x[c]) e = (e - m.at(c)) / std::sqrt(v.at(c) + 1e-5) * g.at(c) + b.at(c);
    return x;
  }

  static Mat relu(Mat x) {
    for (auto& r : x)
      for (auto& e : r) e = std::max(0.0, e);
    return x;
  }

  Mat block(const Mat& x, const std::string& p, std::size_t stride) const {
    Mat y = relu(bn(conv(x, p + ".a.conv.weight", stride, 1), p + ".a.bn"));
    y = bn(conv(y, p + ".b.conv.weight", 1, 1), p + ".b.bn");
    Mat skip = x;
    if (s.count(p + ".shortcut.conv.weight"))
      skip = bn(conv(x, p + ".shortcut.conv.weight", stride, 0), p + ".shortcut.bn");
    for (std::size_t c = 0; c < y.size(); ++c)
      for (std::size_t t = 0; t < y[c].size(); ++t) y[c][t] += skip[c][t];
    return relu(y);
  }

  std::vector<double> encode(const Mat& x) const {
    Mat y = relu(bn(conv(x, "encoder.stem.conv.weight", 2, 3), "encoder.stem.bn"));
    const std::size_t strides[8] = {1, 1, 2, 1, 2, 1, 2, 1};
    for (std::size_t i = 0; i < 8; ++i) y = block(y, "encoder.block" + std::to_string(i), strides[i]);
    std::vector<double> f(y.size());
    for (std::size_t c = 0; c < y.size(); ++c) {
      double acc = 0.0;
      for (double e : y[c]) acc += e;
      f[c] = acc / static_cast<double>(y[c].size());
    }
    return f;
  }
};

Mat to_mat(const Tensor& X) {
  const std::size_t C = X.dim(1), L = X.dim(2);
  Mat m(C, std::vector<double>(L));
  for (std::size_t c = 0; c < C; ++c)
    for (std::size_t t = 0; t < L; ++t) m[c][t] = X.at(c * L + t);
  return m;
}

// --------------------------------------------------------------------------

TEST(Encoder, ZeroInputGivesFiniteFeatureOfSizeD) {
  GnioNet net(NetConfig::tiny(), 1);
  Tape tape(false);
  const Output o = net.forward(tape, Tensor::zeros({1, 6, 100}), false);
  ASSERT_EQ(o.f.shape(), (ad::Shape{1, 64}));
  for (double v : o.f.data()) EXPECT_TRUE(std::isfinite(v));
  const Output o200 = net.forward(tape, Tensor::zeros({1, 6, 200}), false);
  EXPECT_EQ(o200.f.shape(), (ad::Shape{1, 64}));
}

TEST(Encoder, RejectsWrongChannelCount) {
  GnioNet net(NetConfig::tiny(), 1);
  Tape tape(false);
  EXPECT_THROW(net.forward(tape, Tensor::zeros({1, 5, 100}), false), ShapeError);
}

TEST(Encoder, IdenticalWindowsGiveIdenticalFeatures) {
  GnioNet net(NetConfig::tiny(), 2);
  std::mt19937_64 rng(3);
  const Tensor x = random_input(rng);
  std::vector<double> two(x.data().begin(), x.data().end());
  two.insert(two.end(), x.data().begin(), x.data().end());
  Tape tape(false);
  const Output o = net.forward(tape, Tensor({2, 6, 100}, two), false);
  // Batch rows may take different GEMM kernel paths, so compare to rounding.
  for (std::size_t i = 0; i < 64; ++i) EXPECT_NEAR(o.f.at(i), o.f.at(64 + i), 1e-12 * std::max(1.0, std::abs(o.f.at(i))));
  const Output once = net.forward(tape, x, false), again = net.forward(tape, x, false);
  for (std::size_t i = 0; i < 64; ++i) {
    EXPECT_EQ(again.f.at(i), once.f.at(i));
    EXPECT_NEAR(once.f.at(i), o.f.at(i), 1e-12 * std::max(1.0, std::abs(o.f.at(i))));
  }
}

TEST(Encoder, MatchesStraightLineReference) {
  GnioNet net(NetConfig::tiny(), 4);
  randomize_running_stats(net, 5);
  std::mt19937_64 rng(6);
  for (std::size_t N : {100u, 200u}) {
    const Tensor x = random_input(rng, 1, N);
    Tape tape(false);
    const Output o = net.forward(tape, x, false);
    const auto st = net.state();
    const std::vector<double> ref = Ref{st}.encode(to_mat(x));
    ASSERT_EQ(ref.size(), o.f.numel());
    for (std::size_t i = 0; i < ref.size(); ++i)
      EXPECT_NEAR(o.f.at(i), ref[i], 1e-10 * std::max(1.0, std::abs(ref[i])));
  }
}

TEST(Encoder, ProjectionWhenLastStageDiffersFromD) {
  NetConfig c = NetConfig::tiny();
  c.D = 32;
  GnioNet net(c, 1);
  ASSERT_TRUE(net.encoder().proj.has_value());
  Tape tape(false);
  EXPECT_EQ(net.forward(tape, Tensor::zeros({1, 6, 100}), false).f.shape(), (ad::Shape{1, 32}));
}

MotionBank hand_bank() {
  // m = 2, D = 4, heads = 1.
  MotionBank b;
  b.heads = 1;
  b.M = Tensor({2, 4}, {1, 0, 2, -1, 0, 1, -1, 3});
  Eigen::Matrix4d I = Eigen::Matrix4d::Identity();
  std::vector<double> eye(I.data(), I.data() + 16);
  b.W_Q = Tensor({4, 4}, eye);
  b.W_K = Tensor({4, 4}, {1, 0, 0, 0, 0, 2, 0, 0, 0, 0, 1, 0, 1, 0, 0, 1});
  b.W_V = Tensor({4, 4}, {2, 0, 0, 0, 0, 1, 0, 0, 0, 0, 3, 0, 0, 0, 0, 1});
  return b;
}

TEST(Bank, HandComputedTwoPrototypeOracle) {
  MotionBank b = hand_bank();
  // By hand: K = M W_K has rows (0,0,2,-1) and (3,2,-1,3); V = M W_V has rows
  // (2,0,6,-1) and (0,1,-3,3); d_k = 4 so logits are f.K_j / 2.
  const double V[2][4] = {{2, 0, 6, -1}, {0, 1, -3, 3}};
  struct Case {
    std::vector<double> f;
    double l0, l1;
  };
  const Case cases[] = {{{1, 2, 0, -1}, 0.5, 2.0}, {{1, 0, 0, 0}, 0.0, 1.5}, {{0, 0, 1, 1}, 0.5, 1.0}};
  for (const auto& cs : cases) {
    Tape tape(false);
    const Attention a = bank_attend(tape, b, Tensor({1, 4}, cs.f));
    const double e0 = std::exp(cs.l0), e1 = std::exp(cs.l1);
    const double p0 = e0 / (e0 + e1), p1 = e1 / (e0 + e1);
    EXPECT_NEAR(a.weights[0].at(0), p0, 1e-12);
    EXPECT_NEAR(a.weights[0].at(1), p1, 1e-12);
    for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(a.c.at(i), p0 * V[0][i] + p1 * V[1][i], 1e-12);
  }
}

TEST(Bank, SinglePrototypeReturnsItsValueRow) {
  std::mt19937_64 rng(7);
  MotionBank b;
  b.heads = 1;
  b.M = test::random_tensor(rng, {1, 8});
  b.W_Q = test::random_tensor(rng, {8, 8});
  b.W_K = test::random_tensor(rng, {8, 8});
  b.W_V = test::random_tensor(rng, {8, 8});
  Tape tape(false);
  const Attention a = bank_attend(tape, b, test::random_tensor(rng, {3, 8}));
  const Tensor V = ad::matmul(tape, b.M, b.W_V);
  for (std::size_t r = 0; r < 3; ++r) {
    EXPECT_EQ(a.weights[0].at(r), 1.0);
    for (std::size_t i = 0; i < 8; ++i) EXPECT_EQ(a.c.at(r * 8 + i), V.at(i));
  }
}

TEST(Bank, ZeroQueryGivesMeanOfValues) {
  std::mt19937_64 rng(8);
  MotionBank b;
  b.heads = 1;
  b.M = test::random_tensor(rng, {5, 8});
  b.W_Q = Tensor::zeros({8, 8});
  b.W_K = test::random_tensor(rng, {8, 8});
  b.W_V = test::random_tensor(rng, {8, 8});
  Tape tape(false);
  const Attention a = bank_attend(tape, b, test::random_tensor(rng, {1, 8}));
  const Tensor V = ad::matmul(tape, b.M, b.W_V);
  for (std::size_t i = 0; i < 8; ++i) {
    double mean = 0.0;
    for (std::size_t r = 0; r < 5; ++r) mean += V.at(r * 8 + i) / 5.0;
    EXPECT_NEAR(a.c.at(i), mean, 1e-12);
  }
}

TEST(Bank, AttentionRowsAreDistributionsForEveryHead) {
  NetConfig c = NetConfig::tiny();
  c.heads = 4;
  GnioNet net(c, 9);
  std::mt19937_64 rng(10);
  Tape tape(false);
  const Output o = net.forward(tape, random_input(rng, 4), false);
  ASSERT_EQ(o.attention.size(), 4u);
  for (const auto& A : o.attention) {
    ASSERT_EQ(A.shape(), (ad::Shape{4, c.m}));
    for (std::size_t b = 0; b < 4; ++b) {
      double sum = 0.0;
      for (std::size_t j = 0; j < c.m; ++j) {
        EXPECT_GT(A.at(b * c.m + j), 0.0);
        sum += A.at(b * c.m + j);
      }
      EXPECT_NEAR(sum, 1.0, 1e-9);
    }
  }
}

TEST(Bank, RejectsIndivisibleHeads) {
  NetConfig c = NetConfig::tiny();
  c.heads = 3;
  EXPECT_THROW(GnioNet(c, 0), ConfigError);
}

TEST(Fuse, IsElementwiseSum) {
  std::mt19937_64 rng(11);
  Tape tape(false);
  // Dyadic values keep the sum exact.
  auto dyadic = [&] {
    std::uniform_int_distribution<int> k(-4096, 4096);
    std::vector<double> v(32);
    for (auto& x : v) x = k(rng) / 1024.0;
    return Tensor({2, 16}, v);
  };
  const Tensor f = dyadic(), c = dyadic();
  const Tensor z = Tensor::zeros({2, 16});
  const Tensor h = fuse(tape, f, c);
  for (std::size_t i = 0; i < 32; ++i) {
    EXPECT_EQ(h.at(i) - f.at(i), c.at(i));
    EXPECT_EQ(fuse(tape, f, z).at(i), f.at(i));
    EXPECT_EQ(fuse(tape, z, c).at(i), c.at(i));
  }
}

HeadParams zero_head(std::size_t D, GateFn g, ScaleFn s) {
  HeadParams h;
  h.gate_fn = g;
  h.scale_fn = s;
  h.W_s = Tensor::zeros({3, D});
  h.W_g = Tensor::zeros({3, D});
  h.W_u = Tensor::zeros({3, D});
  h.b_s = Tensor::zeros({3});
  h.b_g = Tensor::zeros({3});
  h.b_u = Tensor::zeros({3});
  return h;
}

TEST(GatedHead, GateZeroSuppressesEveryScaleVariant) {
  std::mt19937_64 rng(12);
  for (ScaleFn s : {ScaleFn::Softplus, ScaleFn::PosElu, ScaleFn::Abs, ScaleFn::Exp, ScaleFn::Linear}) {
    HeadParams h = zero_head(8, GateFn::Tanh, s);
    h.W_s = test::random_tensor(rng, {3, 8}, -3, 3);
    h.b_s = test::random_tensor(rng, {3}, -3, 3);
    Tape tape(false);
    const GatedOutput o = gated_head(tape, h, test::random_tensor(rng, {4, 8}, -3, 3));
    for (double v : o.g.data()) EXPECT_EQ(v, 0.0);
    for (double v : o.d.data()) EXPECT_EQ(std::abs(v), 0.0) << to_string(s);
  }
}

TEST(GatedHead, SoftplusOfZeroIsLn2) {
  HeadParams h = zero_head(8, GateFn::Tanh, ScaleFn::Softplus);
  Tape tape(false);
  const GatedOutput o = gated_head(tape, h, Tensor::full({1, 8}, 0.3));
  for (double v : o.s.data()) EXPECT_NEAR(v, std::numbers::ln2, 1e-12);
}

TEST(GatedHead, ElementwiseProduct) {
  HeadParams h = zero_head(2, GateFn::Tanh, ScaleFn::Linear);
  h.b_s = Tensor({3}, {1.0, 2.0, 0.5});
  h.b_g = Tensor({3}, {std::atanh(-0.5), 0.0, std::atanh(0.8)});
  Tape tape(false);
  const GatedOutput o = gated_head(tape, h, Tensor::zeros({1, 2}));
  const double expect[3] = {-0.5, 0.0, 0.4};
  for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(o.d.at(i), expect[i], 1e-15);
}

TEST(GatedHead, MagnitudeBoundedByScale) {
  std::mt19937_64 rng(13);
  for (GateFn g : {GateFn::Tanh, GateFn::Sigmoid}) {
    for (ScaleFn s : {ScaleFn::Softplus, ScaleFn::PosElu, ScaleFn::Abs, ScaleFn::Exp}) {
      HeadParams h = zero_head(8, g, s);
      h.W_s = test::random_tensor(rng, {3, 8}, -2, 2);
      h.W_g = test::random_tensor(rng, {3, 8}, -2, 2);
      Tape tape(false);
      const GatedOutput o = gated_head(tape, h, test::random_tensor(rng, {50, 8}, -3, 3));
      for (std::size_t i = 0; i < o.d.numel(); ++i) {
        EXPECT_GE(o.s.at(i), 0.0);
        EXPECT_LE(std::abs(o.d.at(i)), o.s.at(i));
        if (g == GateFn::Sigmoid) {
          EXPECT_GE(o.g.at(i), 0.0);
        }
        EXPECT_LE(std::abs(o.g.at(i)), 1.0);
      }
    }
  }
}

TEST(Uncertainty, CovarianceConstruction) {
  EXPECT_EQ(covariance_from_log_sigma(Eigen::Vector3d::Zero()), Eigen::Matrix3d::Identity());
  const Eigen::Matrix3d S = covariance_from_log_sigma({std::numbers::ln2, 0, 0});
  EXPECT_NEAR(S(0, 0), 4.0, 1e-14);
  EXPECT_EQ(S(1, 1), 1.0);
  EXPECT_EQ(S(0, 1), 0.0);
  std::mt19937_64 rng(14);
  std::uniform_real_distribution<double> u(-2, 2);
  for (int i = 0; i < 100; ++i) {
    const Eigen::Vector3d v(u(rng), u(rng), u(rng));
    const double det = covariance_from_log_sigma(v).determinant();
    const double expect = std::exp(2.0 * v.sum());
    EXPECT_NEAR(det, expect, 1e-12 * expect);
    EXPECT_NEAR(std::log(det), 2.0 * v.sum(), 1e-12);
  }
}

TEST(Forward, RepeatedEvalCallsAreBitIdentical) {
  GnioNet net(NetConfig::tiny(), 15);
  std::mt19937_64 rng(16);
  const Tensor x = random_input(rng, 3);
  Tape tape(false);
  const Output a = net.forward(tape, x, false), b = net.forward(tape, x, false);
  for (std::size_t i = 0; i < a.d_hat.numel(); ++i) {
    EXPECT_EQ(a.d_hat.at(i), b.d_hat.at(i));
    EXPECT_EQ(a.u.at(i), b.u.at(i));
  }
}

TEST(Forward, YawRotatedSequenceGivesSamePrediction) {
  using namespace gnio::imu;
  GnioNet net(NetConfig::tiny(), 17);
  randomize_running_stats(net, 18);
  const Sequence seq = synth_generate(random_walk_spec(8.0, 100.0, 19, {0.01, 0.05, {}, {}}));
  Sequence rot = seq;
  const Eigen::AngleAxisd rz(1.234, Eigen::Vector3d::UnitZ());
  for (auto& p : rot.gt) {
    p.p = rz * p.p;
    p.q = (Eigen::Quaterniond(rz) * p.q).normalized();
  }
  const auto wa = window_stream(seq), wb = window_stream(rot);
  const auto pa = predict(net, wa), pb = predict(net, wb);
  ASSERT_EQ(pa.size(), pb.size());
  for (std::size_t k = 0; k < pa.size(); ++k)
    for (int i = 0; i < 3; ++i) {
      EXPECT_NEAR(pa[k].d_hat[i], pb[k].d_hat[i], 1e-6 * std::max(1.0, std::abs(pa[k].d_hat[i])));
      EXPECT_NEAR(pa[k].u[i], pb[k].u[i], 1e-6 * std::max(1.0, std::abs(pa[k].u[i])));
    }
}

TEST(Forward, InputGradientMatchesFiniteDifferences) {
  GnioNet net(NetConfig::tiny(), 20);
  randomize_running_stats(net, 21);
  std::mt19937_64 rng(22);
  // Eval mode on a single window; training mode on a batch, where the batch
  // statistics span enough samples to keep ReLU kinks outside the stencil.
  struct Case {
    bool training;
    std::size_t B, N;
  };
  for (const Case cs : {Case{false, 1, 100}, Case{true, 4, 200}}) {
    const Tensor x = random_input(rng, cs.B, cs.N);
    const Tensor w1 = test::random_tensor(rng, {cs.B, 3}), w2 = test::random_tensor(rng, {cs.B, 3});
    auto f = [&](Tape& tape, const Tensor& in) {
      const Output o = net.forward(tape, in, cs.training);
      return ad::add(tape, test::weighted_sum(tape, o.d_hat, w1), test::weighted_sum(tape, o.u, w2));
    };
    const auto report = ad::gradient_check(f, x, 1e-5, 1e-3);
    EXPECT_LT(report.max_rel_error, 1e-3) << "training=" << cs.training;
  }
}

TEST(Capacity, DefaultConfigNearPaperCount) {
  GnioNet net(NetConfig{}, 0);
  const double count = static_cast<double>(net.parameter_count());
  std::printf("default config parameters: %.0f (%.3f M)\n", count, count / 1e6);
  EXPECT_GT(count, 0.7 * 4.90e6);
  EXPECT_LT(count, 1.3 * 4.90e6);
}

TEST(Checkpoint, SaveLoadRestoresPredictions) {
  NetConfig c = NetConfig::tiny();
  c.gate_fn = GateFn::Sigmoid;
  c.scale_fn = ScaleFn::PosElu;
  GnioNet net(c, 23);
  randomize_running_stats(net, 24);
  const auto path = std::filesystem::temp_directory_path() / "gnio_test_net.ckpt";
  save_net(path, net);
  GnioNet back = load_net(path);
  EXPECT_EQ(back.config().gate_fn, GateFn::Sigmoid);
  EXPECT_EQ(back.config().scale_fn, ScaleFn::PosElu);
  std::mt19937_64 rng(25);
  const Tensor x = random_input(rng, 2);
  Tape tape(false);
  const Output a = net.forward(tape, x, false), b = back.forward(tape, x, false);
  for (std::size_t i = 0; i < a.d_hat.numel(); ++i) EXPECT_EQ(a.d_hat.at(i), b.d_hat.at(i));

  NetConfig other = NetConfig::tiny();
  other.m = 16;
  GnioNet wrong(other, 0);
  EXPECT_THROW(wrong.load_state(ad::load_checkpoint(path)), ConfigError);
  std::filesystem::remove(path);
  std::filesystem::remove(config_sidecar(path));
}

TEST(Config, JsonRoundTripAndUnknownKeys) {
  NetConfig c;
  c.m = 32;
  c.heads = 8;
  c.scale_fn = ScaleFn::Exp;
  const NetConfig back = net_config_from_json(to_json(c));
  EXPECT_EQ(back.m, 32u);
  EXPECT_EQ(back.heads, 8u);
  EXPECT_EQ(back.scale_fn, ScaleFn::Exp);
  EXPECT_THROW(net_config_from_json(nlohmann::json{{"depth", 3}}), ConfigError);
  EXPECT_THROW(net_config_from_json(nlohmann::json{{"gate_fn", "relu"}}), ConfigError);
}

}  // namespace
