#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "gnio/autodiff/checkpoint.hpp"
#include "gnio/autodiff/ops.hpp"
#include "gnio/imu/types.hpp"
#include "gnio/net/config.hpp"

namespace gnio::net {

using ad::Tape;
using ad::Tensor;

struct ConvBn {
  Tensor weight;  ///< [Cout, Cin, K]
  Tensor gamma, beta;
  ad::BatchNormStats stats;
  ad::Conv1dOptions opts;

  Tensor forward(Tape& tape, const Tensor& x, bool training, bool relu);
};

struct BasicBlock {
  ConvBn conv1, conv2;
  std::optional<ConvBn> shortcut;

  Tensor forward(Tape& tape, const Tensor& x, bool training);
};

struct Encoder {
  ConvBn stem;
  std::vector<BasicBlock> blocks;
  /// Present only when the last stage width differs from D.
  std::optional<std::pair<Tensor, Tensor>> proj;

  /// [B, 6, N] -> [B, D]
  Tensor forward(Tape& tape, const Tensor& x, bool training);
};

struct MotionBank {
  Tensor M;                 ///< [m, D]
  Tensor W_Q, W_K, W_V;     ///< [D, D], applied as x W
  std::optional<Tensor> W_O;
  std::size_t heads = 1;
};

struct HeadParams {
  Tensor W_s, b_s, W_g, b_g, W_u, b_u;  ///< W [3, D], b [3]
  GateFn gate_fn = GateFn::Tanh;
  ScaleFn scale_fn = ScaleFn::Softplus;
};

struct Attention {
  Tensor c;                      ///< [B, D]
  std::vector<Tensor> weights;   ///< per head, [B, m]
};

/// c = softmax((f W_Q)(M W_K)^T / sqrt(d_k)) (M W_V) per head, concatenated
/// and projected by W_O when there is more than one head.
Attention bank_attend(Tape& tape, const MotionBank& bank, const Tensor& f);

/// h = f + c
Tensor fuse(Tape& tape, const Tensor& f, const Tensor& c);

struct GatedOutput {
  Tensor s;  ///< scale_fn(W_s h + b_s)
  Tensor g;  ///< gate_fn(W_g h + b_g)
  Tensor d;  ///< s * g
};
GatedOutput gated_head(Tape& tape, const HeadParams& head, const Tensor& h);

/// Log standard deviation u = W_u h + b_u, [B, 3].
Tensor uncertainty(Tape& tape, const HeadParams& head, const Tensor& h);

/// diag(exp(2u)).
Eigen::Matrix3d covariance_from_log_sigma(const Eigen::Vector3d& u);

Tensor apply_scale_fn(Tape& tape, ScaleFn fn, const Tensor& x);
Tensor apply_gate_fn(Tape& tape, GateFn fn, const Tensor& x);

struct Output {
  Tensor d_hat;  ///< [B, 3]
  Tensor u;      ///< [B, 3]
  Tensor f, c, h;
  Tensor g, s;
  std::vector<Tensor> attention;
};

class GnioNet {
 public:
  explicit GnioNet(const NetConfig& config, std::uint64_t seed = 0);

  const NetConfig& config() const { return config_; }
  Encoder& encoder() { return encoder_; }
  MotionBank& bank() { return bank_; }
  HeadParams& head() { return head_; }

  /// X is [B, 6, N]. Training mode uses batch statistics and updates the
  /// running averages; eval mode is a pure function of X.
  Output forward(Tape& tape, const Tensor& X, bool training);

  /// Learnable tensors by name. The handles share storage with the network.
  std::vector<std::pair<std::string, Tensor>> parameters();
  std::size_t parameter_count();

  /// Parameters plus batch-norm running statistics.
  ad::NamedTensors state();
  /// Throws ConfigError on missing names or shape mismatches.
  void load_state(const ad::NamedTensors& state);

 private:
  void visit(const std::function<void(const std::string&, Tensor&)>& fn);
  void visit_stats(const std::function<void(const std::string&, ad::BatchNormStats&)>& fn);

  NetConfig config_;
  Encoder encoder_;
  MotionBank bank_;
  HeadParams head_;
};

/// Stacks windows into a [B, 6, N] input (channel-major).
Tensor windows_to_input(std::span<const imu::Window> windows);
Tensor block_to_input(const imu::AlignedBlock& X);

struct Prediction {
  Eigen::Vector3d d_hat = Eigen::Vector3d::Zero();
  Eigen::Vector3d u = Eigen::Vector3d::Zero();
  Eigen::Vector3d gate = Eigen::Vector3d::Zero();

  [[nodiscard]] Eigen::Matrix3d covariance() const { return covariance_from_log_sigma(u); }
};

/// Eval-mode prediction for a batch of windows.
std::vector<Prediction> predict(GnioNet& net, std::span<const imu::Window> windows);
Prediction predict(GnioNet& net, const imu::AlignedBlock& X);

/// Writes the weights to `path` and the architecture to `path` + ".json".
void save_net(const std::filesystem::path& path, GnioNet& net);
GnioNet load_net(const std::filesystem::path& path);
std::filesystem::path config_sidecar(const std::filesystem::path& checkpoint);

}  // namespace gnio::net
