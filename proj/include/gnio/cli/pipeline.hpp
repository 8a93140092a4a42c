#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "gnio/ekf/filter.hpp"
#include "gnio/eval/metrics.hpp"
#include "gnio/imu/synth.hpp"
#include "gnio/net/gnio_net.hpp"
#include "gnio/train/trainer.hpp"

namespace gnio::cli {

/// Random-walk sequences with per-sequence biases drawn from N(0, bias_sigma^2).
struct DatasetConfig {
  std::size_t count = 1;
  double duration_s = 60.0;
  double rate = 100.0;
  std::uint64_t seed = 0;
  double sigma_g = 0.005;       ///< per-sample gyro noise, rad/s
  double sigma_a = 0.05;        ///< per-sample accel noise, m/s^2
  double bias_g_sigma = 0.002;  ///< rad/s
  double bias_a_sigma = 0.05;   ///< m/s^2

  void validate() const;
};

DatasetConfig dataset_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const DatasetConfig& c);

/// Spec of sequence i; a pure function of (config, i).
imu::SynthSpec dataset_spec(const DatasetConfig& c, std::size_t i);
std::vector<imu::Sequence> generate_dataset(const DatasetConfig& c);

/// A single sequence goes straight into `dir`; several go into seq_000, ...
void save_dataset(const std::filesystem::path& dir, std::span<const imu::Sequence> seqs);

struct NamedSequence {
  std::string name;
  imu::Sequence seq;
};

/// `dir` itself if it holds imu.csv, else every subdirectory that does, in
/// name order. Throws ConfigError when nothing is found.
std::vector<NamedSequence> load_dataset(const std::filesystem::path& dir);

/// Ground-truth aligned windows of every sequence.
std::vector<imu::Window> collect_windows(std::span<const NamedSequence> seqs);

/// Mean over windows of the squared displacement error, as in the training loss.
double window_mse(net::GnioNet& net, std::span<const imu::Window> windows);

enum class Source { Network, Oracle, None };
Source source_from_string(const std::string& s);
std::string to_string(Source s);

struct FuseConfig {
  ekf::FilterConfig filter;
  Source source = Source::Network;
  double oracle_variance = 1e-6;
  double oracle_noise_sigma = 0.0;
  eval::Alignment alignment = eval::Alignment::FirstPose;
};

FuseConfig fuse_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const FuseConfig& c);

struct FuseResult {
  ekf::FilterRun fused;
  ekf::FilterRun dead_reckoning;
  eval::MetricReport metrics;
  eval::MetricReport dr_metrics;
};

/// Runs the filter with the configured source and without measurements.
/// `net` is required for Source::Network.
FuseResult fuse_sequence(const imu::Sequence& seq, const FuseConfig& cfg, net::GnioNet* net,
                         std::uint64_t seed, const std::string& fingerprint = "");

eval::Trajectory to_trajectory(const ekf::FilterRun& run);

enum class AblationAxis { Gating, BankSize };
AblationAxis ablation_axis_from_string(const std::string& s);
std::string to_string(AblationAxis a);

struct AblationRow {
  std::string label;
  net::NetConfig net;
  double window_mse = 0.0;
  double ate_m = 0.0;
  double rmse_m = 0.0;
};

/// The configurations swept along an axis, derived from `base`.
std::vector<AblationRow> ablation_grid(AblationAxis axis, const net::NetConfig& base);

/// Trains every grid entry with the same seed and budget, then scores it on
/// the held-out sequences: window MSE and mean fused ATE.
std::vector<AblationRow> run_ablation(AblationAxis axis, const net::NetConfig& base,
                                      const train::TrainConfig& tcfg, const FuseConfig& fcfg,
                                      std::span<const NamedSequence> train_data,
                                      std::span<const NamedSequence> held_out);

void write_ablation_csv(const std::filesystem::path& path, std::span<const AblationRow> rows);

}  // namespace gnio::cli
