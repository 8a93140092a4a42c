#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "gnio/autodiff/gradcheck.hpp"
#include "gnio/imu/types.hpp"
#include "gnio/net/gnio_net.hpp"
#include "gnio/train/loss.hpp"
#include "gnio/train/optim.hpp"

namespace gnio::train {

struct TrainConfig {
  std::uint64_t seed = 0;
  std::size_t batch = 64;
  std::size_t epochs = 50;
  ScheduleSpec schedule{.total_epochs = 50.0};
  LossWeights loss;
  double nll_delay_epochs = 0.0;
  double clip_norm = 10.0;
  /// Write a checkpoint every k epochs (0 = only at the end) when a path is set.
  std::size_t checkpoint_every = 0;

  void validate() const;
};

/// Unknown keys are rejected. When `schedule.total_epochs` is absent it
/// follows `epochs` (at least 1); an absent `warmup_epochs` is capped at a tenth of it.
TrainConfig train_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const TrainConfig& c);

struct EpochLog {
  std::size_t epoch = 0;  ///< 1-based
  double lr = 0.0;        ///< at the last step of the epoch
  double loss_total = 0.0;
  double loss_mse = 0.0;
  double loss_nll = 0.0;
  double gate_abs_mean_stationary = 0.0;
  double gate_abs_mean_moving = 0.0;
};

void write_log_csv(const std::filesystem::path& path, std::span<const EpochLog> log);
std::vector<EpochLog> read_log_csv(const std::filesystem::path& path);

class Trainer {
 public:
  Trainer(net::GnioNet& net, TrainConfig config);

  /// Runs the remaining epochs up to config.epochs. `on_epoch` sees each log
  /// row as it is produced. Throws NumericError on a non-finite loss.
  std::vector<EpochLog> run(std::span<const imu::Window> data,
                            const std::function<void(const EpochLog&)>& on_epoch = {});

  /// One pass over the data in seeded shuffled order.
  EpochLog run_epoch(std::span<const imu::Window> data);

  std::size_t epochs_done() const { return epoch_; }

  /// Network state, optimizer moments and the epoch counter in one file,
  /// plus the architecture sidecar.
  void save(const std::filesystem::path& path);
  void resume(const std::filesystem::path& path);

  void set_checkpoint_path(std::optional<std::filesystem::path> p) { ckpt_ = std::move(p); }

 private:
  net::GnioNet& net_;
  TrainConfig cfg_;
  Adam adam_;
  std::vector<Tensor> params_;
  std::size_t epoch_ = 0;
  std::optional<std::filesystem::path> ckpt_;
};

/// Batch index order for an epoch; a pure function of (seed, epoch, n).
std::vector<std::size_t> epoch_order(std::uint64_t seed, std::size_t epoch, std::size_t n);

/// Targets as a [B, 3] tensor.
Tensor targets_of(std::span<const imu::Window> windows);

struct LossCheckOptions {
  std::size_t trials = 100;
  std::uint64_t seed = 0;
  double h = 1e-5;
  double tol = 1e-3;
  bool training = false;  ///< batch-norm mode used for both passes
};

/// Central-difference check of d(loss_total)/d(parameter) at randomly chosen
/// parameter entries, each tensor picked with probability proportional to
/// its size.
ad::GradCheckReport loss_gradient_check(net::GnioNet& net, std::span<const imu::Window> batch,
                                        const LossWeights& weights, const LossCheckOptions& opts);

}  // namespace gnio::train
