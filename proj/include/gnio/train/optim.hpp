#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "gnio/autodiff/checkpoint.hpp"
#include "gnio/autodiff/tensor.hpp"

namespace gnio::train {

using ad::Tensor;

struct ScheduleSpec {
  double lr_start = 1e-6;
  double lr_peak = 1e-4;
  double warmup_epochs = 5.0;
  double total_epochs = 200.0;
  double lr_min = 1e-6;

  void validate() const;
};

/// Linear warm-up from lr_start to lr_peak, then cosine annealing to lr_min
/// at total_epochs. Throws ConfigError outside [0, total_epochs].
double lr_at(double epoch, const ScheduleSpec& spec);

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Bias-corrected Adam over a fixed list of named parameters.
class Adam {
 public:
  explicit Adam(std::vector<std::pair<std::string, Tensor>> params, AdamConfig cfg = {});

  /// Applies one update from the current gradients; parameters without a
  /// gradient buffer are treated as having zero gradient.
  void step(double lr);
  void zero_grad();
  std::uint64_t steps() const { return t_; }

  /// Moments as "adam.m.<name>" / "adam.v.<name>" plus "adam.step".
  void save_state(ad::NamedTensors& out) const;
  void load_state(const ad::NamedTensors& in);

 private:
  std::vector<std::pair<std::string, Tensor>> params_;
  std::vector<std::vector<double>> m_, v_;
  AdamConfig cfg_;
  std::uint64_t t_ = 0;
};

/// Global L2 norm of all gradients.
double grad_norm(std::span<const Tensor> params);

/// Rescales gradients so their global norm is at most max_norm; returns the
/// norm before clipping.
double clip_grad_norm(std::span<Tensor> params, double max_norm);

}  // namespace gnio::train
