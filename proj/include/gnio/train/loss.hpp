#pragma once

#include "gnio/autodiff/ops.hpp"

namespace gnio::train {

using ad::Tape;
using ad::Tensor;

struct LossWeights {
  double lambda_mse = 1e2;
  double lambda_nll = 1e-4;

  void validate() const;
};

/// Batch mean of ||d_gt - d_hat||^2. Inputs are [B, 3].
Tensor loss_mse(Tape& tape, const Tensor& d_gt, const Tensor& d_hat);

/// Batch mean of sum_i e_i^2 / (2 exp(2 u_i)) + u_i with e = d_gt - d_hat.
Tensor loss_nll(Tape& tape, const Tensor& d_gt, const Tensor& d_hat, const Tensor& u);

struct LossTerms {
  Tensor total, mse, nll;
};

LossTerms loss_total(Tape& tape, const Tensor& d_gt, const Tensor& d_hat, const Tensor& u,
                     const LossWeights& w);

}  // namespace gnio::train
