#pragma once

#include <cstddef>
#include <vector>

#include "gnio/autodiff/tape.hpp"
#include "gnio/autodiff/tensor.hpp"

// Differentiable primitives. Every op takes the tape it records on; shapes are
// validated up front and mismatches throw ShapeError naming the op and dims.
namespace gnio::ad {

// Elementwise binary ops; operands must have identical shapes.
Tensor add(Tape& tape, const Tensor& a, const Tensor& b);
Tensor sub(Tape& tape, const Tensor& a, const Tensor& b);
Tensor mul(Tape& tape, const Tensor& a, const Tensor& b);

Tensor scale(Tape& tape, const Tensor& x, double factor);
Tensor add_scalar(Tape& tape, const Tensor& x, double offset);

// Elementwise activations.
Tensor relu(Tape& tape, const Tensor& x);
Tensor tanh(Tape& tape, const Tensor& x);
Tensor sigmoid(Tape& tape, const Tensor& x);
Tensor softplus(Tape& tape, const Tensor& x);
/// ELU with alpha = 1.
Tensor elu(Tape& tape, const Tensor& x);
/// d|x|/dx at 0 is taken as 0.
Tensor abs(Tape& tape, const Tensor& x);
Tensor exp(Tape& tape, const Tensor& x);
Tensor log(Tape& tape, const Tensor& x);

/// Softmax over the last axis.
Tensor softmax(Tape& tape, const Tensor& x);

/// [n,k] x [k,m] -> [n,m].
Tensor matmul(Tape& tape, const Tensor& a, const Tensor& b);
/// 2-D transpose.
Tensor transpose(Tape& tape, const Tensor& a);
/// Affine map y = x W^T + b with x [B,in], W [out,in], b [out].
Tensor linear(Tape& tape, const Tensor& x, const Tensor& weight, const Tensor& bias);

/// Columns [begin, end) of a 2-D tensor.
Tensor slice_cols(Tape& tape, const Tensor& x, std::size_t begin, std::size_t end);
/// Column-wise concatenation of 2-D tensors with equal row counts.
Tensor concat_cols(Tape& tape, const std::vector<Tensor>& parts);

struct Conv1dOptions {
  std::size_t stride = 1;
  std::size_t padding = 0;
};

/// Cross-correlation without bias. Input [B,Cin,L] (or [Cin,L]), kernel
/// [Cout,Cin,K]; output [B,Cout,Lout] (or [Cout,Lout]) with
/// Lout = (L + 2*padding - K) / stride + 1.
Tensor conv1d(Tape& tape, const Tensor& input, const Tensor& kernel, Conv1dOptions opts = {});

/// Running statistics owned by a batch-norm layer.
struct BatchNormStats {
  explicit BatchNormStats(std::size_t channels = 0)
      : running_mean(channels, 0.0), running_var(channels, 1.0) {}
  std::vector<double> running_mean;
  std::vector<double> running_var;
  double momentum = 0.1;
  double eps = 1e-5;
};

/// Per-channel normalization of [B,C,L] or [B,C]. Training mode normalizes
/// with (biased) batch statistics and folds them into the running averages
/// (unbiased variance); eval mode applies the running statistics as a fixed
/// affine map.
Tensor batchnorm1d(Tape& tape, const Tensor& input, const Tensor& gamma, const Tensor& beta,
                   BatchNormStats& stats, bool training);

/// Mean over the last axis: [B,C,L] -> [B,C].
Tensor global_avg_pool(Tape& tape, const Tensor& x);

/// Sum / mean of all elements, returned as a rank-0 scalar.
Tensor reduce_sum(Tape& tape, const Tensor& x);
Tensor reduce_mean(Tape& tape, const Tensor& x);

}  // namespace gnio::ad
