#include "gnio/train/loss.hpp"

#include <cmath>

#include "gnio/error.hpp"

namespace gnio::train {
namespace {

void check_pair(const char* op, const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || a.dim(1) != 3 || a.shape() != b.shape())
    throw ShapeError(std::string(op) + ": expected matching [B,3] tensors, got " +
                     ad::shape_str(a.shape()) + " and " + ad::shape_str(b.shape()));
}

double inv_batch(const Tensor& t) { return 1.0 / static_cast<double>(t.dim(0)); }

}  // namespace

void LossWeights::validate() const {
  if (!(lambda_mse >= 0.0) || !(lambda_nll >= 0.0) || !std::isfinite(lambda_mse) ||
      !std::isfinite(lambda_nll))
    throw ConfigError("loss weights must be finite and non-negative");
}

Tensor loss_mse(Tape& tape, const Tensor& d_gt, const Tensor& d_hat) {
  check_pair("loss_mse", d_gt, d_hat);
  const Tensor e = ad::sub(tape, d_gt, d_hat);
  return ad::scale(tape, ad::reduce_sum(tape, ad::mul(tape, e, e)), inv_batch(d_gt));
}

Tensor loss_nll(Tape& tape, const Tensor& d_gt, const Tensor& d_hat, const Tensor& u) {
  check_pair("loss_nll", d_gt, d_hat);
  check_pair("loss_nll", d_gt, u);
  const Tensor e = ad::sub(tape, d_gt, d_hat);
  const Tensor inv_var = ad::exp(tape, ad::scale(tape, u, -2.0));
  const Tensor quad = ad::scale(tape, ad::mul(tape, ad::mul(tape, e, e), inv_var), 0.5);
  return ad::scale(tape, ad::reduce_sum(tape, ad::add(tape, quad, u)), inv_batch(d_gt));
}

LossTerms loss_total(Tape& tape, const Tensor& d_gt, const Tensor& d_hat, const Tensor& u,
                     const LossWeights& w) {
  LossTerms t;
  t.mse = loss_mse(tape, d_gt, d_hat);
  t.nll = loss_nll(tape, d_gt, d_hat, u);
  t.total = ad::add(tape, ad::scale(tape, t.mse, w.lambda_mse), ad::scale(tape, t.nll, w.lambda_nll));
  return t;
}

}  // namespace gnio::train
