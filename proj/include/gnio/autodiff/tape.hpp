#pragma once

#include <cstddef>
#include <functional>
#include <vector>

#include "gnio/autodiff/tensor.hpp"

namespace gnio::ad {

/// Ordered record of differentiable operations for one forward pass.
///
/// Operations append a backward rule when any input requires a gradient, so
/// nodes are in topological order by construction. backward() replays them in
/// reverse exactly once and then clears the tape; a tape is reusable for the
/// next forward pass afterwards. A tape is single-owner and not thread-safe.
///
/// A disabled tape records nothing and ops return tensors that do not require
/// gradients (inference mode).
class Tape {
 public:
  explicit Tape(bool enabled = true) : enabled_(enabled) {}

  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool enabled() const { return enabled_; }
  std::size_t size() const { return nodes_.size(); }
  bool empty() const { return nodes_.empty(); }

  /// Whether an op with these inputs must be recorded.
  bool should_record(std::initializer_list<const Tensor*> inputs) const;

  void record(std::function<void()> backward_rule);

  /// Seeds d(loss)/d(loss) = 1 and accumulates gradients into every tensor
  /// on the path to a requires_grad leaf. Throws ShapeError if loss is not
  /// scalar; throws std::logic_error on an empty tape.
  void backward(Tensor& loss);

  void clear() { nodes_.clear(); }

 private:
  bool enabled_;
  std::vector<std::function<void()>> nodes_;
};

}  // namespace gnio::ad
