#pragma once

#include <cstddef>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace gnio::ad {

using Shape = std::vector<std::size_t>;

std::size_t numel_of(const Shape& shape);
std::string shape_str(const Shape& shape);

/// Dense row-major tensor of 64-bit reals.
///
/// A Tensor is a cheap handle: copies share the same storage, which is how
/// recorded operations refer back to their inputs during the backward pass.
/// Data is immutable through the public interface once the tensor has been
/// used in an operation, except for parameters, which the optimizer updates
/// in place via mutable_data().
class Tensor {
 public:
  Tensor() = default;

  /// Rejects non-finite values and shape/data size mismatch.
  Tensor(Shape shape, std::vector<double> data, bool requires_grad = false);

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  /// Op-output constructor: the finiteness scan only runs in debug builds.
  static Tensor from_op(Shape shape, std::vector<double> data, bool requires_grad);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t dim(std::size_t i) const;
  std::size_t numel() const;

  std::span<const double> data() const;
  std::span<double> mutable_data();
  double item() const;
  double at(std::size_t i) const { return data()[i]; }

  bool requires_grad() const;
  void set_requires_grad(bool value);

  /// Gradient buffer; empty until the first backward touches this tensor.
  bool has_grad() const;
  std::span<const double> grad() const;
  /// Allocates a zeroed gradient buffer on first use. Gradient accumulation
  /// is the one mutation allowed through a const handle.
  std::span<double> mutable_grad() const;
  void zero_grad();

  /// Deep copy without gradient history.
  Tensor detach_copy() const;

  bool same_storage(const Tensor& other) const { return impl_ == other.impl_; }

 private:
  struct Impl {
    Shape shape;
    std::vector<double> data;
    std::vector<double> grad;
    bool requires_grad = false;
  };
  std::shared_ptr<Impl> impl_;
};

}  // namespace gnio::ad
