#pragma once

#include <cstddef>
#include <functional>
#include <vector>

#include "gnio/autodiff/tape.hpp"
#include "gnio/autodiff/tensor.hpp"

namespace gnio::ad {

struct GradCheckEntry {
  std::size_t index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  double rel_error = 0.0;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;
  double max_rel_error = 0.0;
  bool passed = false;
};

/// Scalar-valued function of one tensor, recorded on the given tape.
using ScalarFn = std::function<Tensor(Tape&, const Tensor&)>;

/// Relative error |a - n| / max(|a|, |n|, floor).
double relative_error(double analytic, double numeric, double floor = 1e-6);

/// Compares the reverse-mode gradient of f at x against central differences
/// with step h, element by element. Report-only: never throws on mismatch.
GradCheckReport gradient_check(const ScalarFn& f, const Tensor& x, double h = 1e-5,
                               double tol = 1e-4);

}  // namespace gnio::ad
