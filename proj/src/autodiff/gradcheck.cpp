#include "gnio/autodiff/gradcheck.hpp"

#include <algorithm>
#include <cmath>

namespace gnio::ad {

double relative_error(double analytic, double numeric, double floor) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), floor});
  return std::abs(analytic - numeric) / denom;
}

GradCheckReport gradient_check(const ScalarFn& f, const Tensor& x, double h, double tol) {
  GradCheckReport report;
  Tensor leaf = x.detach_copy();
  leaf.set_requires_grad(true);
  {
    Tape tape;
    Tensor loss = f(tape, leaf);
    tape.backward(loss);
  }
  const std::vector<double> analytic(leaf.grad().begin(), leaf.grad().end());

  auto eval_at = [&](std::size_t i, double delta) {
    Tensor probe = x.detach_copy();
    probe.set_requires_grad(false);
    probe.mutable_data()[i] += delta;
    Tape tape(false);
    return f(tape, probe).item();
  };

  for (std::size_t i = 0; i < x.numel(); ++i) {
    const double numeric = (eval_at(i, h) - eval_at(i, -h)) / (2.0 * h);
    GradCheckEntry e{i, analytic[i], numeric, relative_error(analytic[i], numeric)};
    report.max_rel_error = std::max(report.max_rel_error, e.rel_error);
    report.entries.push_back(e);
  }
  report.passed = report.max_rel_error < tol;
  return report;
}

}  // namespace gnio::ad
