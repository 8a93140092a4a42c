#include "gnio/autodiff/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <string>

#include "gnio/error.hpp"

namespace gnio::ad {
namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapC = Eigen::Map<const RowMat>;
using Map = Eigen::Map<RowMat>;

void require_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
  }
}

void require_rank(const char* op, const Tensor& t, std::size_t rank, const char* what) {
  if (t.rank() != rank) {
    throw ShapeError(std::string(op) + ": " + what + " must be rank " + std::to_string(rank) +
                     ", got " + shape_str(t.shape()));
  }
}

// Accumulates into an input's gradient only if that input participates.
template <typename F>
void accumulate(const Tensor& t, F&& fn) {
  if (!t.requires_grad()) return;
  fn(t.mutable_grad());
}

// Elementwise unary op. `deriv(x, y)` returns dy/dx from input and output.
template <typename Fwd, typename Deriv>
Tensor unary(Tape& tape, const Tensor& x, Fwd fwd, Deriv deriv) {
  const auto in = x.data();
  std::vector<double> out(in.size());
  for (std::size_t i = 0; i < in.size(); ++i) out[i] = fwd(in[i]);
  const bool rec = tape.should_record({&x});
  Tensor y = Tensor::from_op(x.shape(), std::move(out), rec);
  if (rec) {
    tape.record([x, y, deriv]() mutable {
      if (!y.has_grad()) return;
      accumulate(x, [&](std::span<double> gx) {
        const auto xd = x.data();
        const auto yd = y.data();
        const auto gy = y.grad();
        for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += gy[i] * deriv(xd[i], yd[i]);
      });
    });
  }
  return y;
}

}  // namespace

Tensor add(Tape& tape, const Tensor& a, const Tensor& b) {
  require_same_shape("add", a, b);
  std::vector<double> out(a.numel());
  const auto ad = a.data(), bd = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = ad[i] + bd[i];
  const bool rec = tape.should_record({&a, &b});
  Tensor y = Tensor::from_op(a.shape(), std::move(out), rec);
  if (rec) {
    tape.record([a, b, y]() mutable {
      if (!y.has_grad()) return;
      const auto gy = y.grad();
      accumulate(a, [&](std::span<double> g) {
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += gy[i];
      });
      accumulate(b, [&](std::span<double> g) {
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += gy[i];
      });
    });
  }
  return y;
}

Tensor sub(Tape& tape, const Tensor& a, const Tensor& b) {
  require_same_shape("sub", a, b);
  std::vector<double> out(a.numel());
  const auto ad = a.data(), bd = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = ad[i] - bd[i];
  const bool rec = tape.should_record({&a, &b});
  Tensor y = Tensor::from_op(a.shape(), std::move(out), rec);
  if (rec) {
    tape.record([a, b, y]() mutable {
      if (!y.has_grad()) return;
      const auto gy = y.grad();
      accumulate(a, [&](std::span<double> g) {
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += gy[i];
      });
      accumulate(b, [&](std::span<double> g) {
        for (std::size_t i = 0; i < g.size(); ++i) g[i] -= gy[i];
      });
    });
  }
  return y;
}

Tensor mul(Tape& tape, const Tensor& a, const Tensor& b) {
  require_same_shape("mul", a, b);
  std::vector<double> out(a.numel());
  const auto ad = a.data(), bd = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = ad[i] * bd[i];
  const bool rec = tape.should_record({&a, &b});
  Tensor y = Tensor::from_op(a.shape(), std::move(out), rec);
  if (rec) {
    tape.record([a, b, y]() mutable {
      if (!y.has_grad()) return;
      const auto gy = y.grad();
      const auto ad = a.data(), bd = b.data();
      // Same storage (x*x): both accumulations land in one buffer, as required.
      accumulate(a, [&](std::span<double> g) {
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += gy[i] * bd[i];
      });
      accumulate(b, [&](std::span<double> g) {
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += gy[i] * ad[i];
      });
    });
  }
  return y;
}

Tensor scale(Tape& tape, const Tensor& x, double factor) {
  return unary(
      tape, x, [factor](double v) { return factor * v; },
      [factor](double, double) { return factor; });
}

Tensor add_scalar(Tape& tape, const Tensor& x, double offset) {
  return unary(
      tape, x, [offset](double v) { return v + offset; }, [](double, double) { return 1.0; });
}

Tensor relu(Tape& tape, const Tensor& x) {
  return unary(
      tape, x, [](double v) { return v > 0.0 ? v : 0.0; },
      [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

Tensor tanh(Tape& tape, const Tensor& x) {
  return unary(
      tape, x, [](double v) { return std::tanh(v); },
      [](double, double y) { return 1.0 - y * y; });
}

Tensor sigmoid(Tape& tape, const Tensor& x) {
  return unary(
      tape, x,
      [](double v) {
        if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
        const double e = std::exp(v);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

Tensor softplus(Tape& tape, const Tensor& x) {
  return unary(
      tape, x, [](double v) { return std::max(v, 0.0) + std::log1p(std::exp(-std::abs(v))); },
      [](double v, double) {
        if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
        const double e = std::exp(v);
        return e / (1.0 + e);
      });
}

Tensor elu(Tape& tape, const Tensor& x) {
  return unary(
      tape, x, [](double v) { return v > 0.0 ? v : std::expm1(v); },
      [](double v, double y) { return v > 0.0 ? 1.0 : y + 1.0; });
}

Tensor abs(Tape& tape, const Tensor& x) {
  return unary(
      tape, x, [](double v) { return std::abs(v); },
      [](double v, double) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); });
}

Tensor exp(Tape& tape, const Tensor& x) {
  return unary(
      tape, x, [](double v) { return std::exp(v); }, [](double, double y) { return y; });
}

Tensor log(Tape& tape, const Tensor& x) {
  for (double v : x.data()) {
    if (!(v > 0.0)) throw NonFiniteError("log: non-positive input");
  }
  return unary(
      tape, x, [](double v) { return std::log(v); }, [](double v, double) { return 1.0 / v; });
}

Tensor softmax(Tape& tape, const Tensor& x) {
  if (x.rank() == 0) throw ShapeError("softmax: input must have at least one axis");
  const std::size_t n = x.shape().back();
  const std::size_t rows = x.numel() / n;
  const auto in = x.data();
  std::vector<double> out(in.size());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = in.data() + r * n;
    double* yr = out.data() + r * n;
    const double mx = *std::max_element(xr, xr + n);
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) sum += (yr[i] = std::exp(xr[i] - mx));
    for (std::size_t i = 0; i < n; ++i) yr[i] /= sum;
  }
  const bool rec = tape.should_record({&x});
  Tensor y = Tensor::from_op(x.shape(), std::move(out), rec);
  if (rec) {
    tape.record([x, y, n, rows]() mutable {
      if (!y.has_grad()) return;
      accumulate(x, [&](std::span<double> gx) {
        const auto yd = y.data();
        const auto gy = y.grad();
        for (std::size_t r = 0; r < rows; ++r) {
          double dot = 0.0;
          for (std::size_t i = 0; i < n; ++i) dot += gy[r * n + i] * yd[r * n + i];
          for (std::size_t i = 0; i < n; ++i) {
            gx[r * n + i] += yd[r * n + i] * (gy[r * n + i] - dot);
          }
        }
      });
    });
  }
  return y;
}

Tensor matmul(Tape& tape, const Tensor& a, const Tensor& b) {
  require_rank("matmul", a, 2, "lhs");
  require_rank("matmul", b, 2, "rhs");
  const std::size_t n = a.dim(0), k = a.dim(1), m = b.dim(1);
  if (b.dim(0) != k) {
    throw ShapeError("matmul: inner dims differ, " + shape_str(a.shape()) + " x " +
                     shape_str(b.shape()));
  }
  std::vector<double> out(n * m);
  Map(out.data(), n, m).noalias() = MapC(a.data().data(), n, k) * MapC(b.data().data(), k, m);
  const bool rec = tape.should_record({&a, &b});
  Tensor y = Tensor::from_op({n, m}, std::move(out), rec);
  if (rec) {
    tape.record([a, b, y, n, k, m]() mutable {
      if (!y.has_grad()) return;
      MapC gy(y.grad().data(), n, m);
      accumulate(a, [&](std::span<double> g) {
        Map(g.data(), n, k).noalias() += gy * MapC(b.data().data(), k, m).transpose();
      });
      accumulate(b, [&](std::span<double> g) {
        Map(g.data(), k, m).noalias() += MapC(a.data().data(), n, k).transpose() * gy;
      });
    });
  }
  return y;
}

Tensor transpose(Tape& tape, const Tensor& a) {
  require_rank("transpose", a, 2, "input");
  const std::size_t n = a.dim(0), m = a.dim(1);
  std::vector<double> out(n * m);
  Map(out.data(), m, n) = MapC(a.data().data(), n, m).transpose();
  const bool rec = tape.should_record({&a});
  Tensor y = Tensor::from_op({m, n}, std::move(out), rec);
  if (rec) {
    tape.record([a, y, n, m]() mutable {
      if (!y.has_grad()) return;
      accumulate(a, [&](std::span<double> g) {
        Map(g.data(), n, m) += MapC(y.grad().data(), m, n).transpose();
      });
    });
  }
  return y;
}

Tensor linear(Tape& tape, const Tensor& x, const Tensor& weight, const Tensor& bias) {
  require_rank("linear", x, 2, "input");
  require_rank("linear", weight, 2, "weight");
  require_rank("linear", bias, 1, "bias");
  const std::size_t batch = x.dim(0), in = x.dim(1), out_dim = weight.dim(0);
  if (weight.dim(1) != in || bias.dim(0) != out_dim) {
    throw ShapeError("linear: input " + shape_str(x.shape()) + ", weight " +
                     shape_str(weight.shape()) + ", bias " + shape_str(bias.shape()));
  }
  std::vector<double> out(batch * out_dim);
  Map ym(out.data(), batch, out_dim);
  ym.noalias() = MapC(x.data().data(), batch, in) * MapC(weight.data().data(), out_dim, in).transpose();
  Eigen::Map<const Eigen::RowVectorXd> bv(bias.data().data(), out_dim);
  ym.rowwise() += bv;
  const bool rec = tape.should_record({&x, &weight, &bias});
  Tensor y = Tensor::from_op({batch, out_dim}, std::move(out), rec);
  if (rec) {
    tape.record([x, weight, bias, y, batch, in, out_dim]() mutable {
      if (!y.has_grad()) return;
      MapC gy(y.grad().data(), batch, out_dim);
      accumulate(x, [&](std::span<double> g) {
        Map(g.data(), batch, in).noalias() += gy * MapC(weight.data().data(), out_dim, in);
      });
      accumulate(weight, [&](std::span<double> g) {
        Map(g.data(), out_dim, in).noalias() += gy.transpose() * MapC(x.data().data(), batch, in);
      });
      accumulate(bias, [&](std::span<double> g) {
        Eigen::Map<Eigen::RowVectorXd>(g.data(), out_dim) += gy.colwise().sum();
      });
    });
  }
  return y;
}

Tensor slice_cols(Tape& tape, const Tensor& x, std::size_t begin, std::size_t end) {
  require_rank("slice_cols", x, 2, "input");
  const std::size_t rows = x.dim(0), cols = x.dim(1);
  if (begin >= end || end > cols) {
    throw ShapeError("slice_cols: range [" + std::to_string(begin) + "," + std::to_string(end) +
                     ") invalid for " + shape_str(x.shape()));
  }
  const std::size_t w = end - begin;
  std::vector<double> out(rows * w);
  Map(out.data(), rows, w) = MapC(x.data().data(), rows, cols).middleCols(begin, w);
  const bool rec = tape.should_record({&x});
  Tensor y = Tensor::from_op({rows, w}, std::move(out), rec);
  if (rec) {
    tape.record([x, y, rows, cols, begin, w]() mutable {
      if (!y.has_grad()) return;
      accumulate(x, [&](std::span<double> g) {
        Map(g.data(), rows, cols).middleCols(begin, w) += MapC(y.grad().data(), rows, w);
      });
    });
  }
  return y;
}

Tensor concat_cols(Tape& tape, const std::vector<Tensor>& parts) {
  if (parts.empty()) throw ShapeError("concat_cols: no inputs");
  const std::size_t rows = parts.front().rank() == 2 ? parts.front().dim(0) : 0;
  std::size_t cols = 0;
  bool rec = false;
  for (const auto& p : parts) {
    require_rank("concat_cols", p, 2, "part");
    if (p.dim(0) != rows) {
      throw ShapeError("concat_cols: row count mismatch " + shape_str(parts.front().shape()) +
                       " vs " + shape_str(p.shape()));
    }
    cols += p.dim(1);
    rec = rec || tape.should_record({&p});
  }
  std::vector<double> out(rows * cols);
  Map ym(out.data(), rows, cols);
  std::size_t off = 0;
  for (const auto& p : parts) {
    ym.middleCols(off, p.dim(1)) = MapC(p.data().data(), rows, p.dim(1));
    off += p.dim(1);
  }
  Tensor y = Tensor::from_op({rows, cols}, std::move(out), rec);
  if (rec) {
    tape.record([parts, y, rows, cols]() mutable {
      if (!y.has_grad()) return;
      MapC gy(y.grad().data(), rows, cols);
      std::size_t off = 0;
      for (auto& p : parts) {
        const std::size_t w = p.dim(1);
        accumulate(p, [&](std::span<double> g) {
          Map(g.data(), rows, w) += gy.middleCols(off, w);
        });
        off += w;
      }
    });
  }
  return y;
}

Tensor conv1d(Tape& tape, const Tensor& input, const Tensor& kernel, Conv1dOptions opts) {
  const bool batched = input.rank() == 3;
  if (!batched && input.rank() != 2) {
    throw ShapeError("conv1d: input must be [B,Cin,L] or [Cin,L], got " + shape_str(input.shape()));
  }
  require_rank("conv1d", kernel, 3, "kernel");
  const std::size_t batch = batched ? input.dim(0) : 1;
  const std::size_t cin = input.dim(batched ? 1 : 0);
  const std::size_t len = input.dim(batched ? 2 : 1);
  const std::size_t cout = kernel.dim(0), ksz = kernel.dim(2);
  if (kernel.dim(1) != cin) {
    throw ShapeError("conv1d: kernel " + shape_str(kernel.shape()) + " expects " +
                     std::to_string(kernel.dim(1)) + " input channels, input " +
                     shape_str(input.shape()) + " has " + std::to_string(cin));
  }
  if (opts.stride == 0) throw ShapeError("conv1d: stride must be positive");
  if (len + 2 * opts.padding < ksz) {
    throw ShapeError("conv1d: kernel width " + std::to_string(ksz) + " exceeds padded length " +
                     std::to_string(len + 2 * opts.padding));
  }
  const std::size_t lout = (len + 2 * opts.padding - ksz) / opts.stride + 1;
  const std::size_t ck = cin * ksz;
  const std::size_t ncol = batch * lout;

  // im2col: column (b, t) holds the receptive field of output position t.
  RowMat cols = RowMat::Zero(ck, ncol);
  const double* x = input.data().data();
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t c = 0; c < cin; ++c) {
      const double* xc = x + (b * cin + c) * len;
      for (std::size_t k = 0; k < ksz; ++k) {
        double* row = cols.data() + (c * ksz + k) * ncol + b * lout;
        for (std::size_t t = 0; t < lout; ++t) {
          const std::ptrdiff_t pos = static_cast<std::ptrdiff_t>(t * opts.stride + k) -
                                     static_cast<std::ptrdiff_t>(opts.padding);
          if (pos >= 0 && pos < static_cast<std::ptrdiff_t>(len)) row[t] = xc[pos];
        }
      }
    }
  }
  MapC wm(kernel.data().data(), cout, ck);
  RowMat prod = wm * cols;  // [cout, B*lout]
  std::vector<double> out(batch * cout * lout);
  for (std::size_t b = 0; b < batch; ++b) {
    Map(out.data() + b * cout * lout, cout, lout) = prod.middleCols(b * lout, lout);
  }
  Shape oshape = batched ? Shape{batch, cout, lout} : Shape{cout, lout};
  const bool rec = tape.should_record({&input, &kernel});
  Tensor y = Tensor::from_op(std::move(oshape), std::move(out), rec);
  if (rec) {
    tape.record([input, kernel, y, cols = std::move(cols), batch, cin, len, cout, ksz, lout, ck,
                 ncol, opts]() mutable {
      if (!y.has_grad()) return;
      RowMat gy(cout, ncol);
      const double* gyd = y.grad().data();
      for (std::size_t b = 0; b < batch; ++b) {
        gy.middleCols(b * lout, lout) = MapC(gyd + b * cout * lout, cout, lout);
      }
      accumulate(kernel, [&](std::span<double> g) {
        Map(g.data(), cout, ck).noalias() += gy * cols.transpose();
      });
      accumulate(input, [&](std::span<double> g) {
        RowMat gcols = MapC(kernel.data().data(), cout, ck).transpose() * gy;
        for (std::size_t b = 0; b < batch; ++b) {
          for (std::size_t c = 0; c < cin; ++c) {
            double* gc = g.data() + (b * cin + c) * len;
            for (std::size_t k = 0; k < ksz; ++k) {
              const double* row = gcols.data() + (c * ksz + k) * ncol + b * lout;
              for (std::size_t t = 0; t < lout; ++t) {
                const std::ptrdiff_t pos = static_cast<std::ptrdiff_t>(t * opts.stride + k) -
                                           static_cast<std::ptrdiff_t>(opts.padding);
                if (pos >= 0 && pos < static_cast<std::ptrdiff_t>(len)) gc[pos] += row[t];
              }
            }
          }
        }
      });
    });
  }
  return y;
}

Tensor batchnorm1d(Tape& tape, const Tensor& input, const Tensor& gamma, const Tensor& beta,
                   BatchNormStats& stats, bool training) {
  if (input.rank() != 2 && input.rank() != 3) {
    throw ShapeError("batchnorm1d: input must be [B,C] or [B,C,L], got " +
                     shape_str(input.shape()));
  }
  const std::size_t batch = input.dim(0), ch = input.dim(1);
  const std::size_t len = input.rank() == 3 ? input.dim(2) : 1;
  if (gamma.numel() != ch || beta.numel() != ch || stats.running_mean.size() != ch ||
      stats.running_var.size() != ch) {
    throw ShapeError("batchnorm1d: " + std::to_string(ch) + " channels in input " +
                     shape_str(input.shape()) + " but gamma " + shape_str(gamma.shape()) +
                     ", beta " + shape_str(beta.shape()) + ", stats " +
                     std::to_string(stats.running_mean.size()));
  }
  const std::size_t count = batch * len;
  if (training && count < 2) {
    throw ShapeError("batchnorm1d: training mode needs more than one value per channel");
  }
  const double* x = input.data().data();
  const double* gm = gamma.data().data();
  const double* bt = beta.data().data();
  std::vector<double> mean(ch), inv_std(ch);
  if (training) {
    for (std::size_t c = 0; c < ch; ++c) {
      double s = 0.0;
      for (std::size_t b = 0; b < batch; ++b) {
        const double* xr = x + (b * ch + c) * len;
        for (std::size_t t = 0; t < len; ++t) s += xr[t];
      }
      const double mu = s / static_cast<double>(count);
      double ss = 0.0;
      for (std::size_t b = 0; b < batch; ++b) {
        const double* xr = x + (b * ch + c) * len;
        for (std::size_t t = 0; t < len; ++t) ss += (xr[t] - mu) * (xr[t] - mu);
      }
      const double var = ss / static_cast<double>(count);
      mean[c] = mu;
      inv_std[c] = 1.0 / std::sqrt(var + stats.eps);
      const double unbiased = ss / static_cast<double>(count - 1);
      stats.running_mean[c] = (1.0 - stats.momentum) * stats.running_mean[c] + stats.momentum * mu;
      stats.running_var[c] =
          (1.0 - stats.momentum) * stats.running_var[c] + stats.momentum * unbiased;
    }
  } else {
    for (std::size_t c = 0; c < ch; ++c) {
      mean[c] = stats.running_mean[c];
      inv_std[c] = 1.0 / std::sqrt(stats.running_var[c] + stats.eps);
    }
  }
  std::vector<double> xhat(input.numel()), out(input.numel());
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t c = 0; c < ch; ++c) {
      const std::size_t base = (b * ch + c) * len;
      for (std::size_t t = 0; t < len; ++t) {
        const double xh = (x[base + t] - mean[c]) * inv_std[c];
        xhat[base + t] = xh;
        out[base + t] = gm[c] * xh + bt[c];
      }
    }
  }
  const bool rec = tape.should_record({&input, &gamma, &beta});
  Tensor y = Tensor::from_op(input.shape(), std::move(out), rec);
  if (rec) {
    tape.record([input, gamma, beta, y, xhat = std::move(xhat), inv_std = std::move(inv_std),
                 batch, ch, len, count, training]() mutable {
      if (!y.has_grad()) return;
      const double* gy = y.grad().data();
      std::vector<double> sum_gy(ch, 0.0), sum_gy_xhat(ch, 0.0);
      for (std::size_t b = 0; b < batch; ++b) {
        for (std::size_t c = 0; c < ch; ++c) {
          const std::size_t base = (b * ch + c) * len;
          for (std::size_t t = 0; t < len; ++t) {
            sum_gy[c] += gy[base + t];
            sum_gy_xhat[c] += gy[base + t] * xhat[base + t];
          }
        }
      }
      accumulate(gamma, [&](std::span<double> g) {
        for (std::size_t c = 0; c < ch; ++c) g[c] += sum_gy_xhat[c];
      });
      accumulate(beta, [&](std::span<double> g) {
        for (std::size_t c = 0; c < ch; ++c) g[c] += sum_gy[c];
      });
      accumulate(input, [&](std::span<double> g) {
        const double* gm = gamma.data().data();
        const double n = static_cast<double>(count);
        for (std::size_t b = 0; b < batch; ++b) {
          for (std::size_t c = 0; c < ch; ++c) {
            const std::size_t base = (b * ch + c) * len;
            const double k = gm[c] * inv_std[c];
            for (std::size_t t = 0; t < len; ++t) {
              if (training) {
                g[base + t] += k * (gy[base + t] - sum_gy[c] / n -
                                    xhat[base + t] * sum_gy_xhat[c] / n);
              } else {
                g[base + t] += k * gy[base + t];
              }
            }
          }
        }
      });
    });
  }
  return y;
}

Tensor global_avg_pool(Tape& tape, const Tensor& x) {
  require_rank("global_avg_pool", x, 3, "input");
  const std::size_t batch = x.dim(0), ch = x.dim(1), len = x.dim(2);
  std::vector<double> out(batch * ch);
  const double* xd = x.data().data();
  for (std::size_t i = 0; i < batch * ch; ++i) {
    double s = 0.0;
    for (std::size_t t = 0; t < len; ++t) s += xd[i * len + t];
    out[i] = s / static_cast<double>(len);
  }
  const bool rec = tape.should_record({&x});
  Tensor y = Tensor::from_op({batch, ch}, std::move(out), rec);
  if (rec) {
    tape.record([x, y, batch, ch, len]() mutable {
      if (!y.has_grad()) return;
      accumulate(x, [&](std::span<double> g) {
        const auto gy = y.grad();
        const double inv = 1.0 / static_cast<double>(len);
        for (std::size_t i = 0; i < batch * ch; ++i) {
          for (std::size_t t = 0; t < len; ++t) g[i * len + t] += gy[i] * inv;
        }
      });
    });
  }
  return y;
}

Tensor reduce_sum(Tape& tape, const Tensor& x) {
  double s = 0.0;
  for (double v : x.data()) s += v;
  const bool rec = tape.should_record({&x});
  Tensor y = Tensor::from_op({}, {s}, rec);
  if (rec) {
    tape.record([x, y]() mutable {
      if (!y.has_grad()) return;
      const double gy = y.grad()[0];
      accumulate(x, [&](std::span<double> g) {
        for (double& v : g) v += gy;
      });
    });
  }
  return y;
}

Tensor reduce_mean(Tape& tape, const Tensor& x) {
  return scale(tape, reduce_sum(tape, x), 1.0 / static_cast<double>(x.numel()));
}

}  // namespace gnio::ad
