// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The DenseRTSleep Authors

#include "drts/ops.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace drts::ops {
namespace {

[[noreturn]] void shape_error(const std::string& op, const std::string& why) {
  throw AutogradError(AutogradErrc::ShapeMismatch, op + ": " + why);
}

void require_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    shape_error(op, shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
}

void require_rank(const char* op, const Tensor& t, std::size_t rank) {
  if (t.rank() != rank) {
    shape_error(op, "expected rank " + std::to_string(rank) + ", got " +
                        shape_str(t.shape()));
  }
}

std::vector<double>& gbuf(const Tensor& t) { return t.node()->grad_buffer(); }

// Elementwise unary op with derivative expressed through (x, y).
template <typename Fwd, typename Deriv>
Tensor unary(Tape& tape, const Tensor& x, const char* name, Fwd fwd,
             Deriv deriv) {
  Tensor out = tape.make_output(x.shape(), {&x});
  auto xv = x.values();
  auto yv = out.values();
  for (std::size_t i = 0; i < xv.size(); ++i) yv[i] = fwd(xv[i]);
  tape.record(out, name, [x, out, deriv] {
    if (!x.requires_grad()) return;
    auto& gx = gbuf(x);
    const auto& gy = out.node()->grad;
    auto xv = x.values();
    auto yv = out.values();
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += gy[i] * deriv(xv[i], yv[i]);
  });
  return out;
}

// Row-major attention on a single [n, d] block. P receives the n x n
// attention matrix.
void attention_kernel(const double* x, std::size_t n, std::size_t d, double* y,
                      double* p) {
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(d));
  for (std::size_t i = 0; i < n; ++i) {
    double* prow = p + i * n;
    const double* xi = x + i * d;
    double row_max = -INFINITY;
    for (std::size_t j = 0; j < n; ++j) {
      const double* xj = x + j * d;
      double s = 0.0;
      for (std::size_t k = 0; k < d; ++k) s += xi[k] * xj[k];
      s *= inv_sqrt_d;
      prow[j] = s;
      row_max = std::max(row_max, s);
    }
    double z = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      prow[j] = std::exp(prow[j] - row_max);
      z += prow[j];
    }
    const double inv_z = 1.0 / z;
    double* yi = y + i * d;
    std::fill(yi, yi + d, 0.0);
    for (std::size_t j = 0; j < n; ++j) {
      prow[j] *= inv_z;
      const double pij = prow[j];
      const double* xj = x + j * d;
      for (std::size_t k = 0; k < d; ++k) yi[k] += pij * xj[k];
    }
  }
}

// Accumulates dL/dX into gx given dL/dY. `scratch` holds n*n doubles.
void attention_backward_kernel(const double* x, std::size_t n, std::size_t d,
                               const double* p, const double* gy, double* gx,
                               double* scratch) {
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(d));
  // Y = P X contributes P^T dY.
  for (std::size_t i = 0; i < n; ++i) {
    const double* prow = p + i * n;
    const double* gyi = gy + i * d;
    for (std::size_t j = 0; j < n; ++j) {
      const double pij = prow[j];
      double* gxj = gx + j * d;
      for (std::size_t k = 0; k < d; ++k) gxj[k] += pij * gyi[k];
    }
  }
  // dS = P * (dP - rowsum(P * dP)), dP = dY X^T.
  double* ds = scratch;
  for (std::size_t i = 0; i < n; ++i) {
    const double* prow = p + i * n;
    const double* gyi = gy + i * d;
    double dot = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      const double* xj = x + j * d;
      double dp = 0.0;
      for (std::size_t k = 0; k < d; ++k) dp += gyi[k] * xj[k];
      ds[i * n + j] = dp;
      dot += prow[j] * dp;
    }
    for (std::size_t j = 0; j < n; ++j) {
      ds[i * n + j] = prow[j] * (ds[i * n + j] - dot) * inv_sqrt_d;
    }
  }
  // S = X X^T / sqrt(d) contributes (dS + dS^T) X.
  for (std::size_t i = 0; i < n; ++i) {
    double* gxi = gx + i * d;
    for (std::size_t j = 0; j < n; ++j) {
      const double w = ds[i * n + j] + ds[j * n + i];
      const double* xj = x + j * d;
      for (std::size_t k = 0; k < d; ++k) gxi[k] += w * xj[k];
    }
  }
}

struct AxisSplit {
  std::size_t outer = 1;
  std::size_t extent = 1;
  std::size_t inner = 1;
};

AxisSplit split_axis(const Shape& s, std::size_t axis) {
  AxisSplit a;
  for (std::size_t i = 0; i < axis; ++i) a.outer *= s[i];
  a.extent = s[axis];
  for (std::size_t i = axis + 1; i < s.size(); ++i) a.inner *= s[i];
  return a;
}

}  // namespace

Tensor add(Tape& tape, const Tensor& a, const Tensor& b) {
  require_same_shape("add", a, b);
  Tensor out = tape.make_output(a.shape(), {&a, &b});
  auto av = a.values();
  auto bv = b.values();
  auto ov = out.values();
  for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = av[i] + bv[i];
  tape.record(out, "add", [a, b, out] {
    const auto& g = out.node()->grad;
    for (const Tensor* t : {&a, &b}) {
      if (!t->requires_grad()) continue;
      auto& gt = gbuf(*t);
      for (std::size_t i = 0; i < g.size(); ++i) gt[i] += g[i];
    }
  });
  return out;
}

Tensor mul(Tape& tape, const Tensor& a, const Tensor& b) {
  require_same_shape("mul", a, b);
  Tensor out = tape.make_output(a.shape(), {&a, &b});
  auto av = a.values();
  auto bv = b.values();
  auto ov = out.values();
  for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = av[i] * bv[i];
  tape.record(out, "mul", [a, b, out] {
    const auto& g = out.node()->grad;
    if (a.requires_grad()) {
      auto& ga = gbuf(a);
      auto bv = b.values();
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bv[i];
    }
    if (b.requires_grad()) {
      auto& gb = gbuf(b);
      auto av = a.values();
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * av[i];
    }
  });
  return out;
}

Tensor scale(Tape& tape, const Tensor& a, double factor) {
  Tensor out = tape.make_output(a.shape(), {&a});
  auto av = a.values();
  auto ov = out.values();
  for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = av[i] * factor;
  tape.record(out, "scale", [a, out, factor] {
    const auto& g = out.node()->grad;
    auto& ga = gbuf(a);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * factor;
  });
  return out;
}

Tensor sum(Tape& tape, const Tensor& a) {
  Tensor out = tape.make_output(Shape{1}, {&a});
  double s = 0.0;
  for (double v : a.values()) s += v;
  out.values()[0] = s;
  tape.record(out, "sum", [a, out] {
    const double g = out.node()->grad[0];
    for (double& ga : gbuf(a)) ga += g;
  });
  return out;
}

Tensor weighted_sum(Tape& tape, const Tensor& a,
                    std::span<const double> weights) {
  if (weights.size() != a.numel()) {
    shape_error("weighted_sum", "weight count does not match tensor size");
  }
  std::vector<double> w(weights.begin(), weights.end());
  Tensor out = tape.make_output(Shape{1}, {&a});
  double s = 0.0;
  auto av = a.values();
  for (std::size_t i = 0; i < av.size(); ++i) s += av[i] * w[i];
  out.values()[0] = s;
  tape.record(out, "weighted_sum", [a, out, w = std::move(w)] {
    const double g = out.node()->grad[0];
    auto& ga = gbuf(a);
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g * w[i];
  });
  return out;
}

Tensor combine_scalars(Tape& tape, std::span<const Tensor> scalars,
                       std::span<const double> weights) {
  if (scalars.size() != weights.size() || scalars.empty()) {
    shape_error("combine_scalars", "need one weight per scalar");
  }
  for (const Tensor& s : scalars) {
    if (s.numel() != 1) shape_error("combine_scalars", "non-scalar term");
  }
  Tensor out = tape.make_output(Shape{1}, scalars);
  double total = weights[0] * scalars[0].item();
  for (std::size_t i = 1; i < scalars.size(); ++i) {
    total = total + weights[i] * scalars[i].item();
  }
  out.values()[0] = total;
  std::vector<Tensor> parts(scalars.begin(), scalars.end());
  std::vector<double> w(weights.begin(), weights.end());
  tape.record(out, "combine_scalars", [parts, w, out] {
    const double g = out.node()->grad[0];
    for (std::size_t i = 0; i < parts.size(); ++i) {
      if (parts[i].requires_grad()) gbuf(parts[i])[0] += g * w[i];
    }
  });
  return out;
}

Tensor relu(Tape& tape, const Tensor& x) {
  if (tape.tracks_branches()) {
    for (double v : x.values()) tape.note_branch(v > 0.0);
  }
  return unary(
      tape, x, "relu", [](double v) { return v > 0.0 ? v : 0.0; },
      [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

Tensor sigmoid(Tape& tape, const Tensor& x) {
  return unary(
      tape, x, "sigmoid",
      [](double v) {
        if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
        const double e = std::exp(v);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

Tensor tanh_op(Tape& tape, const Tensor& x) {
  return unary(
      tape, x, "tanh", [](double v) { return std::tanh(v); },
      [](double, double y) { return 1.0 - y * y; });
}

Tensor conv1d(Tape& tape, const Tensor& input, const Tensor& kernel,
              const Tensor& bias, std::size_t stride, std::size_t padding) {
  require_rank("conv1d", input, 3);
  require_rank("conv1d", kernel, 3);
  const std::size_t batch = input.dim(0), cin = input.dim(1), len = input.dim(2);
  const std::size_t cout = kernel.dim(0), k = kernel.dim(2);
  if (kernel.dim(1) != cin) {
    shape_error("conv1d", "kernel expects " + std::to_string(kernel.dim(1)) +
                              " input channels, input has " +
                              std::to_string(cin));
  }
  if (bias.defined() && (bias.rank() != 1 || bias.dim(0) != cout)) {
    shape_error("conv1d", "bias must have shape [channels_out]");
  }
  if (stride == 0) shape_error("conv1d", "stride must be positive");
  if (len + 2 * padding < k) {
    throw AutogradError(AutogradErrc::EmptyOutput,
                        "conv1d: kernel longer than padded input");
  }
  const std::size_t lout = (len + 2 * padding - k) / stride + 1;

  Tensor out = tape.make_output({batch, cout, lout}, {&input, &kernel, &bias});
  const double* x = input.values().data();
  const double* w = kernel.values().data();
  double* y = out.values().data();
  const double* b = bias.defined() ? bias.values().data() : nullptr;

  // Output positions l for which l*stride + t - padding lies inside [0, len).
  auto valid_range = [=](std::size_t t, std::size_t& lo, std::size_t& hi) {
    const long long p = static_cast<long long>(padding) - static_cast<long long>(t);
    long long first = p > 0 ? (p + static_cast<long long>(stride) - 1) /
                                  static_cast<long long>(stride)
                            : 0;
    long long last_pos = static_cast<long long>(len) - 1 + p;
    long long last = last_pos < 0 ? -1 : last_pos / static_cast<long long>(stride);
    last = std::min<long long>(last, static_cast<long long>(lout) - 1);
    lo = static_cast<std::size_t>(first);
    hi = last < first ? lo : static_cast<std::size_t>(last + 1);
  };

#pragma omp parallel for collapse(2) schedule(static)
  for (std::size_t bi = 0; bi < batch; ++bi) {
    for (std::size_t co = 0; co < cout; ++co) {
      double* yrow = y + (bi * cout + co) * lout;
      std::fill(yrow, yrow + lout, b ? b[co] : 0.0);
      for (std::size_t ci = 0; ci < cin; ++ci) {
        const double* xrow = x + (bi * cin + ci) * len;
        const double* wrow = w + (co * cin + ci) * k;
        for (std::size_t t = 0; t < k; ++t) {
          std::size_t lo, hi;
          valid_range(t, lo, hi);
          const double wt = wrow[t];
          const double* xs = xrow + (static_cast<long long>(t) -
                                     static_cast<long long>(padding));
          if (stride == 1) {
            for (std::size_t l = lo; l < hi; ++l) yrow[l] += wt * xs[l];
          } else {
            for (std::size_t l = lo; l < hi; ++l) yrow[l] += wt * xs[l * stride];
          }
        }
      }
    }
  }

  tape.record(out, "conv1d", [=] {
    const double* gy = out.node()->grad.data();
    const double* x = input.values().data();
    const double* w = kernel.values().data();
    if (input.requires_grad()) {
      double* gx = gbuf(input).data();
#pragma omp parallel for schedule(static)
      for (std::size_t bi = 0; bi < batch; ++bi) {
        for (std::size_t ci = 0; ci < cin; ++ci) {
          double* gxrow = gx + (bi * cin + ci) * len;
          for (std::size_t co = 0; co < cout; ++co) {
            const double* gyrow = gy + (bi * cout + co) * lout;
            const double* wrow = w + (co * cin + ci) * k;
            for (std::size_t t = 0; t < k; ++t) {
              std::size_t lo, hi;
              valid_range(t, lo, hi);
              const double wt = wrow[t];
              double* gs = gxrow + (static_cast<long long>(t) -
                                    static_cast<long long>(padding));
              for (std::size_t l = lo; l < hi; ++l) gs[l * stride] += wt * gyrow[l];
            }
          }
        }
      }
    }
    if (kernel.requires_grad() || (bias.defined() && bias.requires_grad())) {
      double* gw = kernel.requires_grad() ? gbuf(kernel).data() : nullptr;
      double* gb = bias.defined() && bias.requires_grad() ? gbuf(bias).data() : nullptr;
#pragma omp parallel for schedule(static)
      for (std::size_t co = 0; co < cout; ++co) {
        for (std::size_t bi = 0; bi < batch; ++bi) {
          const double* gyrow = gy + (bi * cout + co) * lout;
          if (gb) {
            double s = 0.0;
            for (std::size_t l = 0; l < lout; ++l) s += gyrow[l];
            gb[co] += s;
          }
          if (!gw) continue;
          for (std::size_t ci = 0; ci < cin; ++ci) {
            const double* xrow = x + (bi * cin + ci) * len;
            double* gwrow = gw + (co * cin + ci) * k;
            for (std::size_t t = 0; t < k; ++t) {
              std::size_t lo, hi;
              valid_range(t, lo, hi);
              const double* xs = xrow + (static_cast<long long>(t) -
                                         static_cast<long long>(padding));
              double s = 0.0;
              for (std::size_t l = lo; l < hi; ++l) s += gyrow[l] * xs[l * stride];
              gwrow[t] += s;
            }
          }
        }
      }
    }
  });
  return out;
}

Tensor batchnorm1d(Tape& tape, const Tensor& input, const Tensor& gamma,
                   const Tensor& beta, BatchNormState& state, Mode mode,
                   double momentum, double epsilon) {
  require_rank("batchnorm1d", input, 3);
  const std::size_t batch = input.dim(0), ch = input.dim(1), len = input.dim(2);
  if (gamma.numel() != ch || beta.numel() != ch ||
      state.running_mean.size() != ch || state.running_var.size() != ch) {
    shape_error("batchnorm1d", "parameter width does not match channel count");
  }
  const std::size_t count = batch * len;
  Tensor out = tape.make_output(input.shape(), {&input, &gamma, &beta});
  auto x = input.values();
  auto y = out.values();
  auto g = gamma.values();
  auto bt = beta.values();

  if (mode == Mode::Infer) {
    std::vector<double> inv_std(ch);
    for (std::size_t c = 0; c < ch; ++c) {
      inv_std[c] = 1.0 / std::sqrt(state.running_var[c] + epsilon);
    }
    std::vector<double> mean = state.running_mean;
    for (std::size_t b = 0; b < batch; ++b) {
      for (std::size_t c = 0; c < ch; ++c) {
        const std::size_t off = (b * ch + c) * len;
        for (std::size_t l = 0; l < len; ++l) {
          y[off + l] = g[c] * (x[off + l] - mean[c]) * inv_std[c] + bt[c];
        }
      }
    }
    tape.record(out, "batchnorm1d_infer", [=] {
      const auto& gy = out.node()->grad;
      auto x = input.values();
      auto g = gamma.values();
      std::vector<double>* gx = input.requires_grad() ? &gbuf(input) : nullptr;
      std::vector<double>* gg = gamma.requires_grad() ? &gbuf(gamma) : nullptr;
      std::vector<double>* gb = beta.requires_grad() ? &gbuf(beta) : nullptr;
      for (std::size_t b = 0; b < batch; ++b) {
        for (std::size_t c = 0; c < ch; ++c) {
          const std::size_t off = (b * ch + c) * len;
          for (std::size_t l = 0; l < len; ++l) {
            const double d = gy[off + l];
            if (gx) (*gx)[off + l] += d * g[c] * inv_std[c];
            if (gg) (*gg)[c] += d * (x[off + l] - mean[c]) * inv_std[c];
            if (gb) (*gb)[c] += d;
          }
        }
      }
    });
    return out;
  }

  if (count < 2) {
    throw AutogradError(AutogradErrc::DegenerateBatch,
                        "batchnorm1d: train mode needs at least two values per channel");
  }
  std::vector<double> xhat(x.size());
  std::vector<double> inv_std(ch);
  for (std::size_t c = 0; c < ch; ++c) {
    double mean = 0.0;
    for (std::size_t b = 0; b < batch; ++b) {
      const std::size_t off = (b * ch + c) * len;
      for (std::size_t l = 0; l < len; ++l) mean += x[off + l];
    }
    mean /= static_cast<double>(count);
    double var = 0.0;
    for (std::size_t b = 0; b < batch; ++b) {
      const std::size_t off = (b * ch + c) * len;
      for (std::size_t l = 0; l < len; ++l) {
        const double dv = x[off + l] - mean;
        var += dv * dv;
      }
    }
    var /= static_cast<double>(count);
    inv_std[c] = 1.0 / std::sqrt(var + epsilon);
    for (std::size_t b = 0; b < batch; ++b) {
      const std::size_t off = (b * ch + c) * len;
      for (std::size_t l = 0; l < len; ++l) {
        xhat[off + l] = (x[off + l] - mean) * inv_std[c];
        y[off + l] = g[c] * xhat[off + l] + bt[c];
      }
    }
    const double unbiased = var * static_cast<double>(count) /
                            static_cast<double>(count - 1);
    state.running_mean[c] = (1.0 - momentum) * state.running_mean[c] + momentum * mean;
    state.running_var[c] = (1.0 - momentum) * state.running_var[c] + momentum * unbiased;
  }

  tape.record(out, "batchnorm1d", [=, xhat = std::move(xhat)] {
    const auto& gy = out.node()->grad;
    auto g = gamma.values();
    const double n = static_cast<double>(count);
    for (std::size_t c = 0; c < ch; ++c) {
      double sum_dy = 0.0, sum_dy_xhat = 0.0;
      for (std::size_t b = 0; b < batch; ++b) {
        const std::size_t off = (b * ch + c) * len;
        for (std::size_t l = 0; l < len; ++l) {
          sum_dy += gy[off + l];
          sum_dy_xhat += gy[off + l] * xhat[off + l];
        }
      }
      if (gamma.requires_grad()) gbuf(gamma)[c] += sum_dy_xhat;
      if (beta.requires_grad()) gbuf(beta)[c] += sum_dy;
      if (!input.requires_grad()) continue;
      auto& gx = gbuf(input);
      // dx = gamma * inv_std / n * (n*dy - sum(dy) - xhat*sum(dy*xhat))
      const double k = g[c] * inv_std[c] / n;
      for (std::size_t b = 0; b < batch; ++b) {
        const std::size_t off = (b * ch + c) * len;
        for (std::size_t l = 0; l < len; ++l) {
          gx[off + l] += k * (n * gy[off + l] - sum_dy - xhat[off + l] * sum_dy_xhat);
        }
      }
    }
  });
  return out;
}

Tensor max_pool1d(Tape& tape, const Tensor& input, std::size_t window,
                  std::size_t stride) {
  require_rank("max_pool1d", input, 3);
  const std::size_t rows = input.dim(0) * input.dim(1), len = input.dim(2);
  if (window == 0 || stride == 0 || window > len) {
    shape_error("max_pool1d", "window " + std::to_string(window) +
                                  " does not fit length " + std::to_string(len));
  }
  const std::size_t lout = (len - window) / stride + 1;
  Tensor out = tape.make_output({input.dim(0), input.dim(1), lout}, {&input});
  auto x = input.values();
  auto y = out.values();
  std::vector<std::size_t> argmax(rows * lout);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t o = 0; o < lout; ++o) {
      const std::size_t start = r * len + o * stride;
      std::size_t best = start;
      for (std::size_t j = start + 1; j < start + window; ++j) {
        if (x[j] > x[best]) best = j;
      }
      argmax[r * lout + o] = best;
      y[r * lout + o] = x[best];
    }
  }
  if (tape.tracks_branches()) {
    for (std::size_t a : argmax) tape.note_branch(a);
  }
  tape.record(out, "max_pool1d", [input, out, argmax = std::move(argmax)] {
    const auto& gy = out.node()->grad;
    auto& gx = gbuf(input);
    for (std::size_t i = 0; i < gy.size(); ++i) gx[argmax[i]] += gy[i];
  });
  return out;
}

Tensor avg_pool1d(Tape& tape, const Tensor& input, std::size_t window,
                  std::size_t stride) {
  require_rank("avg_pool1d", input, 3);
  const std::size_t rows = input.dim(0) * input.dim(1), len = input.dim(2);
  if (window == 0 || stride == 0 || window > len) {
    shape_error("avg_pool1d", "window " + std::to_string(window) +
                                  " does not fit length " + std::to_string(len));
  }
  const std::size_t lout = (len - window) / stride + 1;
  Tensor out = tape.make_output({input.dim(0), input.dim(1), lout}, {&input});
  auto x = input.values();
  auto y = out.values();
  const double inv = 1.0 / static_cast<double>(window);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t o = 0; o < lout; ++o) {
      double s = 0.0;
      for (std::size_t j = 0; j < window; ++j) s += x[r * len + o * stride + j];
      y[r * lout + o] = s * inv;
    }
  }
  tape.record(out, "avg_pool1d", [=] {
    const auto& gy = out.node()->grad;
    auto& gx = gbuf(input);
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t o = 0; o < lout; ++o) {
        const double g = gy[r * lout + o] * inv;
        for (std::size_t j = 0; j < window; ++j) gx[r * len + o * stride + j] += g;
      }
    }
  });
  return out;
}

Tensor linear(Tape& tape, const Tensor& input, const Tensor& weight,
              const Tensor& bias) {
  require_rank("linear", weight, 2);
  if (input.rank() < 1) shape_error("linear", "input must have rank >= 1");
  const std::size_t din = input.shape().back();
  const std::size_t dout = weight.dim(0);
  if (weight.dim(1) != din) {
    shape_error("linear", "weight " + shape_str(weight.shape()) +
                              " incompatible with input " + shape_str(input.shape()));
  }
  if (bias.defined() && bias.numel() != dout) {
    shape_error("linear", "bias must have shape [d_out]");
  }
  const std::size_t rows = input.numel() / din;
  Shape oshape = input.shape();
  oshape.back() = dout;
  Tensor out = tape.make_output(std::move(oshape), {&input, &weight, &bias});
  const double* x = input.values().data();
  const double* w = weight.values().data();
  const double* b = bias.defined() ? bias.values().data() : nullptr;
  double* y = out.values().data();
#pragma omp parallel for schedule(static)
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = x + r * din;
    for (std::size_t o = 0; o < dout; ++o) {
      const double* wo = w + o * din;
      double s = b ? b[o] : 0.0;
      for (std::size_t i = 0; i < din; ++i) s += xr[i] * wo[i];
      y[r * dout + o] = s;
    }
  }
  tape.record(out, "linear", [=] {
    const double* gy = out.node()->grad.data();
    const double* x = input.values().data();
    const double* w = weight.values().data();
    if (input.requires_grad()) {
      double* gx = gbuf(input).data();
      for (std::size_t r = 0; r < rows; ++r) {
        double* gxr = gx + r * din;
        for (std::size_t o = 0; o < dout; ++o) {
          const double g = gy[r * dout + o];
          const double* wo = w + o * din;
          for (std::size_t i = 0; i < din; ++i) gxr[i] += g * wo[i];
        }
      }
    }
    if (weight.requires_grad()) {
      double* gw = gbuf(weight).data();
      for (std::size_t r = 0; r < rows; ++r) {
        const double* xr = x + r * din;
        for (std::size_t o = 0; o < dout; ++o) {
          const double g = gy[r * dout + o];
          double* gwo = gw + o * din;
          for (std::size_t i = 0; i < din; ++i) gwo[i] += g * xr[i];
        }
      }
    }
    if (bias.defined() && bias.requires_grad()) {
      double* gb = gbuf(bias).data();
      for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t o = 0; o < dout; ++o) gb[o] += gy[r * dout + o];
      }
    }
  });
  return out;
}

Tensor softmax(Tape& tape, const Tensor& input) {
  if (input.rank() < 1) shape_error("softmax", "input must have rank >= 1");
  const std::size_t cols = input.shape().back();
  const std::size_t rows = input.numel() / cols;
  Tensor out = tape.make_output(input.shape(), {&input});
  auto x = input.values();
  auto y = out.values();
  for (std::size_t r = 0; r < rows; ++r) {
    const std::size_t off = r * cols;
    double m = -INFINITY;
    for (std::size_t c = 0; c < cols; ++c) m = std::max(m, x[off + c]);
    double z = 0.0;
    for (std::size_t c = 0; c < cols; ++c) {
      y[off + c] = std::exp(x[off + c] - m);
      z += y[off + c];
    }
    for (std::size_t c = 0; c < cols; ++c) y[off + c] /= z;
  }
  tape.record(out, "softmax", [=] {
    const auto& gy = out.node()->grad;
    auto y = out.values();
    auto& gx = gbuf(input);
    for (std::size_t r = 0; r < rows; ++r) {
      const std::size_t off = r * cols;
      double dot = 0.0;
      for (std::size_t c = 0; c < cols; ++c) dot += gy[off + c] * y[off + c];
      for (std::size_t c = 0; c < cols; ++c) {
        gx[off + c] += y[off + c] * (gy[off + c] - dot);
      }
    }
  });
  return out;
}

Tensor scaled_self_attention(Tape& tape, const Tensor& x_hat) {
  require_rank("scaled_self_attention", x_hat, 2);
  const std::size_t n = x_hat.dim(0), d = x_hat.dim(1);
  if (n == 0 || d == 0) shape_error("scaled_self_attention", "empty input");
  Tensor out = tape.make_output(x_hat.shape(), {&x_hat});
  std::vector<double> p(n * n);
  attention_kernel(x_hat.values().data(), n, d, out.values().data(), p.data());
  tape.record(out, "attention", [x_hat, out, n, d, p = std::move(p)] {
    std::vector<double> scratch(n * n);
    attention_backward_kernel(x_hat.values().data(), n, d, p.data(),
                              out.node()->grad.data(), gbuf(x_hat).data(),
                              scratch.data());
  });
  return out;
}

Tensor multi_head_self_attention(Tape& tape, const Tensor& input,
                                 std::size_t heads,
                                 std::vector<double>* capture) {
  require_rank("multi_head_self_attention", input, 3);
  const std::size_t batch = input.dim(0), ch = input.dim(1), len = input.dim(2);
  if (heads == 0 || ch % heads != 0) {
    throw AutogradError(AutogradErrc::HeadsDivisibility,
                        "multi_head_self_attention: " + std::to_string(ch) +
                            " channels not divisible by " + std::to_string(heads) +
                            " heads");
  }
  const std::size_t d = ch / heads;
  Tensor out = tape.make_output(input.shape(), {&input});
  const double* x = input.values().data();
  double* y = out.values().data();
  if (capture) capture->reserve(capture->size() + batch * heads * len * len);

  // Head h of sample b reads channels [h*d, (h+1)*d) transposed to [len, d].
  auto gather = [=](const double* src, std::size_t b, std::size_t h, double* dst) {
    for (std::size_t j = 0; j < d; ++j) {
      const double* row = src + (b * ch + h * d + j) * len;
      for (std::size_t l = 0; l < len; ++l) dst[l * d + j] = row[l];
    }
  };
  auto scatter_add = [=](const double* src, std::size_t b, std::size_t h, double* dst) {
    for (std::size_t j = 0; j < d; ++j) {
      double* row = dst + (b * ch + h * d + j) * len;
      for (std::size_t l = 0; l < len; ++l) row[l] += src[l * d + j];
    }
  };

  const std::size_t blocks = batch * heads;
  std::vector<std::vector<double>> captured(capture ? blocks : 0);
#pragma omp parallel
  {
    std::vector<double> xb(len * d), yb(len * d), p(len * len);
#pragma omp for schedule(static)
    for (std::size_t blk = 0; blk < blocks; ++blk) {
      const std::size_t b = blk / heads, h = blk % heads;
      gather(x, b, h, xb.data());
      attention_kernel(xb.data(), len, d, yb.data(), p.data());
      for (std::size_t j = 0; j < d; ++j) {
        double* row = y + (b * ch + h * d + j) * len;
        for (std::size_t l = 0; l < len; ++l) row[l] = yb[l * d + j];
      }
      if (capture) captured[blk] = p;
    }
  }
  if (capture) {
    for (const auto& m : captured) capture->insert(capture->end(), m.begin(), m.end());
  }

  tape.record(out, "multi_head_attention", [=] {
    const double* x = input.values().data();
    const double* gy = out.node()->grad.data();
    double* gx = gbuf(input).data();
#pragma omp parallel
    {
      std::vector<double> xb(len * d), yb(len * d), gyb(len * d), gxb(len * d);
      std::vector<double> p(len * len), scratch(len * len);
#pragma omp for schedule(static)
      for (std::size_t blk = 0; blk < blocks; ++blk) {
        const std::size_t b = blk / heads, h = blk % heads;
        gather(x, b, h, xb.data());
        gather(gy, b, h, gyb.data());
        attention_kernel(xb.data(), len, d, yb.data(), p.data());
        std::fill(gxb.begin(), gxb.end(), 0.0);
        attention_backward_kernel(xb.data(), len, d, p.data(), gyb.data(),
                                  gxb.data(), scratch.data());
        scatter_add(gxb.data(), b, h, gx);
      }
    }
  });
  return out;
}

Tensor concat(Tape& tape, std::span<const Tensor> parts, std::size_t axis) {
  if (parts.empty()) shape_error("concat", "no tensors");
  const Shape& first = parts[0].shape();
  if (axis >= first.size()) shape_error("concat", "axis out of range");
  Shape oshape = first;
  oshape[axis] = 0;
  for (const Tensor& t : parts) {
    if (t.rank() != first.size()) shape_error("concat", "rank mismatch");
    for (std::size_t i = 0; i < first.size(); ++i) {
      if (i != axis && t.dim(i) != first[i]) {
        shape_error("concat", shape_str(t.shape()) + " vs " + shape_str(first));
      }
    }
    oshape[axis] += t.dim(axis);
  }
  Tensor out = tape.make_output(oshape, parts);
  const AxisSplit os = split_axis(oshape, axis);
  auto y = out.values();
  std::size_t offset = 0;
  for (const Tensor& t : parts) {
    const std::size_t ext = t.dim(axis);
    auto x = t.values();
    for (std::size_t o = 0; o < os.outer; ++o) {
      std::copy_n(x.begin() + o * ext * os.inner, ext * os.inner,
                  y.begin() + (o * os.extent + offset) * os.inner);
    }
    offset += ext;
  }
  std::vector<Tensor> kept(parts.begin(), parts.end());
  tape.record(out, "concat", [kept, out, os] {
    const auto& gy = out.node()->grad;
    std::size_t offset = 0;
    for (const Tensor& t : kept) {
      const std::size_t e = t.numel() / (os.outer * os.inner);
      if (t.requires_grad()) {
        auto& gx = gbuf(t);
        for (std::size_t o = 0; o < os.outer; ++o) {
          const double* src = gy.data() + (o * os.extent + offset) * os.inner;
          double* dst = gx.data() + o * e * os.inner;
          for (std::size_t i = 0; i < e * os.inner; ++i) dst[i] += src[i];
        }
      }
      offset += e;
    }
  });
  return out;
}

Tensor slice(Tape& tape, const Tensor& x, std::size_t axis, std::size_t begin,
             std::size_t end) {
  if (axis >= x.rank()) shape_error("slice", "axis out of range");
  if (begin >= end || end > x.dim(axis)) {
    shape_error("slice", "range [" + std::to_string(begin) + ", " +
                             std::to_string(end) + ") outside axis of extent " +
                             std::to_string(x.dim(axis)));
  }
  Shape oshape = x.shape();
  oshape[axis] = end - begin;
  const AxisSplit is = split_axis(x.shape(), axis);
  const std::size_t ext = end - begin;
  Tensor out = tape.make_output(std::move(oshape), {&x});
  auto xv = x.values();
  auto y = out.values();
  for (std::size_t o = 0; o < is.outer; ++o) {
    std::copy_n(xv.begin() + (o * is.extent + begin) * is.inner, ext * is.inner,
                y.begin() + o * ext * is.inner);
  }
  tape.record(out, "slice", [x, out, is, begin, ext] {
    const auto& gy = out.node()->grad;
    auto& gx = gbuf(x);
    for (std::size_t o = 0; o < is.outer; ++o) {
      double* dst = gx.data() + (o * is.extent + begin) * is.inner;
      const double* src = gy.data() + o * ext * is.inner;
      for (std::size_t i = 0; i < ext * is.inner; ++i) dst[i] += src[i];
    }
  });
  return out;
}

Tensor reshape(Tape& tape, const Tensor& x, Shape shape) {
  if (shape_numel(shape) != x.numel()) {
    shape_error("reshape", shape_str(x.shape()) + " -> " + shape_str(shape));
  }
  Tensor out = tape.make_output(std::move(shape), {&x});
  std::copy(x.values().begin(), x.values().end(), out.values().begin());
  tape.record(out, "reshape", [x, out] {
    const auto& gy = out.node()->grad;
    auto& gx = gbuf(x);
    for (std::size_t i = 0; i < gy.size(); ++i) gx[i] += gy[i];
  });
  return out;
}

Tensor swap_last_axes(Tape& tape, const Tensor& x) {
  require_rank("swap_last_axes", x, 3);
  const std::size_t a = x.dim(0), b = x.dim(1), c = x.dim(2);
  Tensor out = tape.make_output({a, c, b}, {&x});
  auto xv = x.values();
  auto y = out.values();
  for (std::size_t i = 0; i < a; ++i) {
    for (std::size_t j = 0; j < b; ++j) {
      for (std::size_t k = 0; k < c; ++k) {
        y[(i * c + k) * b + j] = xv[(i * b + j) * c + k];
      }
    }
  }
  tape.record(out, "swap_last_axes", [x, out, a, b, c] {
    const auto& gy = out.node()->grad;
    auto& gx = gbuf(x);
    for (std::size_t i = 0; i < a; ++i) {
      for (std::size_t j = 0; j < b; ++j) {
        for (std::size_t k = 0; k < c; ++k) {
          gx[(i * b + j) * c + k] += gy[(i * c + k) * b + j];
        }
      }
    }
  });
  return out;
}

}  // namespace drts::ops
