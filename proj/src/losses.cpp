// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The DenseRTSleep Authors

#include "drts/losses.hpp"

#include <cmath>
#include <span>
#include <string>

#include "drts/ops.hpp"

namespace drts {
namespace {

void check_pair(const char* op, const Tensor& y_true, const Tensor& y_pred) {
  if (y_true.rank() != 2 || y_true.shape() != y_pred.shape() || y_true.dim(0) == 0) {
    throw AutogradError(AutogradErrc::ShapeMismatch,
                        std::string(op) + ": targets " + shape_str(y_true.shape()) +
                            " vs predictions " + shape_str(y_pred.shape()));
  }
  const std::size_t k = y_true.dim(1);
  for (const Tensor* t : {&y_true, &y_pred}) {
    auto v = t->values();
    for (std::size_t r = 0; r < t->dim(0); ++r) {
      double s = 0.0;
      for (std::size_t c = 0; c < k; ++c) {
        const double x = v[r * k + c];
        if (!(x >= 0.0)) {
          throw AutogradError(AutogradErrc::NotProbability,
                              std::string(op) + ": negative or NaN entry in row " +
                                  std::to_string(r));
        }
        s += x;
      }
      if (std::abs(s - 1.0) > 1e-4) {
        throw AutogradError(AutogradErrc::NotProbability,
                            std::string(op) + ": row " + std::to_string(r) + " sums to " +
                                std::to_string(s));
      }
    }
  }
}

double clamp_p(double p) { return p < kProbClamp ? kProbClamp : p; }

void note_clamps(Tape& tape, std::span<const double> p) {
  if (!tape.tracks_branches()) return;
  for (double v : p) tape.note_branch(v < kProbClamp);
}

// Shared backward for CE and KL: d/dp of -t log(max(p, eps)) / B.
void log_term_backward(const Tensor& y_true, const Tensor& y_pred, double g) {
  auto& gp = y_pred.node()->grad_buffer();
  auto t = y_true.values();
  auto p = y_pred.values();
  const double inv_b = 1.0 / static_cast<double>(y_true.dim(0));
  for (std::size_t i = 0; i < gp.size(); ++i) {
    if (t[i] != 0.0 && p[i] >= kProbClamp) gp[i] -= g * inv_b * t[i] / p[i];
  }
}

}  // namespace

void LossWeights::validate() const {
  if (!(alpha >= 0.0) || !(beta >= 0.0)) throw ConfigError("loss weights must be non-negative");
  if (!(mu > 0.0)) throw ConfigError("contrastive margin mu must be positive");
}

LossWeights effective_weights(ModelVariant variant, LossWeights w) {
  if (!uses_multi_loss(variant)) {
    w.alpha = 0.0;
    w.beta = 0.0;
  }
  return w;
}

Tensor cross_entropy(Tape& tape, const Tensor& y_true, const Tensor& y_pred) {
  check_pair("cross_entropy", y_true, y_pred);
  Tensor out = tape.make_output(Shape{1}, {&y_pred});
  auto t = y_true.values();
  auto p = y_pred.values();
  note_clamps(tape, p);
  double s = 0.0;
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (t[i] != 0.0) s -= t[i] * std::log(clamp_p(p[i]));
  }
  out.values()[0] = s / static_cast<double>(y_true.dim(0));
  tape.record(out, "cross_entropy", [y_true, y_pred, out] {
    log_term_backward(y_true, y_pred, out.node()->grad[0]);
  });
  return out;
}

Tensor kl_divergence(Tape& tape, const Tensor& y_true, const Tensor& y_pred) {
  check_pair("kl_divergence", y_true, y_pred);
  Tensor out = tape.make_output(Shape{1}, {&y_pred});
  auto t = y_true.values();
  auto p = y_pred.values();
  note_clamps(tape, p);
  double s = 0.0;
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (t[i] > 0.0) s += t[i] * (std::log(t[i]) - std::log(clamp_p(p[i])));
  }
  out.values()[0] = s / static_cast<double>(y_true.dim(0));
  tape.record(out, "kl_divergence", [y_true, y_pred, out] {
    log_term_backward(y_true, y_pred, out.node()->grad[0]);
  });
  return out;
}

Tensor contrastive_loss(Tape& tape, const Tensor& y_true, const Tensor& y_pred, double mu) {
  check_pair("contrastive_loss", y_true, y_pred);
  if (!(mu > 0.0)) throw ConfigError("contrastive margin mu must be positive");
  const std::size_t rows = y_true.dim(0);
  const std::size_t k = y_true.dim(1);
  Tensor out = tape.make_output(Shape{1}, {&y_pred});
  auto t = y_true.values();
  auto p = y_pred.values();
  std::vector<double> dist(rows), mass(rows);
  double s = 0.0;
  for (std::size_t r = 0; r < rows; ++r) {
    double d2 = 0.0, m = 0.0;
    for (std::size_t c = 0; c < k; ++c) {
      const double diff = t[r * k + c] - p[r * k + c];
      d2 += diff * diff;
      m += t[r * k + c];
    }
    const double d = std::sqrt(d2);
    if (tape.tracks_branches()) tape.note_branch((d < mu ? 1u : 0u) | (d > 0.0 ? 2u : 0u));
    dist[r] = d;
    mass[r] = m;
    s += m * d2 + (static_cast<double>(k) - m) * std::max(mu - d, 0.0);
  }
  out.values()[0] = s / static_cast<double>(rows);
  tape.record(out, "contrastive_loss",
              [y_true, y_pred, out, mu, dist = std::move(dist), mass = std::move(mass)] {
                auto& gp = y_pred.node()->grad_buffer();
                auto t = y_true.values();
                auto p = y_pred.values();
                const std::size_t rows = y_true.dim(0);
                const std::size_t k = y_true.dim(1);
                const double g = out.node()->grad[0] / static_cast<double>(rows);
                for (std::size_t r = 0; r < rows; ++r) {
                  const double d = dist[r];
                  // Hinge slope; the subgradient at D = 0 is taken as 0.
                  const double hinge = (d < mu && d > 0.0)
                                           ? (static_cast<double>(k) - mass[r]) / d
                                           : 0.0;
                  for (std::size_t c = 0; c < k; ++c) {
                    const double pt = p[r * k + c] - t[r * k + c];
                    gp[r * k + c] += g * (2.0 * mass[r] * pt - hinge * pt);
                  }
                }
              });
  return out;
}

TotalLoss total_loss(Tape& tape, const Tensor& y_true, const Tensor& y_pred,
                     const LossWeights& weights) {
  weights.validate();
  TotalLoss r;
  const Tensor parts[] = {cross_entropy(tape, y_true, y_pred),
                          contrastive_loss(tape, y_true, y_pred, weights.mu),
                          kl_divergence(tape, y_true, y_pred)};
  const double w[] = {1.0, weights.alpha, weights.beta};
  r.total = ops::combine_scalars(tape, parts, w);
  r.parts.cross_entropy = parts[0].item();
  r.parts.contrastive = parts[1].item();
  r.parts.kl = parts[2].item();
  r.parts.total = r.total.item();
  return r;
}

Tensor one_hot(const std::vector<std::size_t>& labels, std::size_t classes) {
  Tensor t = Tensor::zeros({labels.size(), classes});
  auto v = t.values();
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] >= classes) {
      throw AutogradError(AutogradErrc::ShapeMismatch, "label out of range");
    }
    v[i * classes + labels[i]] = 1.0;
  }
  return t;
}

}  // namespace drts
