// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The DenseRTSleep Authors

#include "drts/gradcheck_suite.hpp"

#include <algorithm>
#include <cstdio>
#include <sstream>

#include "drts/losses.hpp"
#include "drts/network.hpp"
#include "drts/ops.hpp"
#include "drts/rng.hpp"

namespace drts {
namespace {

constexpr double kSmooth = 1e-5;
constexpr double kPiecewise = 1e-4;

Tensor normal(Rng& rng, Shape shape, double scale = 1.0) {
  std::vector<double> v(shape_numel(shape));
  for (double& x : v) x = scale * rng.normal();
  return Tensor::from(std::move(shape), std::move(v), true);
}

std::size_t between(Rng& rng, std::size_t lo, std::size_t hi) {
  return lo + static_cast<std::size_t>(rng.below(hi - lo + 1));
}

std::vector<double> projection(Rng& rng, std::size_t n) {
  std::vector<double> w(n);
  for (double& x : w) x = rng.uniform(-1.0, 1.0);
  return w;
}

// Scalar probe: random projection of the op output.
Tensor probe(Tape& t, const Tensor& y, const std::vector<double>& w) {
  return ops::weighted_sum(t, y, w);
}

std::vector<Parameter> named(std::initializer_list<std::pair<const char*, Tensor>> items) {
  std::vector<Parameter> out;
  for (const auto& [n, t] : items) out.push_back({n, t});
  return out;
}

using Builder = std::function<GradCheckReport(Rng&, double)>;

SuiteCase make_case(std::string scope, std::string name, double tol, Builder build) {
  SuiteCase c;
  c.scope = std::move(scope);
  c.name = std::move(name);
  c.tolerance = tol;
  const std::string key = c.name;
  c.run = [build, key](std::uint64_t seed, double tolerance) {
    Rng rng(RngStreams(seed).seed_for(key));
    return build(rng, tolerance);
  };
  return c;
}

// Unary elementwise op on a random [2..3, 2..4] tensor.
template <typename Op>
Builder unary(Op op) {
  return [op](Rng& rng, double tol) {
    Tensor x = normal(rng, {between(rng, 2, 3), between(rng, 2, 4)});
    const auto w = projection(rng, x.numel());
    return grad_check([&](Tape& t) { return probe(t, op(t, x), w); }, named({{"x", x}}), tol);
  };
}

// Probabilities as a softmax of free logits, so perturbations stay on the
// simplex.
Builder loss_case(std::function<Tensor(Tape&, const Tensor&, const Tensor&)> loss, bool soft) {
  return [loss, soft](Rng& rng, double tol) {
    const std::size_t rows = between(rng, 1, 4);
    Tensor logits = normal(rng, {rows, 5});
    Tensor target = Tensor::zeros({rows, 5});
    for (std::size_t r = 0; r < rows; ++r) {
      if (soft) {
        double z = 0;
        for (std::size_t c = 0; c < 5; ++c) z += (target.values()[r * 5 + c] = rng.uniform());
        for (std::size_t c = 0; c < 5; ++c) target.values()[r * 5 + c] /= z;
      } else {
        target.values()[r * 5 + rng.below(5)] = 1.0;
      }
    }
    return grad_check([&](Tape& t) { return loss(t, target, ops::softmax(t, logits)); },
                      named({{"logits", logits}}), tol);
  };
}

Builder model_case(ModelVariant v) {
  return [v](Rng& rng, double tol) {
    Model m(ModelConfig::gradcheck(v), rng.next_u64());
    std::vector<double> xv(2 * 64);
    for (double& x : xv) x = rng.normal();
    const Tensor x = Tensor::from({2, 1, 64}, std::move(xv));
    const Tensor y = one_hot({rng.below(5), rng.below(5)}, 5);
    const LossWeights w = effective_weights(v, LossWeights{});
    return grad_check(
        [&](Tape& t) { return total_loss(t, y, m.forward(t, x, Mode::Train), w).total; },
        m.parameters(), tol);
  };
}

// Squares its input but back-propagates x instead of 2x.
Tensor broken_square(Tape& t, const Tensor& in) {
  Tensor out = t.make_output(in.shape(), {&in});
  for (std::size_t i = 0; i < in.numel(); ++i) out.values()[i] = in.values()[i] * in.values()[i];
  t.record(out, "broken_square", [in, out] {
    auto& g = in.node()->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += out.node()->grad[i] * in.values()[i];
  });
  return out;
}

std::vector<SuiteCase> build_registry() {
  std::vector<SuiteCase> r;
  r.push_back(make_case("add", "add", kSmooth, [](Rng& rng, double tol) {
    const Shape s{between(rng, 1, 3), between(rng, 2, 5)};
    Tensor a = normal(rng, s), b = normal(rng, s);
    const auto w = projection(rng, a.numel());
    return grad_check([&](Tape& t) { return probe(t, ops::add(t, a, b), w); },
                      named({{"a", a}, {"b", b}}), tol);
  }));
  r.push_back(make_case("mul", "mul", kSmooth, [](Rng& rng, double tol) {
    const Shape s{between(rng, 1, 3), between(rng, 2, 5)};
    Tensor a = normal(rng, s), b = normal(rng, s);
    const auto w = projection(rng, a.numel());
    return grad_check([&](Tape& t) { return probe(t, ops::mul(t, a, b), w); },
                      named({{"a", a}, {"b", b}}), tol);
  }));
  r.push_back(make_case("scale", "scale", kSmooth, unary([](Tape& t, const Tensor& x) {
    return ops::scale(t, x, -1.75);
  })));
  r.push_back(make_case("sum", "sum", kSmooth, [](Rng& rng, double tol) {
    Tensor x = normal(rng, {between(rng, 1, 4), between(rng, 1, 4)});
    return grad_check([&](Tape& t) { return ops::sum(t, ops::mul(t, x, x)); }, named({{"x", x}}), tol);
  }));
  r.push_back(make_case("combine_scalars", "combine_scalars", kSmooth, [](Rng& rng, double tol) {
    Tensor x = normal(rng, {between(rng, 2, 5)});
    const auto w1 = projection(rng, x.numel()), w2 = projection(rng, x.numel());
    const double k[] = {rng.uniform(), rng.uniform(), rng.uniform()};
    return grad_check(
        [&](Tape& t) {
          const Tensor parts[] = {probe(t, x, w1), probe(t, ops::mul(t, x, x), w2), ops::sum(t, x)};
          return ops::combine_scalars(t, parts, k);
        },
        named({{"x", x}}), tol);
  }));
  r.push_back(make_case("relu", "relu", kPiecewise, unary([](Tape& t, const Tensor& x) { return ops::relu(t, x); })));
  r.push_back(make_case("sigmoid", "sigmoid", kSmooth, unary([](Tape& t, const Tensor& x) { return ops::sigmoid(t, x); })));
  r.push_back(make_case("tanh", "tanh", kSmooth, unary([](Tape& t, const Tensor& x) { return ops::tanh_op(t, x); })));
  r.push_back(make_case("conv1d", "conv1d", kSmooth, [](Rng& rng, double tol) {
    const std::size_t B = between(rng, 1, 2), Ci = between(rng, 1, 3), Co = between(rng, 1, 3);
    const std::size_t K = between(rng, 1, 4), L = between(rng, K + 2, 9);
    const std::size_t stride = between(rng, 1, 2), pad = between(rng, 0, K / 2);
    Tensor x = normal(rng, {B, Ci, L}), k = normal(rng, {Co, Ci, K}), b = normal(rng, {Co});
    const std::size_t Lo = (L + 2 * pad - K) / stride + 1;
    const auto w = projection(rng, B * Co * Lo);
    return grad_check([&](Tape& t) { return probe(t, ops::conv1d(t, x, k, b, stride, pad), w); },
                      named({{"input", x}, {"kernel", k}, {"bias", b}}), tol);
  }));
  for (Mode mode : {Mode::Train, Mode::Infer}) {
    const bool train = mode == Mode::Train;
    r.push_back(make_case("batchnorm1d", train ? "batchnorm1d.train" : "batchnorm1d.infer", kPiecewise,
                          [mode](Rng& rng, double tol) {
      const std::size_t B = between(rng, 1, 3), C = between(rng, 1, 3), L = between(rng, 2, 5);
      Tensor x = normal(rng, {B, C, L}), g = normal(rng, {C}), b = normal(rng, {C});
      BatchNormState state(C);
      for (std::size_t c = 0; c < C; ++c) {
        state.running_mean[c] = rng.normal();
        state.running_var[c] = 0.5 + rng.uniform();
      }
      const auto w = projection(rng, x.numel());
      return grad_check(
          [&](Tape& t) { return probe(t, ops::batchnorm1d(t, x, g, b, state, mode), w); },
          named({{"input", x}, {"gamma", g}, {"beta", b}}), tol);
    }));
  }
  r.push_back(make_case("max_pool1d", "max_pool1d", kPiecewise, [](Rng& rng, double tol) {
    const std::size_t win = between(rng, 1, 3), stride = between(rng, 1, 3), L = between(rng, win + 1, 9);
    Tensor x = normal(rng, {between(rng, 1, 2), between(rng, 1, 2), L});
    const std::size_t Lo = (L - win) / stride + 1;
    const auto w = projection(rng, x.dim(0) * x.dim(1) * Lo);
    return grad_check([&](Tape& t) { return probe(t, ops::max_pool1d(t, x, win, stride), w); },
                      named({{"input", x}}), tol);
  }));
  r.push_back(make_case("avg_pool1d", "avg_pool1d", kSmooth, [](Rng& rng, double tol) {
    const std::size_t win = between(rng, 1, 3), stride = between(rng, 1, 3), L = between(rng, win + 1, 9);
    Tensor x = normal(rng, {between(rng, 1, 2), between(rng, 1, 2), L});
    const std::size_t Lo = (L - win) / stride + 1;
    const auto w = projection(rng, x.dim(0) * x.dim(1) * Lo);
    return grad_check([&](Tape& t) { return probe(t, ops::avg_pool1d(t, x, win, stride), w); },
                      named({{"input", x}}), tol);
  }));
  r.push_back(make_case("linear", "linear", kSmooth, [](Rng& rng, double tol) {
    const std::size_t B = between(rng, 1, 3), Din = between(rng, 1, 4), Dout = between(rng, 1, 4);
    Tensor x = normal(rng, {B, Din}), W = normal(rng, {Dout, Din}), b = normal(rng, {Dout});
    const auto w = projection(rng, B * Dout);
    return grad_check([&](Tape& t) { return probe(t, ops::linear(t, x, W, b), w); },
                      named({{"input", x}, {"weight", W}, {"bias", b}}), tol);
  }));
  r.push_back(make_case("softmax", "softmax", kSmooth, unary([](Tape& t, const Tensor& x) { return ops::softmax(t, x); })));
  r.push_back(make_case("scaled_self_attention", "scaled_self_attention", kSmooth, [](Rng& rng, double tol) {
    Tensor x = normal(rng, {between(rng, 1, 4), between(rng, 1, 4)});
    const auto w = projection(rng, x.numel());
    return grad_check([&](Tape& t) { return probe(t, ops::scaled_self_attention(t, x), w); },
                      named({{"x_hat", x}}), tol);
  }));
  r.push_back(make_case("multi_head_self_attention", "multi_head_self_attention", kSmooth,
                        [](Rng& rng, double tol) {
    const std::size_t heads = between(rng, 1, 3);
    Tensor x = normal(rng, {between(rng, 1, 2), heads * between(rng, 1, 2), between(rng, 1, 4)});
    const auto w = projection(rng, x.numel());
    return grad_check([&](Tape& t) { return probe(t, ops::multi_head_self_attention(t, x, heads), w); },
                      named({{"input", x}}), tol);
  }));
  r.push_back(make_case("concat", "concat", kSmooth, [](Rng& rng, double tol) {
    const std::size_t axis = between(rng, 0, 2);
    Shape sa{2, 2, 3}, sb{2, 2, 3};
    sb[axis] = between(rng, 1, 3);
    Tensor a = normal(rng, sa), b = normal(rng, sb);
    const auto w = projection(rng, a.numel() + b.numel());
    return grad_check(
        [&](Tape& t) {
          const Tensor parts[] = {a, b};
          return probe(t, ops::concat(t, parts, axis), w);
        },
        named({{"a", a}, {"b", b}}), tol);
  }));
  r.push_back(make_case("slice", "slice", kSmooth, [](Rng& rng, double tol) {
    Tensor x = normal(rng, {2, between(rng, 2, 4), between(rng, 2, 5)});
    const std::size_t axis = between(rng, 1, 2);
    const std::size_t begin = between(rng, 0, x.dim(axis) - 1), end = between(rng, begin + 1, x.dim(axis));
    const auto w = projection(rng, x.numel() / x.dim(axis) * (end - begin));
    return grad_check([&](Tape& t) { return probe(t, ops::slice(t, x, axis, begin, end), w); },
                      named({{"x", x}}), tol);
  }));
  r.push_back(make_case("reshape", "reshape", kSmooth, [](Rng& rng, double tol) {
    Tensor x = normal(rng, {2, 3, between(rng, 1, 3)});
    const auto w = projection(rng, x.numel());
    return grad_check(
        [&](Tape& t) { return probe(t, ops::tanh_op(t, ops::reshape(t, x, {x.numel()})), w); },
        named({{"x", x}}), tol);
  }));
  r.push_back(make_case("swap_last_axes", "swap_last_axes", kSmooth, [](Rng& rng, double tol) {
    Tensor x = normal(rng, {between(rng, 1, 2), between(rng, 1, 3), between(rng, 1, 4)});
    const auto w = projection(rng, x.numel());
    return grad_check([&](Tape& t) { return probe(t, ops::swap_last_axes(t, x), w); },
                      named({{"x", x}}), tol);
  }));
  r.push_back(make_case("cross_entropy", "cross_entropy", kSmooth, loss_case(cross_entropy, false)));
  r.push_back(make_case("kl_divergence", "kl_divergence", kSmooth, loss_case(kl_divergence, true)));
  r.push_back(make_case("contrastive_loss", "contrastive_loss", kPiecewise,
                        loss_case([](Tape& t, const Tensor& y, const Tensor& p) {
                          return contrastive_loss(t, y, p, 1.0);
                        }, false)));
  r.push_back(make_case("total_loss", "total_loss", kPiecewise,
                        loss_case([](Tape& t, const Tensor& y, const Tensor& p) {
                          return total_loss(t, y, p, LossWeights{}).total;
                        }, false)));
  r.push_back(make_case("lstm_cell", "lstm_cell", kSmooth, [](Rng& rng, double tol) {
    const std::size_t B = between(rng, 1, 2), C = between(rng, 1, 3), u = between(rng, 1, 3);
    LstmParams p{{"w_ih", normal(rng, {4 * u, C}, 0.5)}, {"w_hh", normal(rng, {4 * u, u}, 0.5)},
                 {"bias", normal(rng, {4 * u}, 0.5)}};
    Tensor x0 = normal(rng, {B, C}), x1 = normal(rng, {B, C});
    const auto w = projection(rng, B * u);
    return grad_check(
        [&](Tape& t) {
          Tensor h = Tensor::zeros({B, u}), c = Tensor::zeros({B, u});
          std::tie(h, c) = lstm_cell(t, x0, h, c, p);
          std::tie(h, c) = lstm_cell(t, x1, h, c, p);
          return ops::add(t, probe(t, h, w), probe(t, c, w));
        },
        {p.w_ih, p.w_hh, p.bias, {"x0", x0}, {"x1", x1}}, tol);
  }));
  for (ModelVariant v : kAllVariants) {
    r.push_back(make_case("model", variant_name(v), kPiecewise, model_case(v)));
  }
  SuiteCase neg = make_case("negative-control", "broken_square", kPiecewise, [](Rng& rng, double tol) {
    Tensor x = normal(rng, {5});
    return grad_check([&](Tape& t) { return ops::sum(t, broken_square(t, x)); }, named({{"x", x}}), tol);
  });
  neg.in_all = false;
  r.push_back(std::move(neg));
  return r;
}

}  // namespace

const std::vector<SuiteCase>& gradcheck_cases() {
  static const std::vector<SuiteCase> registry = build_registry();
  return registry;
}

std::vector<std::string> gradcheck_scopes() {
  std::vector<std::string> out;
  for (const auto& c : gradcheck_cases()) {
    if (std::find(out.begin(), out.end(), c.scope) == out.end()) out.push_back(c.scope);
  }
  return out;
}

std::vector<SuiteResult> run_gradcheck_suite(const std::string& scope, std::size_t seeds,
                                             double tolerance_cap) {
  if (seeds == 0) throw ConfigError("gradcheck needs at least one seed");
  std::vector<const SuiteCase*> selected;
  for (const auto& c : gradcheck_cases()) {
    const bool hit = scope == "all" ? c.in_all : (c.scope == scope || c.name == scope);
    if (hit) selected.push_back(&c);
  }
  if (selected.empty()) throw ConfigError("unknown gradcheck scope '" + scope + "'");
  std::vector<SuiteResult> out;
  for (const SuiteCase* c : selected) {
    SuiteResult res;
    res.scope = c->scope;
    res.name = c->name;
    res.seeds = seeds;
    res.tolerance = tolerance_cap > 0.0 ? std::min(c->tolerance, tolerance_cap) : c->tolerance;
    res.passed = true;
    for (std::uint64_t s = 0; s < seeds; ++s) {
      const GradCheckReport rep = c->run(s, res.tolerance);
      res.max_rel_error = std::max(res.max_rel_error, rep.max_rel_error());
      res.coordinates += rep.coordinates();
      res.kinks += rep.kinks();
      res.below_resolution += rep.below_resolution();
      res.passed = res.passed && rep.passed();
    }
    out.push_back(res);
  }
  return out;
}

std::string render_suite(const std::vector<SuiteResult>& results) {
  std::ostringstream os;
  char buf[256];
  std::snprintf(buf, sizeof buf, "%-28s %6s %10s %12s %8s %6s %6s  %s\n", "case", "seeds", "tol",
                "max_rel_err", "coords", "kinks", "fpres", "result");
  os << buf;
  for (const auto& r : results) {
    std::snprintf(buf, sizeof buf, "%-28s %6zu %10.0e %12.3e %8zu %6zu %6zu  %s\n", r.name.c_str(), r.seeds,
                  r.tolerance, r.max_rel_error, r.coordinates, r.kinks, r.below_resolution,
                  r.passed ? "pass" : "FAIL");
    os << buf;
  }
  return os.str();
}

bool suite_passed(const std::vector<SuiteResult>& results) {
  return std::all_of(results.begin(), results.end(), [](const SuiteResult& r) { return r.passed; });
}

}  // namespace drts
