#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "sgmc/ops.hpp"
#include "sgmc/rng.hpp"
#include "sgmc/tape.hpp"
#include "sgmc/tensor.hpp"

namespace sgmc {

struct GradCheckReport {
  std::string primitive;
  double max_abs_err = 0.0;
  double max_rel_err = 0.0;
  bool pass = true;
};

// Builds a scalar loss from leaf inputs. Must be deterministic.
using GraphFn = std::function<Var(Tape<double>&, const std::vector<Var>&)>;

// Central finite differences against the tape's analytic gradients, 64-bit.
inline GradCheckReport check_gradients(const GraphFn& fn,
                                       const std::vector<Tensor<double>>& inputs,
                                       double h = 1e-5, double rtol = 1e-3,
                                       double atol = 1e-5) {
  GradCheckReport report;
  Tape<double> tape;
  std::vector<Var> vars;
  for (const auto& in : inputs) vars.push_back(tape.leaf(in, true));
  Var loss = fn(tape, vars);
  tape.backward(loss);

  auto eval = [&](const std::vector<Tensor<double>>& pts) {
    Tape<double> t2;
    std::vector<Var> vs;
    for (const auto& in : pts) vs.push_back(t2.leaf(in, false));
    return t2.value(fn(t2, vs))[0];
  };

  std::vector<Tensor<double>> pts = inputs;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    const Tensor<double>& g = tape.grad(vars[i]);
    for (std::size_t k = 0; k < inputs[i].numel(); ++k) {
      double orig = pts[i][k];
      pts[i][k] = orig + h;
      double fp = eval(pts);
      pts[i][k] = orig - h;
      double fm = eval(pts);
      pts[i][k] = orig;
      double numeric = (fp - fm) / (2.0 * h);
      double analytic = g.numel() ? g[k] : 0.0;
      double abs_err = std::abs(analytic - numeric);
      double denom = std::max(std::abs(analytic), std::abs(numeric));
      double rel_err = denom > 0.0 ? abs_err / denom : 0.0;
      report.max_abs_err = std::max(report.max_abs_err, abs_err);
      report.max_rel_err = std::max(report.max_rel_err, rel_err);
      if (abs_err > atol + rtol * denom) report.pass = false;
    }
  }
  return report;
}

enum class Primitive {
  kRelu,
  kAdd,
  kMul,
  kLinear,
  kMatmul,
  kMatmulNT,
  kConvTime,
  kConvChannel,
  kBatchNormTrain,
  kBatchNormEval,
  kMaxPool,
  kAvgPool,
  kSpatialMean,
  kDropoutEval,
  kSoftmax,
  kSoftmaxCrossEntropy,
  kRowL2Normalize,
  kReduceMax,
  kReduceAvg,
  kReduceMin,
  kSliceStack,
  kReshape,
};

inline const std::vector<Primitive>& all_primitives() {
  static const std::vector<Primitive> kinds = {
      Primitive::kRelu,           Primitive::kAdd,
      Primitive::kMul,            Primitive::kLinear,
      Primitive::kMatmul,         Primitive::kMatmulNT,
      Primitive::kConvTime,       Primitive::kConvChannel,
      Primitive::kBatchNormTrain, Primitive::kBatchNormEval,
      Primitive::kMaxPool,        Primitive::kAvgPool,
      Primitive::kSpatialMean,    Primitive::kDropoutEval,
      Primitive::kSoftmax,        Primitive::kSoftmaxCrossEntropy,
      Primitive::kRowL2Normalize, Primitive::kReduceMax,
      Primitive::kReduceAvg,      Primitive::kReduceMin,
      Primitive::kSliceStack,     Primitive::kReshape,
  };
  return kinds;
}

inline const char* primitive_name(Primitive p) {
  switch (p) {
    case Primitive::kRelu: return "relu";
    case Primitive::kAdd: return "add";
    case Primitive::kMul: return "mul";
    case Primitive::kLinear: return "linear";
    case Primitive::kMatmul: return "matmul";
    case Primitive::kMatmulNT: return "matmul_nt";
    case Primitive::kConvTime: return "conv1d_time";
    case Primitive::kConvChannel: return "conv1d_channel";
    case Primitive::kBatchNormTrain: return "batchnorm_train";
    case Primitive::kBatchNormEval: return "batchnorm_eval";
    case Primitive::kMaxPool: return "maxpool";
    case Primitive::kAvgPool: return "avgpool";
    case Primitive::kSpatialMean: return "spatial_mean";
    case Primitive::kDropoutEval: return "dropout_eval";
    case Primitive::kSoftmax: return "softmax";
    case Primitive::kSoftmaxCrossEntropy: return "softmax_cross_entropy";
    case Primitive::kRowL2Normalize: return "row_l2_normalize";
    case Primitive::kReduceMax: return "reduce_max";
    case Primitive::kReduceAvg: return "reduce_avg";
    case Primitive::kReduceMin: return "reduce_min";
    case Primitive::kSliceStack: return "slice_stack";
    case Primitive::kReshape: return "reshape";
  }
  return "unknown";
}

// Checks one primitive on a random seeded shape. Non-scalar outputs are
// contracted to a scalar with a fixed random projection so the full output
// Jacobian is exercised.
inline GradCheckReport grad_check(Primitive kind, std::uint64_t seed) {
  Rng rng(seed ^ 0x5163'4d43'6768'6bULL);
  GradCheckReport report;
  report.primitive = primitive_name(kind);

  auto rnd = [&](Shape s) { return random_uniform<double>(s, rng, -1.0, 1.0); };
  // Distinct, well-separated values so max/min argument choices and ReLU
  // activation signs are stable under the finite-difference step.
  auto rnd_distinct = [&](Shape s) {
    Tensor<double> t(s);
    std::size_t n = t.numel();
    std::vector<std::size_t> perm(n);
    for (std::size_t i = 0; i < n; ++i) perm[i] = i;
    rng.shuffle(perm);
    for (std::size_t i = 0; i < n; ++i) {
      double v = 0.0137 * (static_cast<double>(perm[i]) - 0.5 * static_cast<double>(n));
      if (std::abs(v) < 0.005) v += v >= 0 ? 0.01 : -0.01;
      t[i] = v;
    }
    return t;
  };
  auto project = [](Tape<double>& t, Var out, const Tensor<double>& w) {
    Var wl = t.leaf(w, false);
    return ops::sum(t, ops::mul(t, out, wl));
  };

  std::vector<Tensor<double>> inputs;
  GraphFn fn;

  switch (kind) {
    case Primitive::kRelu: {
      Shape s = {2 + rng.uniform_u64(3), 2 + rng.uniform_u64(6)};
      inputs = {rnd_distinct(s)};
      Tensor<double> w = rnd(s);
      fn = [w, project](Tape<double>& t, const std::vector<Var>& v) {
        return project(t, ops::relu(t, v[0]), w);
      };
      break;
    }
    case Primitive::kAdd:
    case Primitive::kMul: {
      Shape s = {2 + rng.uniform_u64(3), 2 + rng.uniform_u64(6)};
      inputs = {rnd(s), rnd(s)};
      Tensor<double> w = rnd(s);
      fn = [w, project, kind](Tape<double>& t, const std::vector<Var>& v) {
        Var o = kind == Primitive::kAdd ? ops::add(t, v[0], v[1]) : ops::mul(t, v[0], v[1]);
        return project(t, o, w);
      };
      break;
    }
    case Primitive::kLinear: {
      std::size_t N = 1 + rng.uniform_u64(4), I = 2 + rng.uniform_u64(6),
                  O = 1 + rng.uniform_u64(5);
      inputs = {rnd({N, I}), rnd({O, I}), rnd({O})};
      Tensor<double> w = rnd({N, O});
      fn = [w, project](Tape<double>& t, const std::vector<Var>& v) {
        return project(t, ops::linear(t, v[0], v[1], v[2]), w);
      };
      break;
    }
    case Primitive::kMatmul: {
      std::size_t N = 1 + rng.uniform_u64(4), K = 1 + rng.uniform_u64(5),
                  M = 1 + rng.uniform_u64(4);
      inputs = {rnd({N, K}), rnd({K, M})};
      Tensor<double> w = rnd({N, M});
      fn = [w, project](Tape<double>& t, const std::vector<Var>& v) {
        return project(t, ops::matmul(t, v[0], v[1]), w);
      };
      break;
    }
    case Primitive::kMatmulNT: {
      std::size_t N = 1 + rng.uniform_u64(4), K = 1 + rng.uniform_u64(5),
                  M = 1 + rng.uniform_u64(4);
      inputs = {rnd({N, K}), rnd({M, K})};
      Tensor<double> w = rnd({N, M});
      fn = [w, project](Tape<double>& t, const std::vector<Var>& v) {
        return project(t, ops::matmul_nt(t, v[0], v[1]), w);
      };
      break;
    }
    case Primitive::kConvTime:
    case Primitive::kConvChannel: {
      std::size_t N = 1 + rng.uniform_u64(2), C = 1 + rng.uniform_u64(2),
                  O = 1 + rng.uniform_u64(3);
      std::size_t H = 3 + rng.uniform_u64(4), W = 5 + rng.uniform_u64(6);
      std::size_t k = 2 + rng.uniform_u64(3);
      ops::Conv2dAttrs at;
      Shape ks;
      if (kind == Primitive::kConvTime) {
        ks = {O, C, 1, k};
        at.pad_w = k / 2;
        at.stride_w = 1 + rng.uniform_u64(2);
      } else {
        ks = {O, C, k, 1};
        at.pad_h = k / 2;
      }
      inputs = {rnd({N, C, H, W}), rnd(ks), rnd({O})};
      std::size_t Ho = (H + 2 * at.pad_h - ks[2]) / at.stride_h + 1;
      std::size_t Wo = (W + 2 * at.pad_w - ks[3]) / at.stride_w + 1;
      Tensor<double> w = rnd({N, O, Ho, Wo});
      fn = [w, project, at](Tape<double>& t, const std::vector<Var>& v) {
        return project(t, ops::conv2d(t, v[0], v[1], v[2], at), w);
      };
      break;
    }
    case Primitive::kBatchNormTrain:
    case Primitive::kBatchNormEval: {
      std::size_t N = 3 + rng.uniform_u64(6), F = 1 + rng.uniform_u64(4);
      inputs = {rnd({N, F}), rnd({F}), rnd({F})};
      Tensor<double> w = rnd({N, F});
      bool train = kind == Primitive::kBatchNormTrain;
      Tensor<double> rm = rnd({F});
      Tensor<double> rv = random_uniform<double>({F}, rng, 0.5, 2.0);
      fn = [w, project, train, rm, rv](Tape<double>& t, const std::vector<Var>& v) {
        Tensor<double> m = rm, s = rv;
        return project(t, ops::batchnorm(t, v[0], v[1], v[2], &m, &s, train), w);
      };
      break;
    }
    case Primitive::kMaxPool:
    case Primitive::kAvgPool: {
      std::size_t N = 1 + rng.uniform_u64(2), C = 1 + rng.uniform_u64(2);
      std::size_t H = 2 + rng.uniform_u64(3), W = 4 + rng.uniform_u64(6);
      ops::Pool2dAttrs at;
      at.kw = 2 + rng.uniform_u64(2);
      at.stride_w = at.kw;  // non-overlapping windows keep max subgradients clean
      inputs = {rnd_distinct({N, C, H, W})};
      std::size_t Wo = (W - at.kw) / at.stride_w + 1;
      Tensor<double> w = rnd({N, C, H, Wo});
      fn = [w, project, at, kind](Tape<double>& t, const std::vector<Var>& v) {
        Var o = kind == Primitive::kMaxPool ? ops::maxpool2d(t, v[0], at)
                                            : ops::avgpool2d(t, v[0], at);
        return project(t, o, w);
      };
      break;
    }
    case Primitive::kSpatialMean: {
      std::size_t N = 1 + rng.uniform_u64(3), C = 1 + rng.uniform_u64(3);
      Shape s = {N, C, 2 + rng.uniform_u64(3), 2 + rng.uniform_u64(4)};
      inputs = {rnd(s)};
      Tensor<double> w = rnd({N, C});
      fn = [w, project](Tape<double>& t, const std::vector<Var>& v) {
        return project(t, ops::spatial_mean(t, v[0]), w);
      };
      break;
    }
    case Primitive::kDropoutEval: {
      Shape s = {2 + rng.uniform_u64(3), 2 + rng.uniform_u64(6)};
      inputs = {rnd(s)};
      Tensor<double> w = rnd(s);
      fn = [w, project](Tape<double>& t, const std::vector<Var>& v) {
        Rng r(0);
        return project(t, ops::dropout(t, v[0], 0.5, /*train=*/false, r), w);
      };
      break;
    }
    case Primitive::kSoftmax: {
      Shape s = {1 + rng.uniform_u64(4), 2 + rng.uniform_u64(5)};
      inputs = {rnd(s)};
      Tensor<double> w = rnd(s);
      fn = [w, project](Tape<double>& t, const std::vector<Var>& v) {
        return project(t, ops::softmax_rows(t, v[0]), w);
      };
      break;
    }
    case Primitive::kSoftmaxCrossEntropy: {
      std::size_t N = 1 + rng.uniform_u64(5), K = 2 + rng.uniform_u64(5);
      inputs = {rnd({N, K})};
      std::vector<int> targets(N);
      for (auto& tg : targets) tg = static_cast<int>(rng.uniform_u64(K));
      fn = [targets](Tape<double>& t, const std::vector<Var>& v) {
        return ops::cross_entropy_mean(t, v[0], targets);
      };
      break;
    }
    case Primitive::kRowL2Normalize: {
      std::size_t N = 1 + rng.uniform_u64(4), K = 2 + rng.uniform_u64(6);
      Tensor<double> x = rnd({N, K});
      for (std::size_t i = 0; i < x.numel(); ++i) x[i] += x[i] >= 0 ? 0.5 : -0.5;
      inputs = {x};
      Tensor<double> w = rnd({N, K});
      fn = [w, project](Tape<double>& t, const std::vector<Var>& v) {
        return project(t, ops::row_l2_normalize(t, v[0]), w);
      };
      break;
    }
    case Primitive::kReduceMax:
    case Primitive::kReduceAvg:
    case Primitive::kReduceMin: {
      std::size_t N = 2 + rng.uniform_u64(5), K = 2 + rng.uniform_u64(6);
      inputs = {rnd_distinct({N, K})};
      Tensor<double> w = rnd({K});
      ops::Reduce red = kind == Primitive::kReduceMax   ? ops::Reduce::kMax
                        : kind == Primitive::kReduceAvg ? ops::Reduce::kAvg
                                                        : ops::Reduce::kMin;
      fn = [w, project, red](Tape<double>& t, const std::vector<Var>& v) {
        return project(t, ops::reduce_rows(t, v[0], red), w);
      };
      break;
    }
    case Primitive::kSliceStack: {
      std::size_t N = 4 + rng.uniform_u64(4), K = 2 + rng.uniform_u64(5);
      inputs = {rnd({N, K})};
      Tensor<double> w = rnd({2, K});
      fn = [w, project, N](Tape<double>& t, const std::vector<Var>& v) {
        Var a = ops::reduce_rows(t, ops::slice_rows(t, v[0], 0, N / 2), ops::Reduce::kAvg);
        Var b = ops::reduce_rows(t, ops::slice_rows(t, v[0], N / 2, N - N / 2),
                                 ops::Reduce::kAvg);
        return project(t, ops::stack_rows(t, {a, b}), w);
      };
      break;
    }
    case Primitive::kReshape: {
      std::size_t N = 2 + rng.uniform_u64(3), K = 2 + rng.uniform_u64(4);
      inputs = {rnd({N, K})};
      Tensor<double> w = rnd({N * K, 1});
      fn = [w, project, N, K](Tape<double>& t, const std::vector<Var>& v) {
        return project(t, ops::reshape(t, v[0], {N * K, 1}), w);
      };
      break;
    }
  }

  GradCheckReport r = check_gradients(fn, inputs);
  r.primitive = report.primitive;
  return r;
}

// Worst case over `n_shapes` seeded random shapes for one primitive.
inline GradCheckReport grad_check_suite(Primitive kind, std::size_t n_shapes,
                                        std::uint64_t seed0 = 0) {
  GradCheckReport worst;
  worst.primitive = primitive_name(kind);
  for (std::size_t i = 0; i < n_shapes; ++i) {
    GradCheckReport r = grad_check(kind, seed0 + i);
    worst.max_abs_err = std::max(worst.max_abs_err, r.max_abs_err);
    worst.max_rel_err = std::max(worst.max_rel_err, r.max_rel_err);
    worst.pass = worst.pass && r.pass;
  }
  return worst;
}

}  // namespace sgmc
