#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <memory>
#include <vector>

#include "sgmc/rng.hpp"
#include "sgmc/tape.hpp"
#include "sgmc/tensor.hpp"

namespace sgmc {
namespace ops {

template <class T>
Var add(Tape<T>& t, Var a, Var b) {
  check_same_shape(t.value(a), t.value(b), "add");
  Tensor<T> out = t.value(a);
  const Tensor<T>& vb = t.value(b);
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] += vb[i];
  return t.emplace(std::move(out), {a, b}, [a, b](Tape<T>& tp, Var self) {
    const Tensor<T>& g = tp.grad(self);
    if (tp.needs_grad(a)) {
      Tensor<T>& ga = tp.grad_buffer(a);
      for (std::size_t i = 0; i < g.numel(); ++i) ga[i] += g[i];
    }
    if (tp.needs_grad(b)) {
      Tensor<T>& gb = tp.grad_buffer(b);
      for (std::size_t i = 0; i < g.numel(); ++i) gb[i] += g[i];
    }
  });
}

template <class T>
Var sub(Tape<T>& t, Var a, Var b) {
  check_same_shape(t.value(a), t.value(b), "sub");
  Tensor<T> out = t.value(a);
  const Tensor<T>& vb = t.value(b);
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] -= vb[i];
  return t.emplace(std::move(out), {a, b}, [a, b](Tape<T>& tp, Var self) {
    const Tensor<T>& g = tp.grad(self);
    if (tp.needs_grad(a)) {
      Tensor<T>& ga = tp.grad_buffer(a);
      for (std::size_t i = 0; i < g.numel(); ++i) ga[i] += g[i];
    }
    if (tp.needs_grad(b)) {
      Tensor<T>& gb = tp.grad_buffer(b);
      for (std::size_t i = 0; i < g.numel(); ++i) gb[i] -= g[i];
    }
  });
}

template <class T>
Var mul(Tape<T>& t, Var a, Var b) {
  check_same_shape(t.value(a), t.value(b), "mul");
  Tensor<T> out = t.value(a);
  const Tensor<T>& vb = t.value(b);
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] *= vb[i];
  return t.emplace(std::move(out), {a, b}, [a, b](Tape<T>& tp, Var self) {
    const Tensor<T>& g = tp.grad(self);
    const Tensor<T>& va = tp.value(a);
    const Tensor<T>& vb2 = tp.value(b);
    if (tp.needs_grad(a)) {
      Tensor<T>& ga = tp.grad_buffer(a);
      for (std::size_t i = 0; i < g.numel(); ++i) ga[i] += g[i] * vb2[i];
    }
    if (tp.needs_grad(b)) {
      Tensor<T>& gb = tp.grad_buffer(b);
      for (std::size_t i = 0; i < g.numel(); ++i) gb[i] += g[i] * va[i];
    }
  });
}

template <class T>
Var scale(Tape<T>& t, Var a, T s) {
  Tensor<T> out = t.value(a);
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] *= s;
  return t.emplace(std::move(out), {a}, [a, s](Tape<T>& tp, Var self) {
    const Tensor<T>& g = tp.grad(self);
    Tensor<T>& ga = tp.grad_buffer(a);
    for (std::size_t i = 0; i < g.numel(); ++i) ga[i] += g[i] * s;
  });
}

template <class T>
Var relu(Tape<T>& t, Var a) {
  Tensor<T> out = t.value(a);
  for (std::size_t i = 0; i < out.numel(); ++i)
    if (out[i] < T(0)) out[i] = T(0);
  return t.emplace(std::move(out), {a}, [a](Tape<T>& tp, Var self) {
    const Tensor<T>& g = tp.grad(self);
    const Tensor<T>& x = tp.value(a);
    Tensor<T>& ga = tp.grad_buffer(a);
    // ReLU'(0) = 0.
    for (std::size_t i = 0; i < g.numel(); ++i)
      if (x[i] > T(0)) ga[i] += g[i];
  });
}

template <class T>
Var reshape(Tape<T>& t, Var a, Shape shape) {
  if (shape_numel(shape) != t.value(a).numel())
    throw ShapeError("reshape: cannot view " + shape_str(t.value(a).shape()) +
                     " as " + shape_str(shape));
  Tensor<T> out(std::move(shape), t.value(a).vec());
  return t.emplace(std::move(out), {a}, [a](Tape<T>& tp, Var self) {
    const Tensor<T>& g = tp.grad(self);
    Tensor<T>& ga = tp.grad_buffer(a);
    for (std::size_t i = 0; i < g.numel(); ++i) ga[i] += g[i];
  });
}

template <class T>
Var sum(Tape<T>& t, Var a) {
  T s = T(0);
  const Tensor<T>& v = t.value(a);
  for (std::size_t i = 0; i < v.numel(); ++i) s += v[i];
  return t.emplace(Tensor<T>({1}, {s}), {a}, [a](Tape<T>& tp, Var self) {
    T g = tp.grad(self)[0];
    Tensor<T>& ga = tp.grad_buffer(a);
    for (std::size_t i = 0; i < ga.numel(); ++i) ga[i] += g;
  });
}

template <class T>
Var mean(Tape<T>& t, Var a) {
  const Tensor<T>& v = t.value(a);
  T s = T(0);
  for (std::size_t i = 0; i < v.numel(); ++i) s += v[i];
  T inv = T(1) / static_cast<T>(v.numel());
  return t.emplace(Tensor<T>({1}, {s * inv}), {a}, [a, inv](Tape<T>& tp, Var self) {
    T g = tp.grad(self)[0] * inv;
    Tensor<T>& ga = tp.grad_buffer(a);
    for (std::size_t i = 0; i < ga.numel(); ++i) ga[i] += g;
  });
}

// c[N,M] = a[N,K] * b[K,M]
template <class T>
Var matmul(Tape<T>& t, Var a, Var b) {
  const Tensor<T>& va = t.value(a);
  const Tensor<T>& vb = t.value(b);
  if (va.ndim() != 2 || vb.ndim() != 2 || va.dim(1) != vb.dim(0))
    throw ShapeError("matmul: incompatible shapes " + shape_str(va.shape()) +
                     " x " + shape_str(vb.shape()));
  std::size_t N = va.dim(0), K = va.dim(1), M = vb.dim(1);
  Tensor<T> out({N, M});
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t k = 0; k < K; ++k) {
      T av = va[n * K + k];
      for (std::size_t m = 0; m < M; ++m) out[n * M + m] += av * vb[k * M + m];
    }
  return t.emplace(std::move(out), {a, b}, [a, b, N, K, M](Tape<T>& tp, Var self) {
    const Tensor<T>& g = tp.grad(self);
    const Tensor<T>& va2 = tp.value(a);
    const Tensor<T>& vb2 = tp.value(b);
    if (tp.needs_grad(a)) {
      Tensor<T>& ga = tp.grad_buffer(a);
      for (std::size_t n = 0; n < N; ++n)
        for (std::size_t m = 0; m < M; ++m) {
          T gv = g[n * M + m];
          for (std::size_t k = 0; k < K; ++k) ga[n * K + k] += gv * vb2[k * M + m];
        }
    }
    if (tp.needs_grad(b)) {
      Tensor<T>& gb = tp.grad_buffer(b);
      for (std::size_t n = 0; n < N; ++n)
        for (std::size_t k = 0; k < K; ++k) {
          T av = va2[n * K + k];
          for (std::size_t m = 0; m < M; ++m) gb[k * M + m] += av * g[n * M + m];
        }
    }
  });
}

// c[N,M] = a[N,K] * b[M,K]^T  (used for similarity matrices)
template <class T>
Var matmul_nt(Tape<T>& t, Var a, Var b) {
  const Tensor<T>& va = t.value(a);
  const Tensor<T>& vb = t.value(b);
  if (va.ndim() != 2 || vb.ndim() != 2 || va.dim(1) != vb.dim(1))
    throw ShapeError("matmul_nt: incompatible shapes " + shape_str(va.shape()) +
                     " x " + shape_str(vb.shape()) + "^T");
  std::size_t N = va.dim(0), K = va.dim(1), M = vb.dim(0);
  Tensor<T> out({N, M});
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t m = 0; m < M; ++m) {
      T s = T(0);
      for (std::size_t k = 0; k < K; ++k) s += va[n * K + k] * vb[m * K + k];
      out[n * M + m] = s;
    }
  return t.emplace(std::move(out), {a, b}, [a, b, N, K, M](Tape<T>& tp, Var self) {
    const Tensor<T>& g = tp.grad(self);
    const Tensor<T>& va2 = tp.value(a);
    const Tensor<T>& vb2 = tp.value(b);
    if (tp.needs_grad(a)) {
      Tensor<T>& ga = tp.grad_buffer(a);
      for (std::size_t n = 0; n < N; ++n)
        for (std::size_t m = 0; m < M; ++m) {
          T gv = g[n * M + m];
          for (std::size_t k = 0; k < K; ++k) ga[n * K + k] += gv * vb2[m * K + k];
        }
    }
    if (tp.needs_grad(b)) {
      Tensor<T>& gb = tp.grad_buffer(b);
      for (std::size_t n = 0; n < N; ++n)
        for (std::size_t m = 0; m < M; ++m) {
          T gv = g[n * M + m];
          for (std::size_t k = 0; k < K; ++k) gb[m * K + k] += gv * va2[n * K + k];
        }
    }
  });
}

// y[N,O] = x[N,I] * w[O,I]^T + b[O]
template <class T>
Var linear(Tape<T>& t, Var x, Var w, Var b) {
  const Tensor<T>& vx = t.value(x);
  const Tensor<T>& vw = t.value(w);
  const Tensor<T>& vb = t.value(b);
  if (vx.ndim() != 2 || vw.ndim() != 2 || vb.ndim() != 1 ||
      vx.dim(1) != vw.dim(1) || vw.dim(0) != vb.dim(0))
    throw ShapeError("linear: incompatible shapes x" + shape_str(vx.shape()) +
                     " w" + shape_str(vw.shape()) + " b" + shape_str(vb.shape()));
  std::size_t N = vx.dim(0), I = vx.dim(1), O = vw.dim(0);
  Tensor<T> out({N, O});
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t o = 0; o < O; ++o) {
      T s = vb[o];
      for (std::size_t i = 0; i < I; ++i) s += vx[n * I + i] * vw[o * I + i];
      out[n * O + o] = s;
    }
  return t.emplace(std::move(out), {x, w, b}, [x, w, b, N, I, O](Tape<T>& tp, Var self) {
    const Tensor<T>& g = tp.grad(self);
    const Tensor<T>& vx2 = tp.value(x);
    const Tensor<T>& vw2 = tp.value(w);
    if (tp.needs_grad(x)) {
      Tensor<T>& gx = tp.grad_buffer(x);
      for (std::size_t n = 0; n < N; ++n)
        for (std::size_t o = 0; o < O; ++o) {
          T gv = g[n * O + o];
          for (std::size_t i = 0; i < I; ++i) gx[n * I + i] += gv * vw2[o * I + i];
        }
    }
    if (tp.needs_grad(w)) {
      Tensor<T>& gw = tp.grad_buffer(w);
      for (std::size_t n = 0; n < N; ++n)
        for (std::size_t o = 0; o < O; ++o) {
          T gv = g[n * O + o];
          for (std::size_t i = 0; i < I; ++i) gw[o * I + i] += gv * vx2[n * I + i];
        }
    }
    if (tp.needs_grad(b)) {
      Tensor<T>& gb = tp.grad_buffer(b);
      for (std::size_t n = 0; n < N; ++n)
        for (std::size_t o = 0; o < O; ++o) gb[o] += g[n * O + o];
    }
  });
}

// Row-wise softmax over the last axis of a 2D tensor, with max subtraction.
template <class T>
Var softmax_rows(Tape<T>& t, Var x) {
  const Tensor<T>& vx = t.value(x);
  if (vx.ndim() != 2) throw ShapeError("softmax_rows: expected 2D, got " + shape_str(vx.shape()));
  std::size_t N = vx.dim(0), K = vx.dim(1);
  Tensor<T> out(vx.shape());
  for (std::size_t n = 0; n < N; ++n) {
    T mx = vx[n * K];
    for (std::size_t k = 1; k < K; ++k) mx = std::max(mx, vx[n * K + k]);
    T z = T(0);
    for (std::size_t k = 0; k < K; ++k) {
      out[n * K + k] = std::exp(vx[n * K + k] - mx);
      z += out[n * K + k];
    }
    for (std::size_t k = 0; k < K; ++k) out[n * K + k] /= z;
  }
  return t.emplace(std::move(out), {x}, [x, N, K](Tape<T>& tp, Var self) {
    const Tensor<T>& g = tp.grad(self);
    const Tensor<T>& y = tp.value(self);
    Tensor<T>& gx = tp.grad_buffer(x);
    for (std::size_t n = 0; n < N; ++n) {
      T dot = T(0);
      for (std::size_t k = 0; k < K; ++k) dot += g[n * K + k] * y[n * K + k];
      for (std::size_t k = 0; k < K; ++k)
        gx[n * K + k] += y[n * K + k] * (g[n * K + k] - dot);
    }
  });
}

struct Conv2dAttrs {
  std::size_t stride_h = 1, stride_w = 1;
  std::size_t pad_h = 0, pad_w = 0;
};

// x[N,C,H,W], w[O,C,Kh,Kw], b[O] -> y[N,O,Ho,Wo]
template <class T>
Var conv2d(Tape<T>& t, Var x, Var w, Var b, Conv2dAttrs at) {
  const Tensor<T>& vx = t.value(x);
  const Tensor<T>& vw = t.value(w);
  const Tensor<T>& vb = t.value(b);
  if (vx.ndim() != 4 || vw.ndim() != 4 || vb.ndim() != 1)
    throw ShapeError("conv2d: expected x[N,C,H,W], w[O,C,Kh,Kw], b[O]");
  std::size_t N = vx.dim(0), C = vx.dim(1), H = vx.dim(2), W = vx.dim(3);
  std::size_t O = vw.dim(0), Kh = vw.dim(2), Kw = vw.dim(3);
  if (vw.dim(1) != C || vb.dim(0) != O)
    throw ShapeError("conv2d: channel mismatch x" + shape_str(vx.shape()) + " w" +
                     shape_str(vw.shape()));
  if (H + 2 * at.pad_h < Kh || W + 2 * at.pad_w < Kw)
    throw ShapeError("conv2d: kernel larger than padded input");
  std::size_t Ho = (H + 2 * at.pad_h - Kh) / at.stride_h + 1;
  std::size_t Wo = (W + 2 * at.pad_w - Kw) / at.stride_w + 1;
  Tensor<T> out({N, O, Ho, Wo});
  auto xi = [&](std::size_t n, std::size_t c, std::size_t h, std::size_t ww) {
    return ((n * C + c) * H + h) * W + ww;
  };
  auto wi = [&](std::size_t o, std::size_t c, std::size_t kh, std::size_t kw) {
    return ((o * C + c) * Kh + kh) * Kw + kw;
  };
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t o = 0; o < O; ++o)
      for (std::size_t oh = 0; oh < Ho; ++oh)
        for (std::size_t ow = 0; ow < Wo; ++ow) {
          T s = vb[o];
          for (std::size_t c = 0; c < C; ++c)
            for (std::size_t kh = 0; kh < Kh; ++kh) {
              std::ptrdiff_t ih = static_cast<std::ptrdiff_t>(oh * at.stride_h + kh) -
                                  static_cast<std::ptrdiff_t>(at.pad_h);
              if (ih < 0 || ih >= static_cast<std::ptrdiff_t>(H)) continue;
              for (std::size_t kw = 0; kw < Kw; ++kw) {
                std::ptrdiff_t iw = static_cast<std::ptrdiff_t>(ow * at.stride_w + kw) -
                                    static_cast<std::ptrdiff_t>(at.pad_w);
                if (iw < 0 || iw >= static_cast<std::ptrdiff_t>(W)) continue;
                s += vx[xi(n, c, ih, iw)] * vw[wi(o, c, kh, kw)];
              }
            }
          out[((n * O + o) * Ho + oh) * Wo + ow] = s;
        }
  return t.emplace(std::move(out), {x, w, b},
                   [x, w, b, at, N, C, H, W, O, Kh, Kw, Ho, Wo](Tape<T>& tp, Var self) {
    const Tensor<T>& g = tp.grad(self);
    const Tensor<T>& vx2 = tp.value(x);
    const Tensor<T>& vw2 = tp.value(w);
    bool nx = tp.needs_grad(x), nw = tp.needs_grad(w), nb = tp.needs_grad(b);
    Tensor<T>* gx = nx ? &tp.grad_buffer(x) : nullptr;
    Tensor<T>* gw = nw ? &tp.grad_buffer(w) : nullptr;
    Tensor<T>* gb = nb ? &tp.grad_buffer(b) : nullptr;
    auto xi = [&](std::size_t n, std::size_t c, std::size_t h, std::size_t ww) {
      return ((n * C + c) * H + h) * W + ww;
    };
    auto wi = [&](std::size_t o, std::size_t c, std::size_t kh, std::size_t kw) {
      return ((o * C + c) * Kh + kh) * Kw + kw;
    };
    for (std::size_t n = 0; n < N; ++n)
      for (std::size_t o = 0; o < O; ++o)
        for (std::size_t oh = 0; oh < Ho; ++oh)
          for (std::size_t ow = 0; ow < Wo; ++ow) {
            T gv = g[((n * O + o) * Ho + oh) * Wo + ow];
            if (gv == T(0)) continue;
            if (nb) (*gb)[o] += gv;
            for (std::size_t c = 0; c < C; ++c)
              for (std::size_t kh = 0; kh < Kh; ++kh) {
                std::ptrdiff_t ih = static_cast<std::ptrdiff_t>(oh * at.stride_h + kh) -
                                    static_cast<std::ptrdiff_t>(at.pad_h);
                if (ih < 0 || ih >= static_cast<std::ptrdiff_t>(H)) continue;
                for (std::size_t kw = 0; kw < Kw; ++kw) {
                  std::ptrdiff_t iw = static_cast<std::ptrdiff_t>(ow * at.stride_w + kw) -
                                      static_cast<std::ptrdiff_t>(at.pad_w);
                  if (iw < 0 || iw >= static_cast<std::ptrdiff_t>(W)) continue;
                  if (nx) (*gx)[xi(n, c, ih, iw)] += gv * vw2[wi(o, c, kh, kw)];
                  if (nw) (*gw)[wi(o, c, kh, kw)] += gv * vx2[xi(n, c, ih, iw)];
                }
              }
          }
  });
}

struct Pool2dAttrs {
  std::size_t kh = 1, kw = 1;
  std::size_t stride_h = 1, stride_w = 1;
};

template <class T>
Var maxpool2d(Tape<T>& t, Var x, Pool2dAttrs at) {
  const Tensor<T>& vx = t.value(x);
  if (vx.ndim() != 4) throw ShapeError("maxpool2d: expected 4D, got " + shape_str(vx.shape()));
  std::size_t N = vx.dim(0), C = vx.dim(1), H = vx.dim(2), W = vx.dim(3);
  if (H < at.kh || W < at.kw) throw ShapeError("maxpool2d: window larger than input");
  std::size_t Ho = (H - at.kh) / at.stride_h + 1;
  std::size_t Wo = (W - at.kw) / at.stride_w + 1;
  Tensor<T> out({N, C, Ho, Wo});
  auto argmax = std::make_shared<std::vector<std::size_t>>(out.numel());
  std::size_t oi = 0;
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t c = 0; c < C; ++c)
      for (std::size_t oh = 0; oh < Ho; ++oh)
        for (std::size_t ow = 0; ow < Wo; ++ow, ++oi) {
          T best = -std::numeric_limits<T>::infinity();
          std::size_t best_i = 0;
          for (std::size_t kh = 0; kh < at.kh; ++kh)
            for (std::size_t kw = 0; kw < at.kw; ++kw) {
              std::size_t idx = ((n * C + c) * H + oh * at.stride_h + kh) * W +
                                ow * at.stride_w + kw;
              if (vx[idx] > best) {
                best = vx[idx];
                best_i = idx;
              }
            }
          out[oi] = best;
          (*argmax)[oi] = best_i;
        }
  return t.emplace(std::move(out), {x}, [x, argmax](Tape<T>& tp, Var self) {
    const Tensor<T>& g = tp.grad(self);
    Tensor<T>& gx = tp.grad_buffer(x);
    for (std::size_t i = 0; i < g.numel(); ++i) gx[(*argmax)[i]] += g[i];
  });
}

template <class T>
Var avgpool2d(Tape<T>& t, Var x, Pool2dAttrs at) {
  const Tensor<T>& vx = t.value(x);
  if (vx.ndim() != 4) throw ShapeError("avgpool2d: expected 4D, got " + shape_str(vx.shape()));
  std::size_t N = vx.dim(0), C = vx.dim(1), H = vx.dim(2), W = vx.dim(3);
  if (H < at.kh || W < at.kw) throw ShapeError("avgpool2d: window larger than input");
  std::size_t Ho = (H - at.kh) / at.stride_h + 1;
  std::size_t Wo = (W - at.kw) / at.stride_w + 1;
  Tensor<T> out({N, C, Ho, Wo});
  T inv = T(1) / static_cast<T>(at.kh * at.kw);
  std::size_t oi = 0;
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t c = 0; c < C; ++c)
      for (std::size_t oh = 0; oh < Ho; ++oh)
        for (std::size_t ow = 0; ow < Wo; ++ow, ++oi) {
          T s = T(0);
          for (std::size_t kh = 0; kh < at.kh; ++kh)
            for (std::size_t kw = 0; kw < at.kw; ++kw)
              s += vx[((n * C + c) * H + oh * at.stride_h + kh) * W + ow * at.stride_w + kw];
          out[oi] = s * inv;
        }
  return t.emplace(std::move(out), {x}, [x, at, N, C, H, W, Ho, Wo, inv](Tape<T>& tp, Var self) {
    const Tensor<T>& g = tp.grad(self);
    Tensor<T>& gx = tp.grad_buffer(x);
    std::size_t oi = 0;
    for (std::size_t n = 0; n < N; ++n)
      for (std::size_t c = 0; c < C; ++c)
        for (std::size_t oh = 0; oh < Ho; ++oh)
          for (std::size_t ow = 0; ow < Wo; ++ow, ++oi) {
            T gv = g[oi] * inv;
            for (std::size_t kh = 0; kh < at.kh; ++kh)
              for (std::size_t kw = 0; kw < at.kw; ++kw)
                gx[((n * C + c) * H + oh * at.stride_h + kh) * W + ow * at.stride_w + kw] += gv;
          }
  });
}

// Global average over the two spatial axes: [N,C,H,W] -> [N,C]
template <class T>
Var spatial_mean(Tape<T>& t, Var x) {
  const Tensor<T>& vx = t.value(x);
  if (vx.ndim() != 4) throw ShapeError("spatial_mean: expected 4D, got " + shape_str(vx.shape()));
  std::size_t N = vx.dim(0), C = vx.dim(1), S = vx.dim(2) * vx.dim(3);
  Tensor<T> out({N, C});
  T inv = T(1) / static_cast<T>(S);
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t c = 0; c < C; ++c) {
      T s = T(0);
      for (std::size_t i = 0; i < S; ++i) s += vx[(n * C + c) * S + i];
      out[n * C + c] = s * inv;
    }
  return t.emplace(std::move(out), {x}, [x, N, C, S, inv](Tape<T>& tp, Var self) {
    const Tensor<T>& g = tp.grad(self);
    Tensor<T>& gx = tp.grad_buffer(x);
    for (std::size_t n = 0; n < N; ++n)
      for (std::size_t c = 0; c < C; ++c) {
        T gv = g[n * C + c] * inv;
        for (std::size_t i = 0; i < S; ++i) gx[(n * C + c) * S + i] += gv;
      }
  });
}

// Normalizes per feature (axis 1) over batch and trailing spatial axes.
// x is [N,F] or [N,F,H,W]; gamma/beta are [F]. Running statistics are owned
// by the caller and updated in train mode as a side effect; eval mode
// requires them.
template <class T>
Var batchnorm(Tape<T>& t, Var x, Var gamma, Var beta, Tensor<T>* running_mean,
              Tensor<T>* running_var, bool train, T momentum = T(0.1),
              T eps = T(1e-5)) {
  const Tensor<T>& vx = t.value(x);
  if (vx.ndim() != 2 && vx.ndim() != 4)
    throw ShapeError("batchnorm: expected 2D or 4D, got " + shape_str(vx.shape()));
  std::size_t N = vx.dim(0), F = vx.dim(1);
  std::size_t S = vx.ndim() == 4 ? vx.dim(2) * vx.dim(3) : 1;
  const Tensor<T>& vg = t.value(gamma);
  const Tensor<T>& vb = t.value(beta);
  if (vg.numel() != F || vb.numel() != F)
    throw ShapeError("batchnorm: gamma/beta length must equal feature count");
  if ((running_mean == nullptr) != (running_var == nullptr))
    throw ContractError("batchnorm: running mean/var must be supplied together");
  if (running_mean && (running_mean->numel() != F || running_var->numel() != F))
    throw ShapeError("batchnorm: running stats length must equal feature count");
  std::size_t count = N * S;
  auto idx = [&](std::size_t n, std::size_t f, std::size_t s) { return (n * F + f) * S + s; };

  auto xhat = std::make_shared<Tensor<T>>(vx.shape());
  auto invstd = std::make_shared<std::vector<T>>(F);
  Tensor<T> out(vx.shape());
  if (train) {
    if (count < 2) throw ContractError("batchnorm: train mode needs batch*spatial >= 2");
    for (std::size_t f = 0; f < F; ++f) {
      T mu = T(0);
      for (std::size_t n = 0; n < N; ++n)
        for (std::size_t s = 0; s < S; ++s) mu += vx[idx(n, f, s)];
      mu /= static_cast<T>(count);
      T var = T(0);
      for (std::size_t n = 0; n < N; ++n)
        for (std::size_t s = 0; s < S; ++s) {
          T d = vx[idx(n, f, s)] - mu;
          var += d * d;
        }
      var /= static_cast<T>(count);
      T is = T(1) / std::sqrt(var + eps);
      (*invstd)[f] = is;
      for (std::size_t n = 0; n < N; ++n)
        for (std::size_t s = 0; s < S; ++s) {
          T xh = (vx[idx(n, f, s)] - mu) * is;
          (*xhat)[idx(n, f, s)] = xh;
          out[idx(n, f, s)] = vg[f] * xh + vb[f];
        }
      if (running_mean) {
        T unbiased = var * static_cast<T>(count) / static_cast<T>(count - 1);
        (*running_mean)[f] = (T(1) - momentum) * (*running_mean)[f] + momentum * mu;
        (*running_var)[f] = (T(1) - momentum) * (*running_var)[f] + momentum * unbiased;
      }
    }
  } else {
    if (!running_mean) throw ContractError("batchnorm: eval mode requires running stats");
    for (std::size_t f = 0; f < F; ++f) {
      T is = T(1) / std::sqrt((*running_var)[f] + eps);
      (*invstd)[f] = is;
      for (std::size_t n = 0; n < N; ++n)
        for (std::size_t s = 0; s < S; ++s) {
          T xh = (vx[idx(n, f, s)] - (*running_mean)[f]) * is;
          (*xhat)[idx(n, f, s)] = xh;
          out[idx(n, f, s)] = vg[f] * xh + vb[f];
        }
    }
  }
  return t.emplace(std::move(out), {x, gamma, beta},
                   [x, gamma, beta, xhat, invstd, train, N, F, S](Tape<T>& tp, Var self) {
    const Tensor<T>& g = tp.grad(self);
    const Tensor<T>& vg2 = tp.value(gamma);
    std::size_t count = N * S;
    auto idx = [&](std::size_t n, std::size_t f, std::size_t s) { return (n * F + f) * S + s; };
    for (std::size_t f = 0; f < F; ++f) {
      T sum_g = T(0), sum_gx = T(0);
      for (std::size_t n = 0; n < N; ++n)
        for (std::size_t s = 0; s < S; ++s) {
          sum_g += g[idx(n, f, s)];
          sum_gx += g[idx(n, f, s)] * (*xhat)[idx(n, f, s)];
        }
      if (tp.needs_grad(gamma)) tp.grad_buffer(gamma)[f] += sum_gx;
      if (tp.needs_grad(beta)) tp.grad_buffer(beta)[f] += sum_g;
      if (tp.needs_grad(x)) {
        Tensor<T>& gx = tp.grad_buffer(x);
        T a = vg2[f] * (*invstd)[f];
        if (train) {
          T mg = sum_g / static_cast<T>(count);
          T mgx = sum_gx / static_cast<T>(count);
          for (std::size_t n = 0; n < N; ++n)
            for (std::size_t s = 0; s < S; ++s)
              gx[idx(n, f, s)] +=
                  a * (g[idx(n, f, s)] - mg - (*xhat)[idx(n, f, s)] * mgx);
        } else {
          for (std::size_t n = 0; n < N; ++n)
            for (std::size_t s = 0; s < S; ++s) gx[idx(n, f, s)] += a * g[idx(n, f, s)];
        }
      }
    }
  });
}

// Inverted dropout: train mode zeroes with probability `rate` and scales
// survivors by 1/(1-rate); eval mode is exactly the identity.
template <class T>
Var dropout(Tape<T>& t, Var x, T rate, bool train, Rng& rng) {
  if (rate < T(0) || rate >= T(1)) throw ContractError("dropout: rate must be in [0,1)");
  if (!train || rate == T(0)) {
    Tensor<T> out = t.value(x);
    return t.emplace(std::move(out), {x}, [x](Tape<T>& tp, Var self) {
      const Tensor<T>& g = tp.grad(self);
      Tensor<T>& gx = tp.grad_buffer(x);
      for (std::size_t i = 0; i < g.numel(); ++i) gx[i] += g[i];
    });
  }
  T keep_inv = T(1) / (T(1) - rate);
  Tensor<T> out = t.value(x);
  auto mask = std::make_shared<std::vector<char>>(out.numel());
  for (std::size_t i = 0; i < out.numel(); ++i) {
    bool keep = rng.uniform() >= static_cast<double>(rate);
    (*mask)[i] = keep;
    out[i] = keep ? out[i] * keep_inv : T(0);
  }
  return t.emplace(std::move(out), {x}, [x, mask, keep_inv](Tape<T>& tp, Var self) {
    const Tensor<T>& g = tp.grad(self);
    Tensor<T>& gx = tp.grad_buffer(x);
    for (std::size_t i = 0; i < g.numel(); ++i)
      if ((*mask)[i]) gx[i] += g[i] * keep_inv;
  });
}

// Contiguous row slice of a 2D tensor.
template <class T>
Var slice_rows(Tape<T>& t, Var x, std::size_t start, std::size_t count) {
  const Tensor<T>& vx = t.value(x);
  if (vx.ndim() != 2) throw ShapeError("slice_rows: expected 2D, got " + shape_str(vx.shape()));
  if (start + count > vx.dim(0) || count == 0)
    throw ContractError("slice_rows: range out of bounds");
  std::size_t K = vx.dim(1);
  Tensor<T> out({count, K});
  for (std::size_t i = 0; i < count * K; ++i) out[i] = vx[start * K + i];
  return t.emplace(std::move(out), {x}, [x, start, K](Tape<T>& tp, Var self) {
    const Tensor<T>& g = tp.grad(self);
    Tensor<T>& gx = tp.grad_buffer(x);
    for (std::size_t i = 0; i < g.numel(); ++i) gx[start * K + i] += g[i];
  });
}

// Stacks 1D vectors of equal length into a [n, K] matrix.
template <class T>
Var stack_rows(Tape<T>& t, const std::vector<Var>& rows) {
  if (rows.empty()) throw ContractError("stack_rows: empty input");
  std::size_t K = t.value(rows[0]).numel();
  Tensor<T> out({rows.size(), K});
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const Tensor<T>& v = t.value(rows[r]);
    if (v.numel() != K) throw ShapeError("stack_rows: ragged row lengths");
    for (std::size_t k = 0; k < K; ++k) out[r * K + k] = v[k];
  }
  return t.emplace(std::move(out), rows, [rows, K](Tape<T>& tp, Var self) {
    const Tensor<T>& g = tp.grad(self);
    for (std::size_t r = 0; r < rows.size(); ++r) {
      if (!tp.needs_grad(rows[r])) continue;
      Tensor<T>& gr = tp.grad_buffer(rows[r]);
      for (std::size_t k = 0; k < K; ++k) gr[k] += g[r * K + k];
    }
  });
}

enum class Reduce { kMax, kAvg, kMin };

// Reduces a [N,K] matrix over axis 0 to a [K] vector. Max/min route the
// gradient to the first extremal element.
template <class T>
Var reduce_rows(Tape<T>& t, Var x, Reduce kind) {
  const Tensor<T>& vx = t.value(x);
  if (vx.ndim() != 2) throw ShapeError("reduce_rows: expected 2D, got " + shape_str(vx.shape()));
  std::size_t N = vx.dim(0), K = vx.dim(1);
  Tensor<T> out({K});
  auto arg = std::make_shared<std::vector<std::size_t>>();
  if (kind == Reduce::kAvg) {
    // Summing in value order makes the average bit-identical under any row
    // permutation (the group pooling invariance is exact, not approximate).
    T inv = T(1) / static_cast<T>(N);
    std::vector<T> column(N);
    for (std::size_t k = 0; k < K; ++k) {
      for (std::size_t n = 0; n < N; ++n) column[n] = vx[n * K + k];
      std::sort(column.begin(), column.end());
      T s = T(0);
      for (T v : column) s += v;
      out[k] = s * inv;
    }
  } else {
    arg->resize(K);
    for (std::size_t k = 0; k < K; ++k) {
      std::size_t best_n = 0;
      T best = vx[k];
      for (std::size_t n = 1; n < N; ++n) {
        T v = vx[n * K + k];
        if (kind == Reduce::kMax ? v > best : v < best) {
          best = v;
          best_n = n;
        }
      }
      out[k] = best;
      (*arg)[k] = best_n;
    }
  }
  return t.emplace(std::move(out), {x}, [x, kind, arg, N, K](Tape<T>& tp, Var self) {
    const Tensor<T>& g = tp.grad(self);
    Tensor<T>& gx = tp.grad_buffer(x);
    if (kind == Reduce::kAvg) {
      T inv = T(1) / static_cast<T>(N);
      for (std::size_t k = 0; k < K; ++k) {
        T gv = g[k] * inv;
        for (std::size_t n = 0; n < N; ++n) gx[n * K + k] += gv;
      }
    } else {
      for (std::size_t k = 0; k < K; ++k) gx[(*arg)[k] * K + k] += g[k];
    }
  });
}

// Scales each row of a [N,K] matrix to unit L2 norm.
template <class T>
Var row_l2_normalize(Tape<T>& t, Var x, T floor = T(1e-12)) {
  const Tensor<T>& vx = t.value(x);
  if (vx.ndim() != 2)
    throw ShapeError("row_l2_normalize: expected 2D, got " + shape_str(vx.shape()));
  std::size_t N = vx.dim(0), K = vx.dim(1);
  Tensor<T> out(vx.shape());
  auto norms = std::make_shared<std::vector<T>>(N);
  for (std::size_t n = 0; n < N; ++n) {
    T s = T(0);
    for (std::size_t k = 0; k < K; ++k) s += vx[n * K + k] * vx[n * K + k];
    T r = std::sqrt(s);
    if (r <= floor)
      throw DegenerateError("row_l2_normalize: row " + std::to_string(n) +
                            " has near-zero norm");
    (*norms)[n] = r;
    for (std::size_t k = 0; k < K; ++k) out[n * K + k] = vx[n * K + k] / r;
  }
  return t.emplace(std::move(out), {x}, [x, norms, N, K](Tape<T>& tp, Var self) {
    const Tensor<T>& g = tp.grad(self);
    const Tensor<T>& y = tp.value(self);
    Tensor<T>& gx = tp.grad_buffer(x);
    for (std::size_t n = 0; n < N; ++n) {
      T dot = T(0);
      for (std::size_t k = 0; k < K; ++k) dot += g[n * K + k] * y[n * K + k];
      T inv = T(1) / (*norms)[n];
      for (std::size_t k = 0; k < K; ++k)
        gx[n * K + k] += (g[n * K + k] - y[n * K + k] * dot) * inv;
    }
  });
}

// Mean softmax cross-entropy over rows of a logit matrix, with log-sum-exp
// stabilization. Targets are class indices.
template <class T>
Var cross_entropy_mean(Tape<T>& t, Var logits, const std::vector<int>& targets) {
  const Tensor<T>& vx = t.value(logits);
  if (vx.ndim() != 2)
    throw ShapeError("cross_entropy_mean: expected 2D logits, got " + shape_str(vx.shape()));
  std::size_t N = vx.dim(0), K = vx.dim(1);
  if (targets.size() != N)
    throw ContractError("cross_entropy_mean: target count " + std::to_string(targets.size()) +
                        " != rows " + std::to_string(N));
  auto probs = std::make_shared<Tensor<T>>(vx.shape());
  T loss = T(0);
  for (std::size_t n = 0; n < N; ++n) {
    int tgt = targets[n];
    if (tgt < 0 || static_cast<std::size_t>(tgt) >= K)
      throw ContractError("cross_entropy_mean: target index out of range");
    T mx = vx[n * K];
    for (std::size_t k = 1; k < K; ++k) mx = std::max(mx, vx[n * K + k]);
    T z = T(0);
    for (std::size_t k = 0; k < K; ++k) z += std::exp(vx[n * K + k] - mx);
    T lse = mx + std::log(z);
    loss += lse - vx[n * K + tgt];
    for (std::size_t k = 0; k < K; ++k)
      (*probs)[n * K + k] = std::exp(vx[n * K + k] - mx) / z;
  }
  loss /= static_cast<T>(N);
  auto targets_copy = std::make_shared<std::vector<int>>(targets);
  return t.emplace(Tensor<T>({1}, {loss}), {logits},
                   [logits, probs, targets_copy, N, K](Tape<T>& tp, Var self) {
    T g = tp.grad(self)[0] / static_cast<T>(N);
    Tensor<T>& gx = tp.grad_buffer(logits);
    for (std::size_t n = 0; n < N; ++n) {
      for (std::size_t k = 0; k < K; ++k) gx[n * K + k] += g * (*probs)[n * K + k];
      gx[n * K + (*targets_copy)[n]] -= g;
    }
  });
}

}  // namespace ops
}  // namespace sgmc
