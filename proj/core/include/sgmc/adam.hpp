#pragma once

#include <cmath>
#include <vector>

#include "sgmc/error.hpp"
#include "sgmc/params.hpp"
#include "sgmc/tensor.hpp"

namespace sgmc {

template <class T>
struct AdamConfig {
  T lr = T(1e-3);
  T beta1 = T(0.9);
  T beta2 = T(0.999);
  T epsilon = T(1e-8);
};

// Bias-corrected Adam over one or more parameter stores. Moments are kept in
// store entry order; `t` counts completed steps.
template <class T>
class AdamOptimizer {
 public:
  AdamOptimizer(std::vector<ParamStore<T>*> stores, AdamConfig<T> cfg)
      : stores_(std::move(stores)), cfg_(cfg) {
    if (cfg_.lr <= T(0)) throw ConfigError("adam: lr must be positive");
    if (cfg_.beta1 < T(0) || cfg_.beta1 >= T(1) || cfg_.beta2 < T(0) || cfg_.beta2 >= T(1))
      throw ConfigError("adam: betas must be in [0,1)");
    for (ParamStore<T>* s : stores_) {
      std::vector<Tensor<T>> m, v;
      for (const auto& e : s->entries()) {
        m.push_back(e.trainable ? Tensor<T>(e.value.shape()) : Tensor<T>());
        v.push_back(e.trainable ? Tensor<T>(e.value.shape()) : Tensor<T>());
      }
      m_.push_back(std::move(m));
      v_.push_back(std::move(v));
    }
  }

  // grads[i] aligns with stores[i]'s entries (empty tensors for buffers).
  void step(const std::vector<std::vector<Tensor<T>>>& grads) {
    if (grads.size() != stores_.size())
      throw ContractError("adam: gradient group count mismatch");
    ++t_;
    T bc1 = T(1) - std::pow(cfg_.beta1, static_cast<T>(t_));
    T bc2 = T(1) - std::pow(cfg_.beta2, static_cast<T>(t_));
    for (std::size_t s = 0; s < stores_.size(); ++s) {
      auto& entries = stores_[s]->entries();
      if (grads[s].size() != entries.size())
        throw ContractError("adam: gradient count mismatch for store " + std::to_string(s));
      for (std::size_t i = 0; i < entries.size(); ++i) {
        if (!entries[i].trainable) continue;
        const Tensor<T>& g = grads[s][i];
        Tensor<T>& p = entries[i].value;
        if (!g.same_shape(p))
          throw ShapeError("adam: gradient shape " + shape_str(g.shape()) +
                           " does not match parameter " + entries[i].name);
        Tensor<T>& m = m_[s][i];
        Tensor<T>& v = v_[s][i];
        for (std::size_t k = 0; k < p.numel(); ++k) {
          m[k] = cfg_.beta1 * m[k] + (T(1) - cfg_.beta1) * g[k];
          v[k] = cfg_.beta2 * v[k] + (T(1) - cfg_.beta2) * g[k] * g[k];
          T mhat = m[k] / bc1;
          T vhat = v[k] / bc2;
          p[k] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.epsilon);
        }
      }
    }
  }

  long step_count() const { return t_; }
  void set_step_count(long t) { t_ = t; }
  const AdamConfig<T>& config() const { return cfg_; }

  // Exposed for checkpoint/resume; indexed [store][entry].
  std::vector<std::vector<Tensor<T>>>& moments_m() { return m_; }
  std::vector<std::vector<Tensor<T>>>& moments_v() { return v_; }

 private:
  std::vector<ParamStore<T>*> stores_;
  AdamConfig<T> cfg_;
  std::vector<std::vector<Tensor<T>>> m_, v_;
  long t_ = 0;
};

}  // namespace sgmc
