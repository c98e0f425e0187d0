#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "sgmc/error.hpp"
#include "sgmc/ops.hpp"
#include "sgmc/tape.hpp"
#include "sgmc/tensor.hpp"

namespace sgmc {

// Named parameter store. Trainable entries get gradients; buffers (batchnorm
// running statistics) are carried along and checkpointed but never updated by
// the optimizer. Insertion order is stable, which keeps the optimizer state
// and checkpoint layout deterministic.
template <class T>
class ParamStore {
 public:
  struct Entry {
    std::string name;
    Tensor<T> value;
    bool trainable;
  };

  std::size_t add(std::string name, Tensor<T> value, bool trainable = true) {
    if (index_.count(name)) throw ConfigError("duplicate parameter name: " + name);
    index_[name] = entries_.size();
    entries_.push_back({std::move(name), std::move(value), trainable});
    return entries_.size() - 1;
  }

  Tensor<T>& operator[](const std::string& name) {
    auto it = index_.find(name);
    if (it == index_.end()) throw ConfigError("unknown parameter: " + name);
    return entries_[it->second].value;
  }
  const Tensor<T>& operator[](const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw ConfigError("unknown parameter: " + name);
    return entries_[it->second].value;
  }
  bool contains(const std::string& name) const { return index_.count(name) != 0; }

  std::vector<Entry>& entries() { return entries_; }
  const std::vector<Entry>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }

  std::size_t count_values() const {
    std::size_t n = 0;
    for (const auto& e : entries_)
      if (e.trainable) n += e.value.numel();
    return n;
  }

 private:
  std::vector<Entry> entries_;
  std::unordered_map<std::string, std::size_t> index_;
};

// Tape handles for one forward pass over a store's trainable parameters.
template <class T>
class BoundParams {
 public:
  BoundParams(Tape<T>& tape, ParamStore<T>& store) : store_(&store) {
    vars_.resize(store.size(), -1);
    for (std::size_t i = 0; i < store.size(); ++i)
      if (store.entries()[i].trainable)
        vars_[i] = tape.leaf(store.entries()[i].value, true);
  }

  Var operator[](const std::string& name) const {
    for (std::size_t i = 0; i < store_->size(); ++i)
      if (store_->entries()[i].name == name) {
        if (vars_[i] < 0) throw ConfigError("parameter is not trainable: " + name);
        return vars_[i];
      }
    throw ConfigError("unknown parameter: " + name);
  }

  // Gradients in entry order; zero tensors for parameters the loss ignores.
  std::vector<Tensor<T>> gradients(Tape<T>& tape) const {
    std::vector<Tensor<T>> out;
    out.reserve(vars_.size());
    for (std::size_t i = 0; i < vars_.size(); ++i) {
      if (vars_[i] < 0) {
        out.emplace_back();
        continue;
      }
      const Tensor<T>& g = tape.grad(vars_[i]);
      if (g.numel() == 0)
        out.push_back(Tensor<T>(store_->entries()[i].value.shape()));
      else
        out.push_back(g);
    }
    return out;
  }

 private:
  ParamStore<T>* store_;
  std::vector<Var> vars_;
};

}  // namespace sgmc
