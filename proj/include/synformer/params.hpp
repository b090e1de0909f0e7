#pragma once

#include <memory>
#include <string>
#include <vector>

#include "synformer/tensor.hpp"

namespace synformer {

// Named tensor registered for optimization. Frozen parameters (trainable=false,
// e.g. the pretrained word-vector table) never receive optimizer updates.
template <typename S>
struct Parameter {
  std::string name;
  Tensor<S> value;
  Tensor<S> grad;
  bool trainable = true;

  void zero_grad() {
    grad.shape = value.shape;
    grad.data.assign(value.data.size(), S(0));
  }
};

// Owns parameters in registration order; order is the serialization and
// optimizer-state order, so it must be deterministic per configuration.
template <typename S>
class ParamStore {
 public:
  Parameter<S>& add(const std::string& name, Tensor<S> init, bool trainable = true) {
    auto p = std::make_unique<Parameter<S>>();
    p->name = name;
    p->value = std::move(init);
    p->trainable = trainable;
    p->zero_grad();
    store_.push_back(std::move(p));
    return *store_.back();
  }

  size_t size() const { return store_.size(); }
  Parameter<S>& at(size_t i) { return *store_[i]; }
  const Parameter<S>& at(size_t i) const { return *store_[i]; }

  Parameter<S>* find(const std::string& name) {
    for (auto& p : store_)
      if (p->name == name) return p.get();
    return nullptr;
  }

  void zero_grads() {
    for (auto& p : store_) p->zero_grad();
  }

  std::vector<Parameter<S>*> all() {
    std::vector<Parameter<S>*> out;
    out.reserve(store_.size());
    for (auto& p : store_) out.push_back(p.get());
    return out;
  }

 private:
  std::vector<std::unique_ptr<Parameter<S>>> store_;
};

template <typename S>
Tensor<S> init_uniform(int r, int c, Rng& rng, double lo, double hi) {
  Tensor<S> t(r, c);
  for (auto& v : t.data) v = static_cast<S>(uniform_in(rng, lo, hi));
  return t;
}

// Glorot/Xavier uniform for weight matrices laid out (fan_in x fan_out).
template <typename S>
Tensor<S> init_xavier(int fan_in, int fan_out, Rng& rng) {
  double a = std::sqrt(6.0 / (fan_in + fan_out));
  return init_uniform<S>(fan_in, fan_out, rng, -a, a);
}

template <typename S>
Tensor<S> init_ones(int r, int c) {
  return Tensor<S>::full(r, c, S(1));
}

}  // namespace synformer
