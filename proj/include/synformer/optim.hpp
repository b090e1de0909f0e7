#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "synformer/common.hpp"
#include "synformer/params.hpp"

namespace synformer {

inline constexpr double kPi = 3.141592653589793238462643383279502884;

// Linear warmup from 0 to peak over [0, warmup], then cosine decay to 0 at
// total. The boundary step itself takes the cosine branch, whose cos(0) = 1
// makes lr_at(warmup) == peak exactly, so the schedule is continuous there.
inline double lr_at(long long step, long long warmup, long long total, double peak) {
  if (warmup <= 0 || warmup >= total)
    throw ConfigError("schedule requires 0 < warmup steps < total steps");
  if (step <= 0) return 0.0;
  if (step > total) return 0.0;
  if (step < warmup) return peak * static_cast<double>(step) / static_cast<double>(warmup);
  double frac = static_cast<double>(step - warmup) / static_cast<double>(total - warmup);
  return peak * 0.5 * (1.0 + std::cos(kPi * frac));
}

// Default warmup length: roughly a fifth of the run, clamped so the schedule
// invariant 0 < warmup < total stays satisfiable whenever total allows it.
inline long long default_warmup(long long total) {
  long long w = std::llround(0.2 * static_cast<double>(total));
  if (w < 1) w = 1;
  if (w > total - 1) w = total - 1;
  return w;
}

// Rescales all trainable gradients so their global L2 norm is at most
// max_norm; returns the norm before clipping. No-op (besides the measurement)
// when the norm is already within bounds.
template <typename S>
double clip_gradients(ParamStore<S>& store, double max_norm) {
  double sq = 0.0;
  for (size_t i = 0; i < store.size(); ++i) {
    const Parameter<S>& p = store.at(i);
    if (!p.trainable) continue;
    for (S g : p.grad.data) sq += static_cast<double>(g) * static_cast<double>(g);
  }
  double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    S factor = static_cast<S>(max_norm / norm);
    for (size_t i = 0; i < store.size(); ++i) {
      Parameter<S>& p = store.at(i);
      if (!p.trainable) continue;
      for (S& g : p.grad.data) g *= factor;
    }
  }
  return norm;
}

// Adam with decoupled weight decay: the bias-corrected moment update first,
// then the shrink theta <- theta * (1 - lr * wd) applied to the result, never
// routed through the gradients. Frozen parameters are skipped entirely.
template <typename S>
class AdamW {
 public:
  double beta1 = 0.9, beta2 = 0.999, eps = 1e-7, weight_decay = 0.0;

  AdamW(ParamStore<S>& store, double wd = 0.0, double b1 = 0.9, double b2 = 0.999,
        double epsilon = 1e-7)
      : beta1(b1), beta2(b2), eps(epsilon), weight_decay(wd), store_(&store) {
    for (size_t i = 0; i < store.size(); ++i) {
      const Parameter<S>& p = store.at(i);
      m_.emplace_back(p.value.shape.empty() ? Tensor<double>()
                                            : Tensor<double>(p.value.rows(), p.value.cols()));
      v_.emplace_back(p.value.shape.empty() ? Tensor<double>()
                                            : Tensor<double>(p.value.rows(), p.value.cols()));
    }
  }

  long long steps() const { return step_; }

  void step(double lr) {
    ++step_;
    double bc1 = 1.0 - std::pow(beta1, static_cast<double>(step_));
    double bc2 = 1.0 - std::pow(beta2, static_cast<double>(step_));
    for (size_t i = 0; i < store_->size(); ++i) {
      Parameter<S>& p = store_->at(i);
      if (!p.trainable) continue;
      auto& m = m_[i].data;
      auto& v = v_[i].data;
      for (size_t k = 0; k < p.value.data.size(); ++k) {
        double g = static_cast<double>(p.grad.data[k]);
        if (!std::isfinite(g))
          throw NumericError("non-finite gradient in parameter '" + p.name + "'");
        m[k] = beta1 * m[k] + (1.0 - beta1) * g;
        v[k] = beta2 * v[k] + (1.0 - beta2) * g * g;
        double update = lr * (m[k] / bc1) / (std::sqrt(v[k] / bc2) + eps);
        double theta = static_cast<double>(p.value.data[k]) - update;
        p.value.data[k] = static_cast<S>(theta * (1.0 - lr * weight_decay));
      }
    }
  }

 private:
  ParamStore<S>* store_;
  std::vector<Tensor<double>> m_, v_;
  long long step_ = 0;
};

}  // namespace synformer
