#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "synformer/params.hpp"

namespace synformer {

// Central finite differences against analytic gradients. 64-bit only: float
// loses too many digits for the h^2 error term to show through.
struct GradCheckResult {
  int checked = 0;
  int failed = 0;
  double max_rel_err = 0.0;
  std::string worst;  // "param[idx]" of the worst coordinate
};

// loss_fn(need_grad): runs a full forward pass, returns the scalar loss, and if
// need_grad also runs backward so .grad of every parameter is populated. The
// caller's closure must zero grads itself before the backward pass.
//
// Coordinates are sampled per-parameter: up to per_param of them, chosen with
// the supplied rng so repeated runs cover the same set.
inline GradCheckResult check_gradients(ParamStore<double>& store,
                                       const std::function<double(bool)>& loss_fn,
                                       Rng& rng, int per_param = 8, double h = 1e-5,
                                       double tol = 1e-4) {
  GradCheckResult res;
  loss_fn(true);  // populate analytic grads once

  // Snapshot analytic grads; the perturbed forward passes must not disturb them.
  std::vector<std::vector<double>> analytic;
  for (size_t p = 0; p < store.size(); ++p) analytic.push_back(store.at(p).grad.data);

  for (size_t p = 0; p < store.size(); ++p) {
    Parameter<double>& par = store.at(p);
    if (!par.trainable) continue;
    size_t n = par.value.data.size();
    std::vector<size_t> coords;
    if (n <= static_cast<size_t>(per_param)) {
      for (size_t k = 0; k < n; ++k) coords.push_back(k);
    } else {
      for (int k = 0; k < per_param; ++k)
        coords.push_back(static_cast<size_t>(uniform_int(rng, static_cast<int>(n))));
      std::sort(coords.begin(), coords.end());
      coords.erase(std::unique(coords.begin(), coords.end()), coords.end());
    }
    for (size_t k : coords) {
      double orig = par.value.data[k];
      par.value.data[k] = orig + h;
      double lp = loss_fn(false);
      par.value.data[k] = orig - h;
      double lm = loss_fn(false);
      par.value.data[k] = orig;
      double numeric = (lp - lm) / (2.0 * h);
      double ana = analytic[p][k];
      double rel = std::abs(ana - numeric) /
                   std::max({std::abs(ana), std::abs(numeric), 1e-6});
      ++res.checked;
      if (rel > res.max_rel_err) {
        res.max_rel_err = rel;
        res.worst = par.name + "[" + std::to_string(k) + "]";
      }
      if (rel > tol) ++res.failed;
    }
  }
  return res;
}

}  // namespace synformer
