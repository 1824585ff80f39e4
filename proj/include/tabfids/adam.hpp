#pragma once

#include <cmath>
#include <cstdint>

#include "tabfids/error.hpp"
#include "tabfids/network.hpp"

namespace tabfids {

struct AdamState {
  BlockedWeights m;
  BlockedWeights v;
  std::uint64_t t = 0;
  double lr = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  static AdamState for_weights(const BlockedWeights& w, double lr = 0.001) {
    AdamState s;
    s.m = w.zeros_like();
    s.v = w.zeros_like();
    s.lr = lr;
    return s;
  }
};

/// One bias-corrected Adam update, applied in place.
inline void adam_step(BlockedWeights& w, const BlockedWeights& grads,
                      AdamState& state) {
  if (!w.compatible(grads) || !w.compatible(state.m) ||
      !w.compatible(state.v)) {
    throw ShapeError("adam_step: weights, gradients and moments differ in shape");
  }
  state.t += 1;
  const double t = static_cast<double>(state.t);
  const double c1 = 1.0 - std::pow(state.beta1, t);
  const double c2 = 1.0 - std::pow(state.beta2, t);
  for (std::size_t b = 0; b < w.block_count(); ++b) {
    auto& wb = w.blocks()[b].params;
    auto& mb = state.m.blocks()[b].params;
    auto& vb = state.v.blocks()[b].params;
    const auto& gb = grads.blocks()[b].params;
    for (std::size_t i = 0; i < wb.size(); ++i) {
      auto wd = wb[i].data();
      auto md = mb[i].data();
      auto vd = vb[i].data();
      auto gd = gb[i].data();
      for (std::size_t j = 0; j < wd.size(); ++j) {
        const double g = gd[j];
        md[j] = state.beta1 * md[j] + (1.0 - state.beta1) * g;
        vd[j] = state.beta2 * vd[j] + (1.0 - state.beta2) * g * g;
        const double m_hat = md[j] / c1;
        const double v_hat = vd[j] / c2;
        wd[j] -= state.lr * m_hat / (std::sqrt(v_hat) + state.eps);
      }
    }
  }
}

}  // namespace tabfids
