// Copyright (c) 2026 the dvpo authors
// SPDX-License-Identifier: Apache-2.0
#include "dvpo/numkit/optimizer.hpp"

#include <cmath>

namespace dvpo::numkit {

void optimizerStep(ParamSet& params, const GradientRecord& grads, OptimizerState& state) {
  auto& entries = params.entries();
  if (grads.grads.size() != entries.size()) {
    throw ShapeError("optimizerStep: gradient count does not match parameter count");
  }
  if (state.firstMoment.empty()) {
    for (const auto& e : entries) {
      state.firstMoment.push_back({e.name, RealArray::zeros(e.value.shape())});
      state.secondMoment.push_back({e.name, RealArray::zeros(e.value.shape())});
    }
  }
  if (state.firstMoment.size() != entries.size()) {
    throw ShapeError("optimizerStep: optimizer state does not match parameter set");
  }

  state.step += 1;
  const OptimizerConfig& c = state.config;
  const double biasCorr1 = 1.0 - std::pow(c.beta1, static_cast<double>(state.step));
  const double biasCorr2 = 1.0 - std::pow(c.beta2, static_cast<double>(state.step));

  for (std::size_t p = 0; p < entries.size(); ++p) {
    auto& param = entries[p].value;
    const auto& gEntry = grads.grads[p];
    if (gEntry.name != entries[p].name || !gEntry.value.sameShape(param)) {
      throw ShapeError("optimizerStep: gradient '" + gEntry.name +
                       "' does not match parameter '" + entries[p].name + "'");
    }
    auto& m = state.firstMoment[p].value;
    auto& v = state.secondMoment[p].value;
    const auto& g = gEntry.value;
    for (std::size_t i = 0; i < param.size(); ++i) {
      m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * g[i];
      v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * g[i] * g[i];
      const double mHat = m[i] / biasCorr1;
      const double vHat = v[i] / biasCorr2;
      param[i] -= c.learningRate * mHat / (std::sqrt(vHat) + c.epsilon);
    }
    param.requireFinite("optimizerStep update of '" + entries[p].name + "'");
  }
}

}  // namespace dvpo::numkit
