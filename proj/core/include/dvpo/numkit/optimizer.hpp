// Copyright (c) 2026 the dvpo authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <vector>

#include "dvpo/numkit/param_set.hpp"

namespace dvpo::numkit {

struct OptimizerConfig {
  double learningRate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

// Adam state. Moment accumulators are allocated lazily on the first step and
// keyed by parameter order, so the same state must always be used with the
// same ParamSet layout.
struct OptimizerState {
  OptimizerConfig config;
  std::uint64_t step = 0;
  std::vector<ParamSet::Entry> firstMoment;
  std::vector<ParamSet::Entry> secondMoment;
};

// One Adam update, in place. Deterministic: identical (params, grads, state)
// always produce bit-identical results. Throws ShapeError when the gradient
// record does not line up with the parameter set.
void optimizerStep(ParamSet& params, const GradientRecord& grads, OptimizerState& state);

}  // namespace dvpo::numkit
