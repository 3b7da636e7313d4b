// Copyright (c) 2026 the dvpo authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "dvpo/common/rng.hpp"
#include "dvpo/numkit/param_set.hpp"
#include "dvpo/numkit/tape.hpp"

namespace dvpo::numkit {

// One randomized reverse-mode-vs-central-difference comparison for a single
// registered op. Inputs with gradient kinks (clip, min, relu) are sampled
// with a margin so the finite-difference probe stays on one branch.
struct OpGradientCheck {
  std::string name;
  std::function<double(Rng&)> maxRelativeError;
};

// The registry covers every differentiable op the tape exposes. New tape ops
// must be registered here; the op-set hash feeds checkpoint headers so stored
// parameters are never silently reused across a semantics change.
const std::vector<OpGradientCheck>& opGradientChecks();

std::uint64_t opSetHash();

// max_i |a_i - b_i| / max(1e-6, |a_i|, |b_i|) over all gradient coordinates.
double maxRelativeError(const GradientRecord& a, const GradientRecord& b);

// Convenience for ad-hoc checks: compares Tape::backward against
// finiteDiffGradient for an arbitrary scalar-loss builder.
double gradientCheck(const std::function<NodeId(Tape&, const ParamSet&)>& buildLoss,
                     const ParamSet& params, double h = 1e-5);

}  // namespace dvpo::numkit
