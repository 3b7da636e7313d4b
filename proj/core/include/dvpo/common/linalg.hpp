// Copyright (c) 2026 the dvpo authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <vector>

namespace dvpo {

// Solves A x = b for dense row-major A (n x n) by Gaussian elimination with
// partial pivoting. Throws NumericError on a (numerically) singular system.
// Sized for the tabular MDP work in eval/: n stays well under a hundred.
std::vector<double> solveLinearSystem(std::vector<double> a, std::vector<double> b);

}  // namespace dvpo
