// Copyright (c) 2026 the dvpo authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <vector>

#include "dvpo/common/error.hpp"
#include "dvpo/common/rng.hpp"
#include "dvpo/env/episode.hpp"

namespace dvpo::env {

// Exact small MDP with deterministic transitions: the oracle substrate for
// value-equivalence and correctness checks. Terminal states end the episode;
// a declared horizon bounds every trajectory.
struct TabularMdp {
  int stateCount = 0;
  int actionCount = 0;
  int initialState = 0;
  std::vector<int> next;       // [s * actionCount + a] -> successor state
  std::vector<double> reward;  // [s * actionCount + a]
  std::vector<bool> terminal;  // per state
  double discount = 1.0;
  int horizon = 0;

  void validate() const;

  int transition(int s, int a) const { return next[static_cast<std::size_t>(s) * actionCount + a]; }
  double rewardAt(int s, int a) const { return reward[static_cast<std::size_t>(s) * actionCount + a]; }
};

// Row-stochastic action distribution, [stateCount x actionCount] row-major.
using PolicyTable = std::vector<double>;

PolicyTable uniformPolicy(const TabularMdp& mdp);

struct QTable {
  std::vector<double> q;  // [s * actionCount + a]; zero on terminal states
  int sweeps = 0;
  double residual = 0.0;

  double at(const TabularMdp& mdp, int s, int a) const {
    return q[static_cast<std::size_t>(s) * mdp.actionCount + a];
  }
};

// Bellman-optimality fixed point: Q(s,a) = r(s,a) + gamma * max_a' Q(s',a').
// Iterative sweeps until the residual drops below `tol`; throws NumericError
// if the cap is hit first (e.g. a non-terminating MDP with gamma = 1).
QTable valueIteration(const TabularMdp& mdp, double tol, int maxSweeps = 1000000);

// Policy-conditioned variant: Q(s,a) = r(s,a) + gamma * E_{a'~pi}[Q(s',a')].
QTable valueIteration(const TabularMdp& mdp, const PolicyTable& pi, double tol,
                      int maxSweeps = 1000000);

// Max over (s,a) of the Bellman residual for the given q table; pass nullptr
// for the optimality operator.
double bellmanResidual(const TabularMdp& mdp, const std::vector<double>& q,
                       const PolicyTable* pi);

struct TabularEpisode {
  std::vector<int> states;   // state before each action
  std::vector<int> actions;
  std::vector<double> rewards;
  double discountedReturn = 0.0;
};

// Complete, duplicate-free enumeration of every trajectory from the initial
// state. Throws DataError when the episode count would exceed `cap` or when a
// trajectory fails to terminate within `horizon`.
std::vector<TabularEpisode> enumerateEpisodes(const TabularMdp& mdp, int horizon,
                                              std::size_t cap);

// Random solvable MDP for property tests: every trajectory from the initial
// state terminates within the declared horizon (layered transitions).
TabularMdp randomLayeredMdp(Rng& rng, int layers, int statesPerLayer, int actions,
                            double discount);

// ---- token bridge ------------------------------------------------------------
//
// Maps tabular episodes onto token sequences so sequence models can be trained
// and checked against exact dynamic-programming values. The prompt encodes the
// initial state, the response is the action sequence, and token rewards carry
// the dense per-step rewards.
struct TabularTokenBridge {
  explicit TabularTokenBridge(const TabularMdp& mdp);

  Vocabulary vocab;
  int stateToken(int s) const { return vocab.payloadBegin() + s; }
  int actionToken(int a) const { return vocab.payloadBegin() + stateCount_ + a; }

  Episode toEpisode(const TabularMdp& mdp, const TabularEpisode& ep) const;

 private:
  int stateCount_ = 0;
};

}  // namespace dvpo::env
