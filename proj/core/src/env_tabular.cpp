// Copyright (c) 2026 the dvpo authors
// SPDX-License-Identifier: Apache-2.0
#include "dvpo/env/tabular.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace dvpo::env {

void TabularMdp::validate() const {
  if (stateCount <= 0 || actionCount <= 0) {
    throw ConfigError("TabularMdp: state and action counts must be positive");
  }
  const std::size_t table = static_cast<std::size_t>(stateCount) * actionCount;
  if (next.size() != table || reward.size() != table ||
      terminal.size() != static_cast<std::size_t>(stateCount)) {
    throw ConfigError("TabularMdp: table sizes do not match state/action counts");
  }
  if (initialState < 0 || initialState >= stateCount) {
    throw ConfigError("TabularMdp: initial state out of range");
  }
  for (int s : next) {
    if (s < 0 || s >= stateCount) throw ConfigError("TabularMdp: transition out of range");
  }
  if (discount < 0.0 || discount > 1.0) {
    throw ConfigError("TabularMdp: discount must lie in [0, 1]");
  }
  if (horizon <= 0) throw ConfigError("TabularMdp: horizon must be positive");
}

PolicyTable uniformPolicy(const TabularMdp& mdp) {
  return PolicyTable(static_cast<std::size_t>(mdp.stateCount) * mdp.actionCount,
                     1.0 / mdp.actionCount);
}

namespace {

// One Bellman backup for (s, a); `pi == nullptr` selects the max operator.
double backup(const TabularMdp& mdp, const std::vector<double>& q, const PolicyTable* pi,
              int s, int a) {
  const int sn = mdp.transition(s, a);
  double continuation = 0.0;
  if (!mdp.terminal[static_cast<std::size_t>(sn)]) {
    if (pi == nullptr) {
      double best = -std::numeric_limits<double>::infinity();
      for (int an = 0; an < mdp.actionCount; ++an) {
        best = std::max(best, q[static_cast<std::size_t>(sn) * mdp.actionCount + an]);
      }
      continuation = best;
    } else {
      for (int an = 0; an < mdp.actionCount; ++an) {
        continuation += (*pi)[static_cast<std::size_t>(sn) * mdp.actionCount + an] *
                        q[static_cast<std::size_t>(sn) * mdp.actionCount + an];
      }
    }
  }
  return mdp.rewardAt(s, a) + mdp.discount * continuation;
}

QTable iterate(const TabularMdp& mdp, const PolicyTable* pi, double tol, int maxSweeps) {
  mdp.validate();
  if (pi != nullptr &&
      pi->size() != static_cast<std::size_t>(mdp.stateCount) * mdp.actionCount) {
    throw ConfigError("valueIteration: policy table size mismatch");
  }
  QTable result;
  result.q.assign(static_cast<std::size_t>(mdp.stateCount) * mdp.actionCount, 0.0);
  for (int sweep = 0; sweep < maxSweeps; ++sweep) {
    double residual = 0.0;
    for (int s = 0; s < mdp.stateCount; ++s) {
      if (mdp.terminal[static_cast<std::size_t>(s)]) continue;
      for (int a = 0; a < mdp.actionCount; ++a) {
        const double updated = backup(mdp, result.q, pi, s, a);
        const std::size_t idx = static_cast<std::size_t>(s) * mdp.actionCount + a;
        residual = std::max(residual, std::abs(updated - result.q[idx]));
        result.q[idx] = updated;
      }
    }
    result.sweeps = sweep + 1;
    result.residual = residual;
    if (residual <= tol) return result;
  }
  throw NumericError("valueIteration: no fixed point within sweep cap (non-terminating "
                     "MDP with discount 1?)");
}

}  // namespace

QTable valueIteration(const TabularMdp& mdp, double tol, int maxSweeps) {
  return iterate(mdp, nullptr, tol, maxSweeps);
}

QTable valueIteration(const TabularMdp& mdp, const PolicyTable& pi, double tol,
                      int maxSweeps) {
  return iterate(mdp, &pi, tol, maxSweeps);
}

double bellmanResidual(const TabularMdp& mdp, const std::vector<double>& q,
                       const PolicyTable* pi) {
  double residual = 0.0;
  for (int s = 0; s < mdp.stateCount; ++s) {
    if (mdp.terminal[static_cast<std::size_t>(s)]) continue;
    for (int a = 0; a < mdp.actionCount; ++a) {
      const std::size_t idx = static_cast<std::size_t>(s) * mdp.actionCount + a;
      residual = std::max(residual, std::abs(backup(mdp, q, pi, s, a) - q[idx]));
    }
  }
  return residual;
}

namespace {

void enumerate(const TabularMdp& mdp, int state, int depth, int horizon, std::size_t cap,
               TabularEpisode& partial, std::vector<TabularEpisode>& out) {
  if (mdp.terminal[static_cast<std::size_t>(state)]) {
    if (!partial.actions.empty()) {
      TabularEpisode ep = partial;
      double ret = 0.0;
      double weight = 1.0;
      for (double r : ep.rewards) {
        ret += weight * r;
        weight *= mdp.discount;
      }
      ep.discountedReturn = ret;
      if (out.size() >= cap) throw DataError("enumerateEpisodes: episode cap exceeded");
      out.push_back(std::move(ep));
    }
    return;
  }
  if (depth >= horizon) {
    throw DataError("enumerateEpisodes: trajectory exceeded the declared horizon");
  }
  for (int a = 0; a < mdp.actionCount; ++a) {
    partial.states.push_back(state);
    partial.actions.push_back(a);
    partial.rewards.push_back(mdp.rewardAt(state, a));
    enumerate(mdp, mdp.transition(state, a), depth + 1, horizon, cap, partial, out);
    partial.states.pop_back();
    partial.actions.pop_back();
    partial.rewards.pop_back();
  }
}

}  // namespace

std::vector<TabularEpisode> enumerateEpisodes(const TabularMdp& mdp, int horizon,
                                              std::size_t cap) {
  mdp.validate();
  std::vector<TabularEpisode> out;
  TabularEpisode partial;
  enumerate(mdp, mdp.initialState, 0, horizon, cap, partial, out);
  return out;
}

TabularMdp randomLayeredMdp(Rng& rng, int layers, int statesPerLayer, int actions,
                            double discount) {
  if (layers < 1 || statesPerLayer < 1 || actions < 1) {
    throw ConfigError("randomLayeredMdp: bad sizes");
  }
  TabularMdp mdp;
  mdp.actionCount = actions;
  mdp.discount = discount;
  mdp.horizon = layers + 1;
  // states: layer 0 holds the single initial state, layers 1..layers-1 each
  // hold statesPerLayer states, plus one absorbing terminal state at the end.
  mdp.stateCount = 1 + (layers - 1) * statesPerLayer + 1;
  const int terminalState = mdp.stateCount - 1;
  mdp.initialState = 0;
  mdp.terminal.assign(static_cast<std::size_t>(mdp.stateCount), false);
  mdp.terminal[static_cast<std::size_t>(terminalState)] = true;
  mdp.next.assign(static_cast<std::size_t>(mdp.stateCount) * actions, terminalState);
  mdp.reward.assign(static_cast<std::size_t>(mdp.stateCount) * actions, 0.0);

  auto layerBase = [&](int layer) { return layer == 0 ? 0 : 1 + (layer - 1) * statesPerLayer; };
  auto layerSize = [&](int layer) { return layer == 0 ? 1 : statesPerLayer; };

  for (int layer = 0; layer < layers; ++layer) {
    for (int i = 0; i < layerSize(layer); ++i) {
      const int s = layerBase(layer) + i;
      for (int a = 0; a < actions; ++a) {
        const std::size_t idx = static_cast<std::size_t>(s) * actions + a;
        mdp.reward[idx] = rng.uniform(-1.0, 1.0);
        if (layer + 1 < layers) {
          mdp.next[idx] = layerBase(layer + 1) + rng.uniformInt(0, statesPerLayer - 1);
        } else {
          mdp.next[idx] = terminalState;
        }
      }
    }
  }
  mdp.validate();
  return mdp;
}

TabularTokenBridge::TabularTokenBridge(const TabularMdp& mdp) : stateCount_(mdp.stateCount) {
  vocab.size = 4 + mdp.stateCount + mdp.actionCount;
  vocab.validate();
}

Episode TabularTokenBridge::toEpisode(const TabularMdp& mdp,
                                      const TabularEpisode& ep) const {
  if (ep.actions.empty()) throw DataError("toEpisode: empty tabular episode");
  Episode out;
  out.prompt = {vocab.bos, stateToken(ep.states.front()), vocab.sep};
  for (int a : ep.actions) out.response.push_back(actionToken(a));
  // Enumerated behavior is the uniform policy.
  out.behaviorLogProbs.assign(ep.actions.size(),
                              -std::log(static_cast<double>(mdp.actionCount)));
  out.tokenRewards = ep.rewards;
  out.finalReward = ep.rewards.back();
  out.validate();
  return out;
}

}  // namespace dvpo::env
