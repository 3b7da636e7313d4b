// Copyright (c) 2026 the dvpo authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <vector>

#include "dvpo/common/error.hpp"
#include "dvpo/env/vocab.hpp"

namespace dvpo::env {

// Universal rollout record: a prompt, the generated response, the behavior
// policy's per-token log-probabilities, and the reward sequence. Token tasks
// use the zero-intermediate convention (all token rewards zero except the
// final one, which carries the sentence-level reward); tabular bridges may
// carry dense per-step rewards.
struct Episode {
  TokenSeq prompt;
  TokenSeq response;
  std::vector<double> behaviorLogProbs;
  std::vector<double> tokenRewards;
  double finalReward = 0.0;

  std::size_t length() const { return response.size(); }

  void validate() const {
    if (response.empty()) throw DataError("Episode: response must be non-empty");
    if (behaviorLogProbs.size() != response.size()) {
      throw DataError("Episode: one behavior log-prob per response token required");
    }
    if (tokenRewards.size() != response.size()) {
      throw DataError("Episode: one token reward per response token required");
    }
  }

  // Builds a token-task episode: reward lands on the final step only.
  static Episode terminalReward(TokenSeq prompt, TokenSeq response,
                                std::vector<double> logProbs, double reward) {
    Episode ep;
    ep.prompt = std::move(prompt);
    ep.response = std::move(response);
    ep.behaviorLogProbs = std::move(logProbs);
    ep.tokenRewards.assign(ep.response.size(), 0.0);
    if (ep.tokenRewards.empty()) throw DataError("Episode: response must be non-empty");
    ep.tokenRewards.back() = reward;
    ep.finalReward = reward;
    ep.validate();
    return ep;
  }
};

}  // namespace dvpo::env
