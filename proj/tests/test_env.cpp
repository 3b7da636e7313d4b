// Copyright (c) 2026 the dvpo authors
// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <map>

#include "dvpo/env/episode.hpp"
#include "dvpo/env/tabular.hpp"
#include "dvpo/env/task.hpp"

using namespace dvpo;
using namespace dvpo::env;

namespace {

TokenTask makeTask(TaskKind kind, int lenMin = 3, int lenMax = 5) {
  TokenTask task;
  task.kind = kind;
  task.vocab.size = 12;
  task.promptPayloadMin = lenMin;
  task.promptPayloadMax = lenMax;
  task.maxResponseLen = 8;
  return task;
}

}  // namespace

TEST_CASE("samplePrompt is deterministic per seed and respects the length range") {
  TokenTask task = makeTask(TaskKind::Copy, 3, 3);
  Rng a(0), b(0);
  const TokenSeq p1 = samplePrompt(task, a);
  const TokenSeq p2 = samplePrompt(task, b);
  CHECK(p1 == p2);
  CHECK(p1.size() == 5);  // bos + 3 payload + sep
  CHECK(promptPayload(task, p1).size() == 3);
}

TEST_CASE("sort prompts contain only payload tokens") {
  TokenTask task = makeTask(TaskKind::Sort);
  Rng rng(11);
  for (int i = 0; i < 200; ++i) {
    const TokenSeq prompt = samplePrompt(task, rng);
    for (int tok : promptPayload(task, prompt)) {
      CHECK(tok >= task.vocab.payloadBegin());
      CHECK(tok < task.vocab.size);
      CHECK(!task.vocab.isReserved(tok));
    }
  }
}

TEST_CASE("prompt lengths are uniform over the declared range") {
  TokenTask task = makeTask(TaskKind::Copy, 3, 6);
  Rng rng(1234);
  std::map<std::size_t, int> counts;
  const int n = 10000;
  for (int i = 0; i < n; ++i) {
    counts[promptPayload(task, samplePrompt(task, rng)).size()] += 1;
  }
  CHECK(counts.size() == 4);
  for (const auto& [len, count] : counts) {
    CHECK(len >= 3);
    CHECK(len <= 6);
    const double pct = 100.0 * count / n;
    CHECK(pct == doctest::Approx(25.0).epsilon(0.2));  // within +-5 points
  }
}

TEST_CASE("groundTruthReward on the copy task") {
  TokenTask task = makeTask(TaskKind::Copy, 4, 4);
  Rng rng(5);
  const TokenSeq prompt = samplePrompt(task, rng);
  const TokenSeq payload = promptPayload(task, prompt);

  SUBCASE("exact match earns the maximum") {
    TokenSeq response = payload;
    response.push_back(task.vocab.eos);
    CHECK(groundTruthReward(task, prompt, response) == doctest::Approx(1.0));
  }
  SUBCASE("zero matching positions earns the minimum") {
    TokenSeq response;
    for (int tok : payload) {
      int other = task.vocab.payloadBegin();
      while (other == tok) ++other;
      response.push_back(other);
    }
    CHECK(groundTruthReward(task, prompt, response) == doctest::Approx(-1.0));
  }
  SUBCASE("partial credit is proportional to the longest correct prefix") {
    TokenSeq response = payload;
    int other = task.vocab.payloadBegin();
    while (other == payload[2]) ++other;
    response[2] = other;  // break at index 2: prefix of length 2 out of 4
    CHECK(groundTruthReward(task, prompt, response) == doctest::Approx(0.0));
  }
  SUBCASE("pure function: re-evaluation is identical") {
    TokenSeq response = payload;
    const double r1 = groundTruthReward(task, prompt, response);
    const double r2 = groundTruthReward(task, prompt, response);
    CHECK(r1 == r2);
  }
  SUBCASE("tokens outside the vocabulary are rejected") {
    TokenSeq response = payload;
    response[0] = task.vocab.size + 3;
    CHECK_THROWS_AS((void)groundTruthReward(task, prompt, response), DataError);
  }
}

TEST_CASE("sort task scores against an independent sorting oracle") {
  TokenTask task = makeTask(TaskKind::Sort, 5, 5);
  Rng rng(17);
  for (int round = 0; round < 50; ++round) {
    const TokenSeq prompt = samplePrompt(task, rng);
    // Insertion sort, written here so the oracle shares nothing with the task.
    TokenSeq sorted = promptPayload(task, prompt);
    for (std::size_t i = 1; i < sorted.size(); ++i) {
      int key = sorted[i];
      std::size_t j = i;
      while (j > 0 && sorted[j - 1] > key) {
        sorted[j] = sorted[j - 1];
        --j;
      }
      sorted[j] = key;
    }
    sorted.push_back(task.vocab.eos);
    CHECK(groundTruthReward(task, prompt, sorted) == doctest::Approx(1.0));
  }
}

TEST_CASE("parity-sum and pattern-complete targets") {
  SUBCASE("parity of the payload sum") {
    TokenTask task = makeTask(TaskKind::ParitySum, 3, 3);
    TokenSeq prompt = {task.vocab.bos, 5, 6, 7, task.vocab.sep};  // offsets 1,2,3 -> sum 6
    const TokenSeq target = targetResponse(task, prompt);
    REQUIRE(target.size() == 1);
    CHECK(target[0] == task.vocab.payloadBegin());  // even parity
  }
  SUBCASE("pattern continuation alternates") {
    TokenTask task = makeTask(TaskKind::PatternComplete, 4, 4);
    task.patternContinuation = 3;
    TokenSeq prompt = {task.vocab.bos, 4, 9, 4, 9, task.vocab.sep};
    const TokenSeq target = targetResponse(task, prompt);
    CHECK(target == TokenSeq{4, 9, 4});
  }
}

TEST_CASE("return-to-go collapses to discounted terminal reward") {
  // With zero intermediate rewards, the suffix sum at step t is
  // discount^(T-1-t) * finalReward.
  Episode ep = Episode::terminalReward({1, 5, 3}, {6, 7, 2}, {-1.0, -1.2, -0.3}, 0.8);
  const double gamma = 0.5;
  std::vector<double> suffix(ep.length());
  double acc = 0.0;
  for (std::size_t t = ep.length(); t-- > 0;) {
    acc = ep.tokenRewards[t] + gamma * acc;
    suffix[t] = acc;
  }
  for (std::size_t t = 0; t < ep.length(); ++t) {
    const double expected = std::pow(gamma, static_cast<double>(ep.length() - 1 - t)) * 0.8;
    CHECK(suffix[t] == doctest::Approx(expected).epsilon(1e-12));
  }
}

TEST_CASE("valueIteration fixed points") {
  SUBCASE("one step return with discount zero") {
    TabularMdp mdp;
    mdp.stateCount = 1;
    mdp.actionCount = 1;
    mdp.next = {0};
    mdp.reward = {1.0};
    mdp.terminal = {false};
    mdp.discount = 0.0;
    mdp.horizon = 1;
    const QTable q = valueIteration(mdp, 1e-12);
    CHECK(q.at(mdp, 0, 0) == doctest::Approx(1.0));
  }
  SUBCASE("self-loop geometric series") {
    TabularMdp mdp;
    mdp.stateCount = 1;
    mdp.actionCount = 1;
    mdp.next = {0};
    mdp.reward = {1.0};
    mdp.terminal = {false};
    mdp.discount = 0.5;
    mdp.horizon = 1;
    const QTable q = valueIteration(mdp, 1e-12);
    CHECK(q.at(mdp, 0, 0) == doctest::Approx(2.0).epsilon(1e-9));
  }
  SUBCASE("non-terminating MDP with discount 1 is rejected") {
    TabularMdp mdp;
    mdp.stateCount = 1;
    mdp.actionCount = 1;
    mdp.next = {0};
    mdp.reward = {1.0};
    mdp.terminal = {false};
    mdp.discount = 1.0;
    mdp.horizon = 1;
    CHECK_THROWS_AS((void)valueIteration(mdp, 1e-12, 10000), NumericError);
  }
  SUBCASE("five-state chain matches hand-unrolled returns") {
    // s0 -> s1 -> s2 -> s3 -> terminal, one action, rewards 0.3 -0.2 0.5 1.0
    TabularMdp mdp;
    mdp.stateCount = 5;
    mdp.actionCount = 1;
    mdp.next = {1, 2, 3, 4, 4};
    mdp.reward = {0.3, -0.2, 0.5, 1.0, 0.0};
    mdp.terminal = {false, false, false, false, true};
    mdp.discount = 0.9;
    mdp.horizon = 5;
    const QTable q = valueIteration(mdp, 1e-12);
    const double g = 0.9;
    CHECK(q.at(mdp, 3, 0) == doctest::Approx(1.0));
    CHECK(q.at(mdp, 2, 0) == doctest::Approx(0.5 + g * 1.0));
    CHECK(q.at(mdp, 1, 0) == doctest::Approx(-0.2 + g * (0.5 + g * 1.0)));
    CHECK(q.at(mdp, 0, 0) == doctest::Approx(0.3 + g * (-0.2 + g * (0.5 + g * 1.0))));
    CHECK(bellmanResidual(mdp, q.q, nullptr) <= 1e-12);
  }
}

TEST_CASE("policy-conditioned value iteration satisfies its Bellman equation") {
  Rng rng(23);
  const TabularMdp mdp = randomLayeredMdp(rng, 3, 2, 2, 0.9);
  const PolicyTable pi = uniformPolicy(mdp);
  const QTable q = valueIteration(mdp, pi, 1e-12);
  CHECK(bellmanResidual(mdp, q.q, &pi) <= 1e-12);
  CHECK(q.residual <= 1e-12);
}

TEST_CASE("enumerateEpisodes") {
  Rng rng(31);
  const TabularMdp mdp = randomLayeredMdp(rng, 3, 2, 2, 1.0);

  SUBCASE("two actions over three layers give exactly eight episodes") {
    const auto episodes = enumerateEpisodes(mdp, mdp.horizon, 100);
    CHECK(episodes.size() == 8);
    for (const auto& ep : episodes) CHECK(ep.actions.size() == 3);
    // Duplicate-free: action sequences are distinct.
    for (std::size_t i = 0; i < episodes.size(); ++i) {
      for (std::size_t j = i + 1; j < episodes.size(); ++j) {
        CHECK(episodes[i].actions != episodes[j].actions);
      }
    }
  }

  SUBCASE("uniform-policy mean return equals the value-iteration start value") {
    const auto episodes = enumerateEpisodes(mdp, mdp.horizon, 100);
    double mean = 0.0;
    for (const auto& ep : episodes) mean += ep.discountedReturn;
    mean /= static_cast<double>(episodes.size());

    const PolicyTable pi = uniformPolicy(mdp);
    const QTable q = valueIteration(mdp, pi, 1e-13);
    double v0 = 0.0;
    for (int a = 0; a < mdp.actionCount; ++a) {
      v0 += pi[static_cast<std::size_t>(mdp.initialState) * mdp.actionCount + a] *
            q.at(mdp, mdp.initialState, a);
    }
    CHECK(mean == doctest::Approx(v0).epsilon(1e-10));
  }

  SUBCASE("terminal-only MDP enumerates nothing") {
    TabularMdp tiny;
    tiny.stateCount = 1;
    tiny.actionCount = 1;
    tiny.next = {0};
    tiny.reward = {0.0};
    tiny.terminal = {true};
    tiny.discount = 1.0;
    tiny.horizon = 1;
    CHECK(enumerateEpisodes(tiny, 1, 10).empty());
  }

  SUBCASE("episode cap is enforced") {
    CHECK_THROWS_AS((void)enumerateEpisodes(mdp, mdp.horizon, 3), DataError);
  }
}

TEST_CASE("tabular token bridge round-trips states and actions") {
  Rng rng(41);
  const TabularMdp mdp = randomLayeredMdp(rng, 3, 2, 2, 1.0);
  const auto episodes = enumerateEpisodes(mdp, mdp.horizon, 100);
  const TabularTokenBridge bridge(mdp);
  const Episode ep = bridge.toEpisode(mdp, episodes[3]);
  CHECK(ep.prompt.size() == 3);
  CHECK(ep.prompt[1] == bridge.stateToken(mdp.initialState));
  CHECK(ep.response.size() == 3);
  CHECK(ep.tokenRewards == episodes[3].rewards);
  for (std::size_t t = 0; t < ep.response.size(); ++t) {
    CHECK(ep.response[t] == bridge.actionToken(episodes[3].actions[t]));
  }
}
