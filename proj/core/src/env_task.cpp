// Copyright (c) 2026 the dvpo authors
// SPDX-License-Identifier: Apache-2.0
#include "dvpo/env/task.hpp"

#include <algorithm>

namespace dvpo::env {

std::string taskKindName(TaskKind kind) {
  switch (kind) {
    case TaskKind::Copy: return "copy";
    case TaskKind::Sort: return "sort";
    case TaskKind::ParitySum: return "parity-sum";
    case TaskKind::PatternComplete: return "pattern-complete";
  }
  throw ConfigError("unknown task kind");
}

TaskKind taskKindFromName(const std::string& name) {
  if (name == "copy") return TaskKind::Copy;
  if (name == "sort") return TaskKind::Sort;
  if (name == "parity-sum") return TaskKind::ParitySum;
  if (name == "pattern-complete") return TaskKind::PatternComplete;
  throw ConfigError("unknown task kind '" + name + "'");
}

void TokenTask::validate() const {
  vocab.validate();
  if (promptPayloadMin < 1 || promptPayloadMax < promptPayloadMin) {
    throw ConfigError("TokenTask: bad prompt length range");
  }
  if (maxResponseLen < 2) {
    throw ConfigError("TokenTask: maxResponseLen must allow payload plus eos");
  }
  if (kind == TaskKind::PatternComplete && patternContinuation < 1) {
    throw ConfigError("TokenTask: patternContinuation must be positive");
  }
  if (kind == TaskKind::PatternComplete && vocab.payloadCount() < 2) {
    throw ConfigError("TokenTask: pattern-complete needs two distinct payload tokens");
  }
}

TokenSeq samplePrompt(const TokenTask& task, Rng& rng) {
  task.validate();
  const int len = rng.uniformInt(task.promptPayloadMin, task.promptPayloadMax);
  TokenSeq prompt;
  prompt.reserve(static_cast<std::size_t>(len) + 2);
  prompt.push_back(task.vocab.bos);
  if (task.kind == TaskKind::PatternComplete) {
    const int a = task.vocab.payloadBegin() + rng.uniformInt(0, task.vocab.payloadCount() - 1);
    int b = a;
    while (b == a) {
      b = task.vocab.payloadBegin() + rng.uniformInt(0, task.vocab.payloadCount() - 1);
    }
    for (int i = 0; i < len; ++i) prompt.push_back(i % 2 == 0 ? a : b);
  } else {
    for (int i = 0; i < len; ++i) {
      prompt.push_back(task.vocab.payloadBegin() +
                       rng.uniformInt(0, task.vocab.payloadCount() - 1));
    }
  }
  prompt.push_back(task.vocab.sep);
  return prompt;
}

TokenSeq promptPayload(const TokenTask& task, std::span<const int> prompt) {
  if (prompt.size() < 3 || prompt.front() != task.vocab.bos ||
      prompt.back() != task.vocab.sep) {
    throw DataError("prompt is not framed as [bos, payload..., sep]");
  }
  return TokenSeq(prompt.begin() + 1, prompt.end() - 1);
}

TokenSeq targetResponse(const TokenTask& task, std::span<const int> prompt) {
  const TokenSeq payload = promptPayload(task, prompt);
  switch (task.kind) {
    case TaskKind::Copy:
      return payload;
    case TaskKind::Sort: {
      TokenSeq sorted = payload;
      std::sort(sorted.begin(), sorted.end());
      return sorted;
    }
    case TaskKind::ParitySum: {
      long sum = 0;
      for (int tok : payload) sum += tok - task.vocab.payloadBegin();
      return {task.vocab.payloadBegin() + static_cast<int>(sum % 2)};
    }
    case TaskKind::PatternComplete: {
      TokenSeq out;
      const std::size_t n = payload.size();
      for (int i = 0; i < task.patternContinuation; ++i) {
        out.push_back(payload[(n + static_cast<std::size_t>(i)) % 2 == 0 ? 0 : 1]);
      }
      return out;
    }
  }
  throw ConfigError("unknown task kind");
}

double groundTruthReward(const TokenTask& task, std::span<const int> prompt,
                         std::span<const int> response) {
  if (response.empty()) throw DataError("groundTruthReward: empty response");
  for (int tok : prompt) {
    if (tok < 0 || tok >= task.vocab.size) {
      throw DataError("groundTruthReward: prompt token outside vocabulary");
    }
  }
  for (int tok : response) {
    if (tok < 0 || tok >= task.vocab.size) {
      throw DataError("groundTruthReward: response token outside vocabulary");
    }
  }

  // Score the payload up to the first eos.
  TokenSeq answered;
  for (int tok : response) {
    if (tok == task.vocab.eos) break;
    answered.push_back(tok);
  }
  const TokenSeq target = targetResponse(task, prompt);

  std::size_t lcp = 0;
  while (lcp < answered.size() && lcp < target.size() && answered[lcp] == target[lcp]) {
    ++lcp;
  }
  const double frac =
      static_cast<double>(lcp) /
      static_cast<double>(std::max(target.size(), answered.size()));
  return 2.0 * frac - 1.0;
}

}  // namespace dvpo::env
