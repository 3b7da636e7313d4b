// Copyright (c) 2026 the dvpo authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <span>
#include <string>

#include "dvpo/common/rng.hpp"
#include "dvpo/env/vocab.hpp"

namespace dvpo::env {

enum class TaskKind { Copy, Sort, ParitySum, PatternComplete };

std::string taskKindName(TaskKind kind);
TaskKind taskKindFromName(const std::string& name);

// A synthetic token-generation task with a deterministic ground-truth reward.
// Prompts are framed as [bos, payload..., sep]; the expected response is the
// task-specific target payload followed by eos, truncated by maxResponseLen.
struct TokenTask {
  TaskKind kind = TaskKind::Copy;
  Vocabulary vocab;
  int promptPayloadMin = 3;
  int promptPayloadMax = 5;
  int maxResponseLen = 8;       // response token budget, eos included
  int patternContinuation = 4;  // pattern-complete only

  void validate() const;
};

// Deterministic per RNG stream; prompt payload length is uniform over the
// declared range and payload ids never collide with reserved ids.
TokenSeq samplePrompt(const TokenTask& task, Rng& rng);

// Strips the [bos, ..., sep] framing.
TokenSeq promptPayload(const TokenTask& task, std::span<const int> prompt);

// The payload a perfect responder would emit (no eos).
TokenSeq targetResponse(const TokenTask& task, std::span<const int> prompt);

// Ground truth in [-1, 1]: +1 for an exact match, partial credit proportional
// to the longest correct prefix, -1 for zero matching positions. Pure in its
// inputs. Throws DataError on token ids outside the vocabulary.
double groundTruthReward(const TokenTask& task, std::span<const int> prompt,
                         std::span<const int> response);

}  // namespace dvpo::env
