// Copyright (c) 2026 the dvpo authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "dvpo/common/rng.hpp"
#include "dvpo/env/vocab.hpp"
#include "dvpo/numkit/param_set.hpp"
#include "dvpo/numkit/tape.hpp"

namespace dvpo::models {

using env::TokenSeq;

// Exemplar (prompt, response) pairs identifying a source policy, pre-encoded
// as token runs. Flattened in order before the prompt; exemplar tokens attend
// but never receive loss terms.
using Conditioning = std::vector<TokenSeq>;

struct BackboneConfig {
  int vocabSize = 16;
  int embedDim = 32;
  int layers = 2;
  int heads = 2;
  int maxSeqLen = 64;
  std::uint64_t seed = 0;
  std::uint64_t vocabHash = 0;

  void validate() const;
  nlohmann::json toJson() const;
  static BackboneConfig fromJson(const nlohmann::json& j);
  bool operator==(const BackboneConfig&) const = default;
};

enum class ModelRole { Policy, Value, Reward };

std::string roleName(ModelRole role);
ModelRole roleFromName(const std::string& name);

// A backbone plus one role head. Immutable during evaluation; only the
// trainers mutate `params`, through optimizerStep, one writer at a time.
struct Model {
  BackboneConfig config;
  ModelRole role = ModelRole::Policy;
  numkit::ParamSet params;

  std::uint64_t fingerprint() const { return params.fingerprint(); }
  std::uint64_t backboneFingerprint() const { return params.fingerprint("backbone."); }
};

// Deterministic initialization per config seed. Value/reward heads start at
// exactly zero; the policy head starts at zero as well, which makes the
// initial policy uniform over the vocabulary. `initFrom` copies the backbone
// (and the head too when the roles match), the usual way to warm-start value
// or reward models from an SFT policy.
Model initModel(const BackboneConfig& config, ModelRole role,
                const Model* initFrom = nullptr);

// ---- forward passes ----------------------------------------------------------
// Graph-building variants take a Tape and participate in backward; the plain
// variants run a no-grad tape internally.

// Hidden states for an explicit token sequence, [len, embedDim].
numkit::NodeId backboneHidden(numkit::Tape& tape, const Model& model,
                              const TokenSeq& tokens);

// Log-probability of each response token under causal masking, length |response|.
numkit::NodeId policyLogProbsNode(numkit::Tape& tape, const Model& model,
                                  const Conditioning& cond, const TokenSeq& prompt,
                                  const TokenSeq& response);
std::vector<double> policyLogProbs(const Model& model, const Conditioning& cond,
                                   const TokenSeq& prompt, const TokenSeq& response);

// Full next-token log-distribution at every response position, [|response|, V].
numkit::NodeId policyLogitsNode(numkit::Tape& tape, const Model& model,
                                const Conditioning& cond, const TokenSeq& prompt,
                                const TokenSeq& response);

// Per-token action values: entry t is a function of [cond, prompt, response[..t]].
numkit::NodeId valueEstimatesNode(numkit::Tape& tape, const Model& model,
                                  const Conditioning& cond, const TokenSeq& prompt,
                                  const TokenSeq& response);
std::vector<double> valueEstimates(const Model& model, const Conditioning& cond,
                                   const TokenSeq& prompt, const TokenSeq& response);

// State values for an actor-critic baseline: entry t is a function of
// [cond, prompt, response[..t-1]], i.e. the value before emitting token t.
numkit::NodeId stateValuesNode(numkit::Tape& tape, const Model& model,
                               const Conditioning& cond, const TokenSeq& prompt,
                               const TokenSeq& response);
std::vector<double> stateValues(const Model& model, const Conditioning& cond,
                                const TokenSeq& prompt, const TokenSeq& response);

// Sequence-level score read at the last non-pad position.
numkit::NodeId scalarRewardNode(numkit::Tape& tape, const Model& model,
                                const TokenSeq& prompt, const TokenSeq& response);
double scalarReward(const Model& model, const TokenSeq& prompt, const TokenSeq& response);

struct PairExample {
  TokenSeq prompt;
  TokenSeq chosen;
  TokenSeq rejected;
};

// Bradley-Terry pairwise loss: mean of -log sigmoid(score_chosen - score_rejected).
numkit::NodeId btPairLossNode(numkit::Tape& tape, const Model& model,
                              const std::vector<PairExample>& pairs);

// ---- checkpointing -----------------------------------------------------------

void saveModel(const std::filesystem::path& path, const Model& model);
Model loadModel(const std::filesystem::path& path,
                std::optional<ModelRole> expectRole = std::nullopt);

}  // namespace dvpo::models
