// Copyright (c) 2026 the dvpo authors
// SPDX-License-Identifier: Apache-2.0
//
// Role heads, pairwise reward loss, and model checkpointing.
#include <algorithm>

#include "dvpo/models/model.hpp"
#include "dvpo/numkit/checkpoint.hpp"
#include "dvpo/numkit/op_check.hpp"

namespace dvpo::models {

using numkit::NodeId;
using numkit::RealArray;
using numkit::Tape;

namespace {

struct AssembledInput {
  TokenSeq tokens;
  std::size_t responseStart = 0;
};

AssembledInput assemble(const Model& model, const Conditioning& cond,
                        const TokenSeq& prompt, const TokenSeq& response) {
  if (prompt.empty()) throw DataError("model forward: empty prompt");
  if (response.empty()) throw DataError("model forward: empty response");
  AssembledInput in;
  for (const TokenSeq& exemplar : cond) {
    in.tokens.insert(in.tokens.end(), exemplar.begin(), exemplar.end());
  }
  in.tokens.insert(in.tokens.end(), prompt.begin(), prompt.end());
  in.responseStart = in.tokens.size();
  in.tokens.insert(in.tokens.end(), response.begin(), response.end());
  if (in.tokens.size() > static_cast<std::size_t>(model.config.maxSeqLen)) {
    throw ShapeError("model forward: conditioning + prompt + response exceeds max "
                     "sequence length");
  }
  return in;
}

const char* headWeightName(ModelRole role) {
  switch (role) {
    case ModelRole::Policy: return "head.policy.w";
    case ModelRole::Value: return "head.value.w";
    case ModelRole::Reward: return "head.reward.w";
  }
  throw ConfigError("unknown model role");
}

const char* headBiasName(ModelRole role) {
  switch (role) {
    case ModelRole::Policy: return "head.policy.b";
    case ModelRole::Value: return "head.value.b";
    case ModelRole::Reward: return "head.reward.b";
  }
  throw ConfigError("unknown model role");
}

void requireRole(const Model& model, ModelRole role, const char* what) {
  if (model.role != role) {
    throw ConfigError(std::string(what) + " requires a " + roleName(role) +
                      " model, got " + roleName(model.role));
  }
}

// Scalar-head readout over a row range: [count, D] -> [count].
NodeId headOverRows(Tape& tape, const Model& model, NodeId hidden, std::size_t begin,
                    std::size_t count) {
  NodeId rows = tape.sliceRows(hidden, begin, count);
  NodeId out = tape.affine(rows, tape.param(model.params, headWeightName(model.role)),
                           tape.param(model.params, headBiasName(model.role)));
  return tape.sumRows(out);  // [count, 1] -> [count]
}

}  // namespace

NodeId policyLogitsNode(Tape& tape, const Model& model, const Conditioning& cond,
                        const TokenSeq& prompt, const TokenSeq& response) {
  requireRole(model, ModelRole::Policy, "policyLogits");
  const AssembledInput in = assemble(model, cond, prompt, response);
  NodeId hidden = backboneHidden(tape, model, in.tokens);
  // Position responseStart - 1 + t predicts response token t.
  NodeId rows = tape.sliceRows(hidden, in.responseStart - 1, response.size());
  NodeId logits = tape.affine(rows, tape.param(model.params, "head.policy.w"),
                              tape.param(model.params, "head.policy.b"));
  return tape.logSoftmax(logits);
}

NodeId policyLogProbsNode(Tape& tape, const Model& model, const Conditioning& cond,
                          const TokenSeq& prompt, const TokenSeq& response) {
  NodeId logProbs = policyLogitsNode(tape, model, cond, prompt, response);
  return tape.pickPerRow(logProbs, response);
}

std::vector<double> policyLogProbs(const Model& model, const Conditioning& cond,
                                   const TokenSeq& prompt, const TokenSeq& response) {
  Tape tape(/*recordGrad=*/false);
  NodeId node = policyLogProbsNode(tape, model, cond, prompt, response);
  const RealArray& v = tape.value(node);
  return {v.values().begin(), v.values().end()};
}

NodeId valueEstimatesNode(Tape& tape, const Model& model, const Conditioning& cond,
                          const TokenSeq& prompt, const TokenSeq& response) {
  requireRole(model, ModelRole::Value, "valueEstimates");
  const AssembledInput in = assemble(model, cond, prompt, response);
  NodeId hidden = backboneHidden(tape, model, in.tokens);
  // Entry t reads the hidden state at response token t: a function of the
  // prefix up to and including that token.
  return headOverRows(tape, model, hidden, in.responseStart, response.size());
}

std::vector<double> valueEstimates(const Model& model, const Conditioning& cond,
                                   const TokenSeq& prompt, const TokenSeq& response) {
  Tape tape(/*recordGrad=*/false);
  NodeId node = valueEstimatesNode(tape, model, cond, prompt, response);
  const RealArray& v = tape.value(node);
  return {v.values().begin(), v.values().end()};
}

NodeId stateValuesNode(Tape& tape, const Model& model, const Conditioning& cond,
                       const TokenSeq& prompt, const TokenSeq& response) {
  requireRole(model, ModelRole::Value, "stateValues");
  const AssembledInput in = assemble(model, cond, prompt, response);
  NodeId hidden = backboneHidden(tape, model, in.tokens);
  // Entry t reads the position just before response token t.
  return headOverRows(tape, model, hidden, in.responseStart - 1, response.size());
}

std::vector<double> stateValues(const Model& model, const Conditioning& cond,
                                const TokenSeq& prompt, const TokenSeq& response) {
  Tape tape(/*recordGrad=*/false);
  NodeId node = stateValuesNode(tape, model, cond, prompt, response);
  const RealArray& v = tape.value(node);
  return {v.values().begin(), v.values().end()};
}

NodeId scalarRewardNode(Tape& tape, const Model& model, const TokenSeq& prompt,
                        const TokenSeq& response) {
  requireRole(model, ModelRole::Reward, "scalarReward");
  const AssembledInput in = assemble(model, {}, prompt, response);
  // Trailing padding is ignored: the score reads the last non-pad position.
  // There is always at least one (prompts never consist of padding alone).
  std::size_t last = in.tokens.size();
  while (last > 0 && in.tokens[last - 1] == 0) --last;
  if (last == 0) throw DataError("scalarReward: all-pad input");
  NodeId hidden = backboneHidden(tape, model, in.tokens);
  NodeId per = headOverRows(tape, model, hidden, last - 1, 1);
  return tape.sum(per);
}

double scalarReward(const Model& model, const TokenSeq& prompt, const TokenSeq& response) {
  Tape tape(/*recordGrad=*/false);
  return tape.scalarValue(scalarRewardNode(tape, model, prompt, response));
}

NodeId btPairLossNode(Tape& tape, const Model& model,
                      const std::vector<PairExample>& pairs) {
  requireRole(model, ModelRole::Reward, "btPairLoss");
  if (pairs.empty()) throw DataError("btPairLoss: empty pair list");
  std::vector<NodeId> perPair;
  perPair.reserve(pairs.size());
  for (const PairExample& pair : pairs) {
    NodeId margin = tape.sub(scalarRewardNode(tape, model, pair.prompt, pair.chosen),
                             scalarRewardNode(tape, model, pair.prompt, pair.rejected));
    // -log sigmoid(margin), computed as -log_softmax([margin, 0])[0] for
    // stability at large negative margins.
    NodeId row = tape.stackScalars({margin, tape.constantScalar(0.0)});
    NodeId logSig = tape.sum(tape.mulConstant(tape.logSoftmax(row),
                                              RealArray({2}, {1.0, 0.0})));
    perPair.push_back(tape.scale(logSig, -1.0));
  }
  return tape.mean(tape.stackScalars(perPair));
}

void saveModel(const std::filesystem::path& path, const Model& model) {
  nlohmann::json extra;
  extra["role"] = roleName(model.role);
  extra["backbone_config"] = model.config.toJson();
  numkit::saveCheckpoint(path, model.params, numkit::opSetHash(), extra);
}

Model loadModel(const std::filesystem::path& path, std::optional<ModelRole> expectRole) {
  numkit::CheckpointData data = numkit::loadCheckpoint(path);
  if (data.opSetHash != numkit::opSetHash()) {
    throw IoError("loadModel: checkpoint was written for a different op set");
  }
  Model model;
  model.config = BackboneConfig::fromJson(data.extra.at("backbone_config"));
  model.role = roleFromName(data.extra.at("role").get<std::string>());
  if (expectRole.has_value() && model.role != *expectRole) {
    throw ConfigError("loadModel: role mismatch, checkpoint holds a " +
                      roleName(model.role) + " model but a " + roleName(*expectRole) +
                      " model was requested");
  }
  // Validate entry names and shapes against a fresh skeleton of the same config.
  const Model skeleton = initModel(model.config, model.role);
  if (skeleton.params.count() != data.params.count()) {
    throw IoError("loadModel: unexpected parameter count in checkpoint");
  }
  for (const auto& e : skeleton.params.entries()) {
    if (!data.params.contains(e.name) ||
        !data.params.get(e.name).sameShape(e.value)) {
      throw IoError("loadModel: checkpoint entry '" + e.name + "' missing or misshapen");
    }
  }
  model.params = std::move(data.params);
  return model;
}

}  // namespace dvpo::models
