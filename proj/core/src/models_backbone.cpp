// Copyright (c) 2026 the dvpo authors
// SPDX-License-Identifier: Apache-2.0
//
// Backbone construction and the shared hidden-state forward pass.
#include "dvpo/models/model.hpp"

namespace dvpo::models {

using numkit::NodeId;
using numkit::ParamSet;
using numkit::RealArray;
using numkit::Tape;

void BackboneConfig::validate() const {
  if (vocabSize <= 4) throw ConfigError("BackboneConfig: vocabSize too small");
  if (embedDim <= 0 || layers <= 0 || heads <= 0 || maxSeqLen <= 0) {
    throw ConfigError("BackboneConfig: dimensions must be positive");
  }
  if (embedDim % heads != 0) {
    throw ConfigError("BackboneConfig: embedDim must be divisible by heads");
  }
}

nlohmann::json BackboneConfig::toJson() const {
  return {{"vocab_size", vocabSize}, {"embed_dim", embedDim},   {"layers", layers},
          {"heads", heads},          {"max_seq_len", maxSeqLen}, {"seed", seed},
          {"vocab_hash", vocabHash}};
}

BackboneConfig BackboneConfig::fromJson(const nlohmann::json& j) {
  BackboneConfig c;
  c.vocabSize = j.at("vocab_size").get<int>();
  c.embedDim = j.at("embed_dim").get<int>();
  c.layers = j.at("layers").get<int>();
  c.heads = j.at("heads").get<int>();
  c.maxSeqLen = j.at("max_seq_len").get<int>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.vocabHash = j.at("vocab_hash").get<std::uint64_t>();
  c.validate();
  return c;
}

std::string roleName(ModelRole role) {
  switch (role) {
    case ModelRole::Policy: return "policy";
    case ModelRole::Value: return "value";
    case ModelRole::Reward: return "reward";
  }
  throw ConfigError("unknown model role");
}

ModelRole roleFromName(const std::string& name) {
  if (name == "policy") return ModelRole::Policy;
  if (name == "value") return ModelRole::Value;
  if (name == "reward") return ModelRole::Reward;
  throw ConfigError("unknown model role '" + name + "'");
}

namespace {

RealArray gaussianInit(Rng& rng, std::vector<std::size_t> shape, double std) {
  RealArray a(std::move(shape));
  for (double& v : a.values()) v = rng.gaussian() * std;
  return a;
}

constexpr double kInitStd = 0.08;

void addBackboneParams(ParamSet& ps, const BackboneConfig& c, Rng& rng) {
  const auto V = static_cast<std::size_t>(c.vocabSize);
  const auto D = static_cast<std::size_t>(c.embedDim);
  const auto L = static_cast<std::size_t>(c.maxSeqLen);
  const std::size_t M = 4 * D;  // MLP width

  ps.add("backbone.tok_embed", gaussianInit(rng, {V, D}, kInitStd));
  ps.add("backbone.pos_embed", gaussianInit(rng, {L, D}, kInitStd));
  for (int i = 0; i < c.layers; ++i) {
    const std::string p = "backbone.block" + std::to_string(i) + ".";
    ps.add(p + "ln1.gain", RealArray::full({D}, 1.0));
    ps.add(p + "ln1.bias", RealArray::zeros({D}));
    ps.add(p + "attn.wq", gaussianInit(rng, {D, D}, kInitStd));
    ps.add(p + "attn.bq", RealArray::zeros({D}));
    ps.add(p + "attn.wk", gaussianInit(rng, {D, D}, kInitStd));
    ps.add(p + "attn.bk", RealArray::zeros({D}));
    ps.add(p + "attn.wv", gaussianInit(rng, {D, D}, kInitStd));
    ps.add(p + "attn.bv", RealArray::zeros({D}));
    ps.add(p + "attn.wo", gaussianInit(rng, {D, D}, kInitStd));
    ps.add(p + "attn.bo", RealArray::zeros({D}));
    ps.add(p + "ln2.gain", RealArray::full({D}, 1.0));
    ps.add(p + "ln2.bias", RealArray::zeros({D}));
    ps.add(p + "mlp.w1", gaussianInit(rng, {D, M}, kInitStd));
    ps.add(p + "mlp.b1", RealArray::zeros({M}));
    ps.add(p + "mlp.w2", gaussianInit(rng, {M, D}, kInitStd));
    ps.add(p + "mlp.b2", RealArray::zeros({D}));
  }
  ps.add("backbone.final_ln.gain", RealArray::full({D}, 1.0));
  ps.add("backbone.final_ln.bias", RealArray::zeros({D}));
}

void addHeadParams(ParamSet& ps, const BackboneConfig& c, ModelRole role) {
  const auto V = static_cast<std::size_t>(c.vocabSize);
  const auto D = static_cast<std::size_t>(c.embedDim);
  switch (role) {
    case ModelRole::Policy:
      ps.add("head.policy.w", RealArray::zeros({D, V}));
      ps.add("head.policy.b", RealArray::zeros({V}));
      break;
    case ModelRole::Value:
      ps.add("head.value.w", RealArray::zeros({D, 1}));
      ps.add("head.value.b", RealArray::zeros({1}));
      break;
    case ModelRole::Reward:
      ps.add("head.reward.w", RealArray::zeros({D, 1}));
      ps.add("head.reward.b", RealArray::zeros({1}));
      break;
  }
}

}  // namespace

Model initModel(const BackboneConfig& config, ModelRole role, const Model* initFrom) {
  config.validate();
  Model model;
  model.config = config;
  model.role = role;

  Rng rng(mixSeed(config.seed, 0x6d6f64656cULL));
  addBackboneParams(model.params, config, rng);
  addHeadParams(model.params, config, role);

  if (initFrom != nullptr) {
    if (!(initFrom->config == config)) {
      throw ShapeError("initModel: initFrom checkpoint has a different backbone config");
    }
    for (auto& e : model.params.entries()) {
      const bool backbone = e.name.rfind("backbone.", 0) == 0;
      const bool sameRoleHead = initFrom->role == role && !backbone;
      if (backbone || sameRoleHead) {
        const RealArray& src = initFrom->params.get(e.name);
        if (!src.sameShape(e.value)) {
          throw ShapeError("initModel: shape mismatch for '" + e.name + "'");
        }
        e.value = src;
      }
    }
  }
  return model;
}

numkit::NodeId backboneHidden(Tape& tape, const Model& model, const TokenSeq& tokens) {
  const BackboneConfig& c = model.config;
  if (tokens.empty()) throw ShapeError("backboneHidden: empty token sequence");
  if (tokens.size() > static_cast<std::size_t>(c.maxSeqLen)) {
    throw ShapeError("backboneHidden: sequence length " + std::to_string(tokens.size()) +
                     " exceeds max " + std::to_string(c.maxSeqLen));
  }
  const ParamSet& ps = model.params;

  NodeId x = tape.add(
      tape.embedding(tape.param(ps, "backbone.tok_embed"), tokens),
      tape.sliceRows(tape.param(ps, "backbone.pos_embed"), 0, tokens.size()));

  for (int i = 0; i < c.layers; ++i) {
    const std::string p = "backbone.block" + std::to_string(i) + ".";
    NodeId normed = tape.layerNorm(x, tape.param(ps, p + "ln1.gain"),
                                   tape.param(ps, p + "ln1.bias"));
    NodeId q = tape.affine(normed, tape.param(ps, p + "attn.wq"),
                           tape.param(ps, p + "attn.bq"));
    NodeId k = tape.affine(normed, tape.param(ps, p + "attn.wk"),
                           tape.param(ps, p + "attn.bk"));
    NodeId v = tape.affine(normed, tape.param(ps, p + "attn.wv"),
                           tape.param(ps, p + "attn.bv"));
    NodeId att = tape.causalSelfAttention(q, k, v, c.heads);
    NodeId attOut = tape.affine(att, tape.param(ps, p + "attn.wo"),
                                tape.param(ps, p + "attn.bo"));
    x = tape.add(x, attOut);

    NodeId normed2 = tape.layerNorm(x, tape.param(ps, p + "ln2.gain"),
                                    tape.param(ps, p + "ln2.bias"));
    NodeId h1 = tape.relu(tape.affine(normed2, tape.param(ps, p + "mlp.w1"),
                                      tape.param(ps, p + "mlp.b1")));
    NodeId h2 = tape.affine(h1, tape.param(ps, p + "mlp.w2"),
                            tape.param(ps, p + "mlp.b2"));
    x = tape.add(x, h2);
  }
  return tape.layerNorm(x, tape.param(ps, "backbone.final_ln.gain"),
                        tape.param(ps, "backbone.final_ln.bias"));
}

}  // namespace dvpo::models
