// Copyright (c) 2026 the dvpo authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "dvpo/numkit/array.hpp"
#include "dvpo/numkit/param_set.hpp"

namespace dvpo::numkit {

using NodeId = std::uint32_t;

// Reverse-mode autodiff over RealArrays. Ops evaluate eagerly and record a
// backward closure; nodes are created after their inputs, so reverse creation
// order is a valid reverse-topological order for backpropagation.
//
// Parameters are bound by reference: the ParamSet must stay alive and
// unchanged between binding and the last backward() call. This matches the
// single-writer discipline used by the trainers (evaluation happens against
// an immutable parameter snapshot; updates happen outside any live tape).
//
// Every op validates its input shapes and checks its output for non-finite
// values, throwing ShapeError / NumericError respectively.
class Tape {
 public:
  explicit Tape(bool recordGrad = true) : recordGrad_(recordGrad) {}

  // ---- leaves -------------------------------------------------------------
  NodeId constant(RealArray v);                       // no gradient
  NodeId constantScalar(double v);
  NodeId param(const ParamSet& params, const std::string& name);

  // ---- elementwise --------------------------------------------------------
  NodeId add(NodeId a, NodeId b);
  NodeId sub(NodeId a, NodeId b);
  NodeId mul(NodeId a, NodeId b);
  NodeId minElem(NodeId a, NodeId b);
  NodeId expElem(NodeId a);
  NodeId logElem(NodeId a);
  NodeId clip(NodeId a, double lo, double hi);
  NodeId relu(NodeId a);  // clip(a, 0, +inf)
  NodeId scale(NodeId a, double s);
  NodeId addScalar(NodeId a, double s);
  // Elementwise product with a constant array (mask, advantage, ...).
  NodeId mulConstant(NodeId a, RealArray c);

  // ---- reductions ---------------------------------------------------------
  NodeId sum(NodeId a);               // -> scalar
  NodeId mean(NodeId a);              // -> scalar
  NodeId sumRows(NodeId a);           // [R,C] -> [R]

  // ---- structural ---------------------------------------------------------
  NodeId sliceRows(NodeId a, std::size_t begin, std::size_t count);  // [R,C] -> [count,C]
  NodeId pickPerRow(NodeId a, std::vector<int> cols);                // [R,C] -> [R]
  NodeId concatRows(NodeId a, NodeId b);                             // [Ra,C]+[Rb,C] -> [Ra+Rb,C]
  NodeId stackScalars(const std::vector<NodeId>& scalars);           // N scalars -> [N]

  // ---- linear algebra / network ops ---------------------------------------
  NodeId matmul(NodeId a, NodeId b);                     // [M,K]x[K,N] -> [M,N]
  NodeId affine(NodeId x, NodeId w, NodeId b);           // [T,I]x[I,O]+[O] -> [T,O]
  NodeId embedding(NodeId table, std::vector<int> ids);  // [V,D], ids -> [T,D]
  NodeId layerNorm(NodeId x, NodeId gain, NodeId bias, double eps = 1e-5);
  NodeId softmax(NodeId x);     // normalizes the last axis
  NodeId logSoftmax(NodeId x);  // last axis
  // Multi-head scaled dot-product attention with a causal mask. q, k, v are
  // [T, D] with D divisible by heads; output is [T, D].
  NodeId causalSelfAttention(NodeId q, NodeId k, NodeId v, int heads);

  // ---- losses -------------------------------------------------------------
  NodeId mseLoss(NodeId pred, RealArray target);  // mean((pred-target)^2) -> scalar

  // ---- access -------------------------------------------------------------
  const RealArray& value(NodeId id) const;
  double scalarValue(NodeId id) const;
  std::size_t nodeCount() const { return nodes_.size(); }
  bool recordsGrad() const { return recordGrad_; }

  // Backpropagates from `loss` (which must be a scalar produced by this tape
  // after at least one op) and returns gradients for every bound parameter
  // that the loss depends on. Parameters the loss does not touch get zero
  // gradients of matching shape.
  GradientRecord backward(NodeId loss);

 private:
  struct Node {
    RealArray owned;                  // value storage unless `external` is set
    const RealArray* external = nullptr;
    RealArray grad;                   // allocated during backward
    std::array<NodeId, 3> parents{};
    std::uint8_t arity = 0;
    bool needsGrad = false;
    int paramIndex = -1;              // >= 0 for parameter leaves
    std::function<void(Tape&, NodeId)> back;
  };

  struct BoundParam {
    std::string name;
    const RealArray* value;
  };

  const RealArray& val(NodeId id) const {
    const Node& n = nodes_[id];
    return n.external ? *n.external : n.owned;
  }

  RealArray& gradRef(NodeId id);

  NodeId push(Node n, const char* opName);
  NodeId pushLeaf(RealArray v);

  // Shape checks.
  const RealArray& expectMatrix(NodeId id, const char* op) const;
  void expectSameShape(NodeId a, NodeId b, const char* op) const;

  std::vector<Node> nodes_;
  std::vector<BoundParam> boundParams_;
  std::vector<NodeId> boundNodes_;
  bool recordGrad_;
  bool backwardRan_ = false;
};

// Central-difference gradient of an arbitrary scalar loss with respect to
// every parameter coordinate. The loss function must be deterministic. This
// is the independent oracle used to validate Tape::backward; it never goes
// through the reverse-mode path.
GradientRecord finiteDiffGradient(const std::function<double(const ParamSet&)>& lossFn,
                                  const ParamSet& params, double h);

}  // namespace dvpo::numkit
