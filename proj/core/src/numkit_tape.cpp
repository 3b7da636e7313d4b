// Copyright (c) 2026 the dvpo authors
// SPDX-License-Identifier: Apache-2.0
#include "dvpo/numkit/tape.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace dvpo::numkit {

namespace {

void checkFinite(const RealArray& a, const char* op) {
  for (double v : a.values()) {
    if (!std::isfinite(v)) {
      throw NumericError(std::string("non-finite value produced by op '") + op + "'");
    }
  }
}

}  // namespace

RealArray& Tape::gradRef(NodeId id) {
  Node& n = nodes_[id];
  if (n.grad.empty()) {
    n.grad = RealArray::zeros(val(id).shape());
  }
  return n.grad;
}

NodeId Tape::push(Node n, const char* opName) {
  checkFinite(n.owned, opName);
  nodes_.push_back(std::move(n));
  return static_cast<NodeId>(nodes_.size() - 1);
}

NodeId Tape::pushLeaf(RealArray v) {
  Node n;
  n.owned = std::move(v);
  nodes_.push_back(std::move(n));
  return static_cast<NodeId>(nodes_.size() - 1);
}

NodeId Tape::constant(RealArray v) {
  v.requireFinite("constant");
  return pushLeaf(std::move(v));
}

NodeId Tape::constantScalar(double v) { return constant(RealArray::scalar(v)); }

NodeId Tape::param(const ParamSet& params, const std::string& name) {
  const RealArray& value = params.get(name);
  value.requireFinite("param '" + name + "'");
  for (std::size_t i = 0; i < boundParams_.size(); ++i) {
    if (boundParams_[i].name == name) {
      if (boundParams_[i].value != &value) {
        throw ConfigError("Tape: parameter '" + name + "' bound from two ParamSets");
      }
      return boundNodes_[i];
    }
  }
  Node n;
  n.external = &value;
  n.needsGrad = recordGrad_;
  n.paramIndex = static_cast<int>(boundParams_.size());
  nodes_.push_back(std::move(n));
  const NodeId id = static_cast<NodeId>(nodes_.size() - 1);
  boundParams_.push_back({name, &value});
  boundNodes_.push_back(id);
  return id;
}

const RealArray& Tape::value(NodeId id) const {
  if (id >= nodes_.size()) throw Error("Tape::value: invalid node id");
  return val(id);
}

double Tape::scalarValue(NodeId id) const {
  const RealArray& v = value(id);
  if (v.size() != 1) throw ShapeError("Tape::scalarValue: node is not scalar");
  return v[0];
}

const RealArray& Tape::expectMatrix(NodeId id, const char* op) const {
  const RealArray& v = val(id);
  if (v.rank() != 2) {
    throw ShapeError(std::string(op) + ": expected rank-2 array, got " + v.shapeString());
  }
  return v;
}

void Tape::expectSameShape(NodeId a, NodeId b, const char* op) const {
  if (!val(a).sameShape(val(b))) {
    throw ShapeError(std::string(op) + ": shape mismatch " + val(a).shapeString() +
                     " vs " + val(b).shapeString());
  }
}

// ---- elementwise ------------------------------------------------------------

NodeId Tape::add(NodeId a, NodeId b) {
  expectSameShape(a, b, "add");
  const RealArray& av = val(a);
  const RealArray& bv = val(b);
  Node n;
  n.owned = RealArray(av.shape());
  for (std::size_t i = 0; i < av.size(); ++i) n.owned[i] = av[i] + bv[i];
  n.parents = {a, b, 0};
  n.arity = 2;
  n.needsGrad = recordGrad_ && (nodes_[a].needsGrad || nodes_[b].needsGrad);
  if (n.needsGrad) {
    n.back = [a, b](Tape& t, NodeId self) {
      const RealArray& g = t.nodes_[self].grad;
      if (t.nodes_[a].needsGrad) {
        RealArray& ga = t.gradRef(a);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
      }
      if (t.nodes_[b].needsGrad) {
        RealArray& gb = t.gradRef(b);
        for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i];
      }
    };
  }
  return push(std::move(n), "add");
}

NodeId Tape::sub(NodeId a, NodeId b) {
  expectSameShape(a, b, "sub");
  const RealArray& av = val(a);
  const RealArray& bv = val(b);
  Node n;
  n.owned = RealArray(av.shape());
  for (std::size_t i = 0; i < av.size(); ++i) n.owned[i] = av[i] - bv[i];
  n.parents = {a, b, 0};
  n.arity = 2;
  n.needsGrad = recordGrad_ && (nodes_[a].needsGrad || nodes_[b].needsGrad);
  if (n.needsGrad) {
    n.back = [a, b](Tape& t, NodeId self) {
      const RealArray& g = t.nodes_[self].grad;
      if (t.nodes_[a].needsGrad) {
        RealArray& ga = t.gradRef(a);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
      }
      if (t.nodes_[b].needsGrad) {
        RealArray& gb = t.gradRef(b);
        for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
      }
    };
  }
  return push(std::move(n), "sub");
}

NodeId Tape::mul(NodeId a, NodeId b) {
  expectSameShape(a, b, "mul");
  const RealArray& av = val(a);
  const RealArray& bv = val(b);
  Node n;
  n.owned = RealArray(av.shape());
  for (std::size_t i = 0; i < av.size(); ++i) n.owned[i] = av[i] * bv[i];
  n.parents = {a, b, 0};
  n.arity = 2;
  n.needsGrad = recordGrad_ && (nodes_[a].needsGrad || nodes_[b].needsGrad);
  if (n.needsGrad) {
    n.back = [a, b](Tape& t, NodeId self) {
      const RealArray& g = t.nodes_[self].grad;
      const RealArray& av2 = t.val(a);
      const RealArray& bv2 = t.val(b);
      if (t.nodes_[a].needsGrad) {
        RealArray& ga = t.gradRef(a);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bv2[i];
      }
      if (t.nodes_[b].needsGrad) {
        RealArray& gb = t.gradRef(b);
        for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * av2[i];
      }
    };
  }
  return push(std::move(n), "mul");
}

NodeId Tape::minElem(NodeId a, NodeId b) {
  expectSameShape(a, b, "min");
  const RealArray& av = val(a);
  const RealArray& bv = val(b);
  Node n;
  n.owned = RealArray(av.shape());
  for (std::size_t i = 0; i < av.size(); ++i) n.owned[i] = std::min(av[i], bv[i]);
  n.parents = {a, b, 0};
  n.arity = 2;
  n.needsGrad = recordGrad_ && (nodes_[a].needsGrad || nodes_[b].needsGrad);
  if (n.needsGrad) {
    // Ties route the gradient to the first argument.
    n.back = [a, b](Tape& t, NodeId self) {
      const RealArray& g = t.nodes_[self].grad;
      const RealArray& av2 = t.val(a);
      const RealArray& bv2 = t.val(b);
      if (t.nodes_[a].needsGrad) {
        RealArray& ga = t.gradRef(a);
        for (std::size_t i = 0; i < g.size(); ++i) {
          if (av2[i] <= bv2[i]) ga[i] += g[i];
        }
      }
      if (t.nodes_[b].needsGrad) {
        RealArray& gb = t.gradRef(b);
        for (std::size_t i = 0; i < g.size(); ++i) {
          if (bv2[i] < av2[i]) gb[i] += g[i];
        }
      }
    };
  }
  return push(std::move(n), "min");
}

NodeId Tape::expElem(NodeId a) {
  const RealArray& av = val(a);
  Node n;
  n.owned = RealArray(av.shape());
  for (std::size_t i = 0; i < av.size(); ++i) n.owned[i] = std::exp(av[i]);
  n.parents = {a, 0, 0};
  n.arity = 1;
  n.needsGrad = recordGrad_ && nodes_[a].needsGrad;
  if (n.needsGrad) {
    n.back = [a](Tape& t, NodeId self) {
      const RealArray& g = t.nodes_[self].grad;
      const RealArray& ov = t.val(self);
      RealArray& ga = t.gradRef(a);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * ov[i];
    };
  }
  return push(std::move(n), "exp");
}

NodeId Tape::logElem(NodeId a) {
  const RealArray& av = val(a);
  Node n;
  n.owned = RealArray(av.shape());
  for (std::size_t i = 0; i < av.size(); ++i) n.owned[i] = std::log(av[i]);
  n.parents = {a, 0, 0};
  n.arity = 1;
  n.needsGrad = recordGrad_ && nodes_[a].needsGrad;
  if (n.needsGrad) {
    n.back = [a](Tape& t, NodeId self) {
      const RealArray& g = t.nodes_[self].grad;
      const RealArray& av2 = t.val(a);
      RealArray& ga = t.gradRef(a);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] / av2[i];
    };
  }
  return push(std::move(n), "log");
}

NodeId Tape::clip(NodeId a, double lo, double hi) {
  if (!(lo <= hi)) throw ConfigError("clip: lo must be <= hi");
  const RealArray& av = val(a);
  Node n;
  n.owned = RealArray(av.shape());
  for (std::size_t i = 0; i < av.size(); ++i) n.owned[i] = std::clamp(av[i], lo, hi);
  n.parents = {a, 0, 0};
  n.arity = 1;
  n.needsGrad = recordGrad_ && nodes_[a].needsGrad;
  if (n.needsGrad) {
    // Gradient passes only strictly inside the interval.
    n.back = [a, lo, hi](Tape& t, NodeId self) {
      const RealArray& g = t.nodes_[self].grad;
      const RealArray& av2 = t.val(a);
      RealArray& ga = t.gradRef(a);
      for (std::size_t i = 0; i < g.size(); ++i) {
        if (av2[i] > lo && av2[i] < hi) ga[i] += g[i];
      }
    };
  }
  return push(std::move(n), "clip");
}

NodeId Tape::relu(NodeId a) {
  return clip(a, 0.0, std::numeric_limits<double>::infinity());
}

NodeId Tape::scale(NodeId a, double s) {
  const RealArray& av = val(a);
  Node n;
  n.owned = RealArray(av.shape());
  for (std::size_t i = 0; i < av.size(); ++i) n.owned[i] = av[i] * s;
  n.parents = {a, 0, 0};
  n.arity = 1;
  n.needsGrad = recordGrad_ && nodes_[a].needsGrad;
  if (n.needsGrad) {
    n.back = [a, s](Tape& t, NodeId self) {
      const RealArray& g = t.nodes_[self].grad;
      RealArray& ga = t.gradRef(a);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * s;
    };
  }
  return push(std::move(n), "scale");
}

NodeId Tape::addScalar(NodeId a, double s) {
  const RealArray& av = val(a);
  Node n;
  n.owned = RealArray(av.shape());
  for (std::size_t i = 0; i < av.size(); ++i) n.owned[i] = av[i] + s;
  n.parents = {a, 0, 0};
  n.arity = 1;
  n.needsGrad = recordGrad_ && nodes_[a].needsGrad;
  if (n.needsGrad) {
    n.back = [a](Tape& t, NodeId self) {
      const RealArray& g = t.nodes_[self].grad;
      RealArray& ga = t.gradRef(a);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    };
  }
  return push(std::move(n), "add_scalar");
}

NodeId Tape::mulConstant(NodeId a, RealArray c) {
  const RealArray& av = val(a);
  if (!av.sameShape(c)) {
    throw ShapeError("mul_constant: shape mismatch " + av.shapeString() + " vs " +
                     c.shapeString());
  }
  c.requireFinite("mul_constant factor");
  Node n;
  n.owned = RealArray(av.shape());
  for (std::size_t i = 0; i < av.size(); ++i) n.owned[i] = av[i] * c[i];
  n.parents = {a, 0, 0};
  n.arity = 1;
  n.needsGrad = recordGrad_ && nodes_[a].needsGrad;
  if (n.needsGrad) {
    n.back = [a, c = std::move(c)](Tape& t, NodeId self) {
      const RealArray& g = t.nodes_[self].grad;
      RealArray& ga = t.gradRef(a);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * c[i];
    };
  }
  return push(std::move(n), "mul_constant");
}

// ---- reductions --------------------------------------------------------------

NodeId Tape::sum(NodeId a) {
  const RealArray& av = val(a);
  double total = 0.0;
  for (double v : av.values()) total += v;
  Node n;
  n.owned = RealArray::scalar(total);
  n.parents = {a, 0, 0};
  n.arity = 1;
  n.needsGrad = recordGrad_ && nodes_[a].needsGrad;
  if (n.needsGrad) {
    n.back = [a](Tape& t, NodeId self) {
      const double g = t.nodes_[self].grad[0];
      RealArray& ga = t.gradRef(a);
      for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g;
    };
  }
  return push(std::move(n), "sum");
}

NodeId Tape::mean(NodeId a) {
  const RealArray& av = val(a);
  const double inv = 1.0 / static_cast<double>(av.size());
  double total = 0.0;
  for (double v : av.values()) total += v;
  Node n;
  n.owned = RealArray::scalar(total * inv);
  n.parents = {a, 0, 0};
  n.arity = 1;
  n.needsGrad = recordGrad_ && nodes_[a].needsGrad;
  if (n.needsGrad) {
    n.back = [a, inv](Tape& t, NodeId self) {
      const double g = t.nodes_[self].grad[0] * inv;
      RealArray& ga = t.gradRef(a);
      for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g;
    };
  }
  return push(std::move(n), "mean");
}

NodeId Tape::sumRows(NodeId a) {
  const RealArray& av = expectMatrix(a, "sum_rows");
  const std::size_t rows = av.rows(), cols = av.cols();
  Node n;
  n.owned = RealArray({rows});
  for (std::size_t r = 0; r < rows; ++r) {
    double s = 0.0;
    for (std::size_t c = 0; c < cols; ++c) s += av.at(r, c);
    n.owned[r] = s;
  }
  n.parents = {a, 0, 0};
  n.arity = 1;
  n.needsGrad = recordGrad_ && nodes_[a].needsGrad;
  if (n.needsGrad) {
    n.back = [a, rows, cols](Tape& t, NodeId self) {
      const RealArray& g = t.nodes_[self].grad;
      RealArray& ga = t.gradRef(a);
      for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < cols; ++c) ga.at(r, c) += g[r];
      }
    };
  }
  return push(std::move(n), "sum_rows");
}

// ---- structural ----------------------------------------------------------------

NodeId Tape::sliceRows(NodeId a, std::size_t begin, std::size_t count) {
  const RealArray& av = expectMatrix(a, "slice_rows");
  if (begin + count > av.rows() || count == 0) {
    throw ShapeError("slice_rows: range out of bounds");
  }
  const std::size_t cols = av.cols();
  Node n;
  n.owned = RealArray({count, cols});
  for (std::size_t r = 0; r < count; ++r) {
    for (std::size_t c = 0; c < cols; ++c) n.owned.at(r, c) = av.at(begin + r, c);
  }
  n.parents = {a, 0, 0};
  n.arity = 1;
  n.needsGrad = recordGrad_ && nodes_[a].needsGrad;
  if (n.needsGrad) {
    n.back = [a, begin, count, cols](Tape& t, NodeId self) {
      const RealArray& g = t.nodes_[self].grad;
      RealArray& ga = t.gradRef(a);
      for (std::size_t r = 0; r < count; ++r) {
        for (std::size_t c = 0; c < cols; ++c) ga.at(begin + r, c) += g.at(r, c);
      }
    };
  }
  return push(std::move(n), "slice_rows");
}

NodeId Tape::pickPerRow(NodeId a, std::vector<int> cols) {
  const RealArray& av = expectMatrix(a, "pick_per_row");
  if (cols.size() != av.rows()) {
    throw ShapeError("pick_per_row: one column index per row required");
  }
  for (int c : cols) {
    if (c < 0 || static_cast<std::size_t>(c) >= av.cols()) {
      throw ShapeError("pick_per_row: column index out of range");
    }
  }
  Node n;
  n.owned = RealArray({cols.size()});
  for (std::size_t r = 0; r < cols.size(); ++r) {
    n.owned[r] = av.at(r, static_cast<std::size_t>(cols[r]));
  }
  n.parents = {a, 0, 0};
  n.arity = 1;
  n.needsGrad = recordGrad_ && nodes_[a].needsGrad;
  if (n.needsGrad) {
    n.back = [a, cols = std::move(cols)](Tape& t, NodeId self) {
      const RealArray& g = t.nodes_[self].grad;
      RealArray& ga = t.gradRef(a);
      for (std::size_t r = 0; r < cols.size(); ++r) {
        ga.at(r, static_cast<std::size_t>(cols[r])) += g[r];
      }
    };
  }
  return push(std::move(n), "pick_per_row");
}

NodeId Tape::concatRows(NodeId a, NodeId b) {
  const RealArray& av = expectMatrix(a, "concat_rows");
  const RealArray& bv = expectMatrix(b, "concat_rows");
  if (av.cols() != bv.cols()) throw ShapeError("concat_rows: column count mismatch");
  const std::size_t ra = av.rows(), rb = bv.rows(), cols = av.cols();
  Node n;
  n.owned = RealArray({ra + rb, cols});
  for (std::size_t r = 0; r < ra; ++r)
    for (std::size_t c = 0; c < cols; ++c) n.owned.at(r, c) = av.at(r, c);
  for (std::size_t r = 0; r < rb; ++r)
    for (std::size_t c = 0; c < cols; ++c) n.owned.at(ra + r, c) = bv.at(r, c);
  n.parents = {a, b, 0};
  n.arity = 2;
  n.needsGrad = recordGrad_ && (nodes_[a].needsGrad || nodes_[b].needsGrad);
  if (n.needsGrad) {
    n.back = [a, b, ra, rb, cols](Tape& t, NodeId self) {
      const RealArray& g = t.nodes_[self].grad;
      if (t.nodes_[a].needsGrad) {
        RealArray& ga = t.gradRef(a);
        for (std::size_t r = 0; r < ra; ++r)
          for (std::size_t c = 0; c < cols; ++c) ga.at(r, c) += g.at(r, c);
      }
      if (t.nodes_[b].needsGrad) {
        RealArray& gb = t.gradRef(b);
        for (std::size_t r = 0; r < rb; ++r)
          for (std::size_t c = 0; c < cols; ++c) gb.at(r, c) += g.at(ra + r, c);
      }
    };
  }
  return push(std::move(n), "concat_rows");
}

NodeId Tape::stackScalars(const std::vector<NodeId>& scalars) {
  if (scalars.empty()) throw ShapeError("stack_scalars: empty input list");
  Node n;
  n.owned = RealArray({scalars.size()});
  bool any = false;
  for (std::size_t i = 0; i < scalars.size(); ++i) {
    const RealArray& v = val(scalars[i]);
    if (v.size() != 1) throw ShapeError("stack_scalars: inputs must be scalars");
    n.owned[i] = v[0];
    any = any || nodes_[scalars[i]].needsGrad;
  }
  n.arity = 0;  // parents tracked by the closure; leaves keep creation order valid
  n.needsGrad = recordGrad_ && any;
  if (n.needsGrad) {
    n.back = [inputs = scalars](Tape& t, NodeId self) {
      const RealArray& g = t.nodes_[self].grad;
      for (std::size_t i = 0; i < inputs.size(); ++i) {
        if (t.nodes_[inputs[i]].needsGrad) t.gradRef(inputs[i])[0] += g[i];
      }
    };
  }
  return push(std::move(n), "stack_scalars");
}

// ---- linear algebra / network ops ---------------------------------------------

NodeId Tape::matmul(NodeId a, NodeId b) {
  const RealArray& av = expectMatrix(a, "matmul");
  const RealArray& bv = expectMatrix(b, "matmul");
  if (av.cols() != bv.rows()) {
    throw ShapeError("matmul: inner dimension mismatch " + av.shapeString() + " x " +
                     bv.shapeString());
  }
  const std::size_t M = av.rows(), K = av.cols(), N = bv.cols();
  Node n;
  n.owned = RealArray({M, N});
  for (std::size_t i = 0; i < M; ++i) {
    for (std::size_t k = 0; k < K; ++k) {
      const double aik = av.at(i, k);
      const double* brow = bv.data() + k * N;
      double* orow = n.owned.data() + i * N;
      for (std::size_t j = 0; j < N; ++j) orow[j] += aik * brow[j];
    }
  }
  n.parents = {a, b, 0};
  n.arity = 2;
  n.needsGrad = recordGrad_ && (nodes_[a].needsGrad || nodes_[b].needsGrad);
  if (n.needsGrad) {
    n.back = [a, b, M, K, N](Tape& t, NodeId self) {
      const RealArray& g = t.nodes_[self].grad;
      const RealArray& av2 = t.val(a);
      const RealArray& bv2 = t.val(b);
      if (t.nodes_[a].needsGrad) {
        // dA = g * B^T
        RealArray& ga = t.gradRef(a);
        for (std::size_t i = 0; i < M; ++i) {
          for (std::size_t j = 0; j < N; ++j) {
            const double gij = g.at(i, j);
            const double* brow = bv2.data() + 0 * N + j;  // column j
            double* garow = ga.data() + i * K;
            for (std::size_t k = 0; k < K; ++k) garow[k] += gij * brow[k * N];
          }
        }
      }
      if (t.nodes_[b].needsGrad) {
        // dB = A^T * g
        RealArray& gb = t.gradRef(b);
        for (std::size_t k = 0; k < K; ++k) {
          for (std::size_t i = 0; i < M; ++i) {
            const double aik = av2.at(i, k);
            const double* grow = g.data() + i * N;
            double* gbrow = gb.data() + k * N;
            for (std::size_t j = 0; j < N; ++j) gbrow[j] += aik * grow[j];
          }
        }
      }
    };
  }
  return push(std::move(n), "matmul");
}

NodeId Tape::affine(NodeId x, NodeId w, NodeId b) {
  const RealArray& xv = expectMatrix(x, "affine");
  const RealArray& wv = expectMatrix(w, "affine");
  const RealArray& bv = val(b);
  if (xv.cols() != wv.rows()) {
    throw ShapeError("affine: input/weight dimension mismatch");
  }
  if (bv.rank() != 1 || bv.size() != wv.cols()) {
    throw ShapeError("affine: bias must be rank-1 of width cols(w)");
  }
  const std::size_t T = xv.rows(), I = xv.cols(), O = wv.cols();
  Node n;
  n.owned = RealArray({T, O});
  for (std::size_t t = 0; t < T; ++t) {
    double* orow = n.owned.data() + t * O;
    for (std::size_t j = 0; j < O; ++j) orow[j] = bv[j];
    const double* xrow = xv.data() + t * I;
    for (std::size_t i = 0; i < I; ++i) {
      const double xi = xrow[i];
      const double* wrow = wv.data() + i * O;
      for (std::size_t j = 0; j < O; ++j) orow[j] += xi * wrow[j];
    }
  }
  n.parents = {x, w, b};
  n.arity = 3;
  n.needsGrad = recordGrad_ &&
                (nodes_[x].needsGrad || nodes_[w].needsGrad || nodes_[b].needsGrad);
  if (n.needsGrad) {
    n.back = [x, w, b, T, I, O](Tape& t, NodeId self) {
      const RealArray& g = t.nodes_[self].grad;
      const RealArray& xv2 = t.val(x);
      const RealArray& wv2 = t.val(w);
      if (t.nodes_[x].needsGrad) {
        RealArray& gx = t.gradRef(x);
        for (std::size_t r = 0; r < T; ++r) {
          const double* grow = g.data() + r * O;
          double* gxrow = gx.data() + r * I;
          for (std::size_t i = 0; i < I; ++i) {
            const double* wrow = wv2.data() + i * O;
            double acc = 0.0;
            for (std::size_t j = 0; j < O; ++j) acc += grow[j] * wrow[j];
            gxrow[i] += acc;
          }
        }
      }
      if (t.nodes_[w].needsGrad) {
        RealArray& gw = t.gradRef(w);
        for (std::size_t r = 0; r < T; ++r) {
          const double* xrow = xv2.data() + r * I;
          const double* grow = g.data() + r * O;
          for (std::size_t i = 0; i < I; ++i) {
            const double xi = xrow[i];
            double* gwrow = gw.data() + i * O;
            for (std::size_t j = 0; j < O; ++j) gwrow[j] += xi * grow[j];
          }
        }
      }
      if (t.nodes_[b].needsGrad) {
        RealArray& gb = t.gradRef(b);
        for (std::size_t r = 0; r < T; ++r) {
          const double* grow = g.data() + r * O;
          for (std::size_t j = 0; j < O; ++j) gb[j] += grow[j];
        }
      }
    };
  }
  return push(std::move(n), "affine");
}

NodeId Tape::embedding(NodeId table, std::vector<int> ids) {
  const RealArray& tv = expectMatrix(table, "embedding");
  if (ids.empty()) throw ShapeError("embedding: empty id list");
  for (int id : ids) {
    if (id < 0 || static_cast<std::size_t>(id) >= tv.rows()) {
      throw DataError("embedding: token id " + std::to_string(id) + " outside table");
    }
  }
  const std::size_t T = ids.size(), D = tv.cols();
  Node n;
  n.owned = RealArray({T, D});
  for (std::size_t t = 0; t < T; ++t) {
    const double* row = tv.data() + static_cast<std::size_t>(ids[t]) * D;
    double* orow = n.owned.data() + t * D;
    for (std::size_t d = 0; d < D; ++d) orow[d] = row[d];
  }
  n.parents = {table, 0, 0};
  n.arity = 1;
  n.needsGrad = recordGrad_ && nodes_[table].needsGrad;
  if (n.needsGrad) {
    n.back = [table, ids = std::move(ids), D](Tape& t, NodeId self) {
      const RealArray& g = t.nodes_[self].grad;
      RealArray& gt = t.gradRef(table);
      for (std::size_t r = 0; r < ids.size(); ++r) {
        double* grow = gt.data() + static_cast<std::size_t>(ids[r]) * D;
        const double* srow = g.data() + r * D;
        for (std::size_t d = 0; d < D; ++d) grow[d] += srow[d];
      }
    };
  }
  return push(std::move(n), "embedding");
}

NodeId Tape::layerNorm(NodeId x, NodeId gain, NodeId bias, double eps) {
  const RealArray& xv = expectMatrix(x, "layer_norm");
  const RealArray& gv = val(gain);
  const RealArray& bv = val(bias);
  const std::size_t T = xv.rows(), D = xv.cols();
  if (gv.size() != D || bv.size() != D) {
    throw ShapeError("layer_norm: gain/bias must have width cols(x)");
  }
  Node n;
  n.owned = RealArray({T, D});
  RealArray xhat({T, D});
  RealArray invStd({T});
  for (std::size_t t = 0; t < T; ++t) {
    const double* xrow = xv.data() + t * D;
    double mu = 0.0;
    for (std::size_t d = 0; d < D; ++d) mu += xrow[d];
    mu /= static_cast<double>(D);
    double var = 0.0;
    for (std::size_t d = 0; d < D; ++d) {
      const double c = xrow[d] - mu;
      var += c * c;
    }
    var /= static_cast<double>(D);
    const double inv = 1.0 / std::sqrt(var + eps);
    invStd[t] = inv;
    double* hrow = xhat.data() + t * D;
    double* orow = n.owned.data() + t * D;
    for (std::size_t d = 0; d < D; ++d) {
      hrow[d] = (xrow[d] - mu) * inv;
      orow[d] = hrow[d] * gv[d] + bv[d];
    }
  }
  n.parents = {x, gain, bias};
  n.arity = 3;
  n.needsGrad = recordGrad_ && (nodes_[x].needsGrad || nodes_[gain].needsGrad ||
                                nodes_[bias].needsGrad);
  if (n.needsGrad) {
    n.back = [x, gain, bias, T, D, xhat = std::move(xhat),
              invStd = std::move(invStd)](Tape& t, NodeId self) {
      const RealArray& g = t.nodes_[self].grad;
      const RealArray& gv2 = t.val(gain);
      if (t.nodes_[gain].needsGrad) {
        RealArray& gg = t.gradRef(gain);
        for (std::size_t r = 0; r < T; ++r) {
          for (std::size_t d = 0; d < D; ++d) gg[d] += g.at(r, d) * xhat.at(r, d);
        }
      }
      if (t.nodes_[bias].needsGrad) {
        RealArray& gb = t.gradRef(bias);
        for (std::size_t r = 0; r < T; ++r) {
          for (std::size_t d = 0; d < D; ++d) gb[d] += g.at(r, d);
        }
      }
      if (t.nodes_[x].needsGrad) {
        RealArray& gx = t.gradRef(x);
        for (std::size_t r = 0; r < T; ++r) {
          // h = gain .* g ; dx = inv * (h - mean(h) - xhat * mean(h .* xhat))
          double meanH = 0.0, meanHX = 0.0;
          for (std::size_t d = 0; d < D; ++d) {
            const double h = gv2[d] * g.at(r, d);
            meanH += h;
            meanHX += h * xhat.at(r, d);
          }
          meanH /= static_cast<double>(D);
          meanHX /= static_cast<double>(D);
          for (std::size_t d = 0; d < D; ++d) {
            const double h = gv2[d] * g.at(r, d);
            gx.at(r, d) += invStd[r] * (h - meanH - xhat.at(r, d) * meanHX);
          }
        }
      }
    };
  }
  return push(std::move(n), "layer_norm");
}

namespace {

// Softmax over the trailing axis, in place over a row view.
void softmaxRow(const double* in, double* out, std::size_t n) {
  double mx = in[0];
  for (std::size_t i = 1; i < n; ++i) mx = std::max(mx, in[i]);
  double z = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    out[i] = std::exp(in[i] - mx);
    z += out[i];
  }
  const double inv = 1.0 / z;
  for (std::size_t i = 0; i < n; ++i) out[i] *= inv;
}

}  // namespace

NodeId Tape::softmax(NodeId x) {
  const RealArray& xv = val(x);
  if (xv.rank() < 1 || xv.rank() > 2) throw ShapeError("softmax: rank-1 or rank-2 input");
  const std::size_t width = xv.shape().back();
  const std::size_t rows = xv.size() / width;
  Node n;
  n.owned = RealArray(xv.shape());
  for (std::size_t r = 0; r < rows; ++r) {
    softmaxRow(xv.data() + r * width, n.owned.data() + r * width, width);
  }
  n.parents = {x, 0, 0};
  n.arity = 1;
  n.needsGrad = recordGrad_ && nodes_[x].needsGrad;
  if (n.needsGrad) {
    n.back = [x, rows, width](Tape& t, NodeId self) {
      const RealArray& g = t.nodes_[self].grad;
      const RealArray& y = t.val(self);
      RealArray& gx = t.gradRef(x);
      for (std::size_t r = 0; r < rows; ++r) {
        const double* yrow = y.data() + r * width;
        const double* grow = g.data() + r * width;
        double dot = 0.0;
        for (std::size_t i = 0; i < width; ++i) dot += grow[i] * yrow[i];
        double* gxrow = gx.data() + r * width;
        for (std::size_t i = 0; i < width; ++i) gxrow[i] += yrow[i] * (grow[i] - dot);
      }
    };
  }
  return push(std::move(n), "softmax");
}

NodeId Tape::logSoftmax(NodeId x) {
  const RealArray& xv = val(x);
  if (xv.rank() < 1 || xv.rank() > 2) {
    throw ShapeError("log_softmax: rank-1 or rank-2 input");
  }
  const std::size_t width = xv.shape().back();
  const std::size_t rows = xv.size() / width;
  Node n;
  n.owned = RealArray(xv.shape());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* in = xv.data() + r * width;
    double* out = n.owned.data() + r * width;
    double mx = in[0];
    for (std::size_t i = 1; i < width; ++i) mx = std::max(mx, in[i]);
    double z = 0.0;
    for (std::size_t i = 0; i < width; ++i) z += std::exp(in[i] - mx);
    const double lse = mx + std::log(z);
    for (std::size_t i = 0; i < width; ++i) out[i] = in[i] - lse;
  }
  n.parents = {x, 0, 0};
  n.arity = 1;
  n.needsGrad = recordGrad_ && nodes_[x].needsGrad;
  if (n.needsGrad) {
    n.back = [x, rows, width](Tape& t, NodeId self) {
      const RealArray& g = t.nodes_[self].grad;
      const RealArray& y = t.val(self);
      RealArray& gx = t.gradRef(x);
      for (std::size_t r = 0; r < rows; ++r) {
        const double* yrow = y.data() + r * width;
        const double* grow = g.data() + r * width;
        double gsum = 0.0;
        for (std::size_t i = 0; i < width; ++i) gsum += grow[i];
        double* gxrow = gx.data() + r * width;
        for (std::size_t i = 0; i < width; ++i) {
          gxrow[i] += grow[i] - std::exp(yrow[i]) * gsum;
        }
      }
    };
  }
  return push(std::move(n), "log_softmax");
}

NodeId Tape::causalSelfAttention(NodeId q, NodeId k, NodeId v, int heads) {
  const RealArray& qv = expectMatrix(q, "causal_self_attention");
  const RealArray& kv = expectMatrix(k, "causal_self_attention");
  const RealArray& vv = expectMatrix(v, "causal_self_attention");
  if (!qv.sameShape(kv) || !qv.sameShape(vv)) {
    throw ShapeError("causal_self_attention: q/k/v shapes must match");
  }
  if (heads <= 0 || qv.cols() % static_cast<std::size_t>(heads) != 0) {
    throw ShapeError("causal_self_attention: head count must divide width");
  }
  const std::size_t T = qv.rows(), D = qv.cols();
  const std::size_t H = static_cast<std::size_t>(heads);
  const std::size_t dh = D / H;
  const double invSqrt = 1.0 / std::sqrt(static_cast<double>(dh));

  // probs[h][i][j] for j <= i; kept for backward.
  RealArray probs({H, T * T});
  Node n;
  n.owned = RealArray({T, D});
  for (std::size_t h = 0; h < H; ++h) {
    const std::size_t off = h * dh;
    double* prob = probs.data() + h * T * T;
    for (std::size_t i = 0; i < T; ++i) {
      // scores over j <= i
      double mx = -std::numeric_limits<double>::infinity();
      std::vector<double> srow(i + 1);
      const double* qi = qv.data() + i * D + off;
      for (std::size_t j = 0; j <= i; ++j) {
        const double* kj = kv.data() + j * D + off;
        double s = 0.0;
        for (std::size_t d = 0; d < dh; ++d) s += qi[d] * kj[d];
        srow[j] = s * invSqrt;
        mx = std::max(mx, srow[j]);
      }
      double z = 0.0;
      for (std::size_t j = 0; j <= i; ++j) {
        srow[j] = std::exp(srow[j] - mx);
        z += srow[j];
      }
      const double invZ = 1.0 / z;
      double* orow = n.owned.data() + i * D + off;
      for (std::size_t j = 0; j <= i; ++j) {
        const double p = srow[j] * invZ;
        prob[i * T + j] = p;
        const double* vj = vv.data() + j * D + off;
        for (std::size_t d = 0; d < dh; ++d) orow[d] += p * vj[d];
      }
    }
  }
  n.parents = {q, k, v};
  n.arity = 3;
  n.needsGrad = recordGrad_ &&
                (nodes_[q].needsGrad || nodes_[k].needsGrad || nodes_[v].needsGrad);
  if (n.needsGrad) {
    n.back = [q, k, v, T, D, H, dh, invSqrt, probs = std::move(probs)](Tape& t,
                                                                       NodeId self) {
      const RealArray& g = t.nodes_[self].grad;
      const RealArray& qv2 = t.val(q);
      const RealArray& kv2 = t.val(k);
      const RealArray& vv2 = t.val(v);
      RealArray& gq = t.gradRef(q);
      RealArray& gk = t.gradRef(k);
      RealArray& gv = t.gradRef(v);
      std::vector<double> dp(T), ds(T);
      for (std::size_t h = 0; h < H; ++h) {
        const std::size_t off = h * dh;
        const double* prob = probs.data() + h * T * T;
        for (std::size_t i = 0; i < T; ++i) {
          const double* grow = g.data() + i * D + off;
          // dP_ij = dO_i . V_j ; dV_j += P_ij dO_i
          double dot = 0.0;
          for (std::size_t j = 0; j <= i; ++j) {
            const double p = prob[i * T + j];
            const double* vj = vv2.data() + j * D + off;
            double d = 0.0;
            for (std::size_t e = 0; e < dh; ++e) d += grow[e] * vj[e];
            dp[j] = d;
            dot += d * p;
            double* gvj = gv.data() + j * D + off;
            for (std::size_t e = 0; e < dh; ++e) gvj[e] += p * grow[e];
          }
          // softmax backward within the causal row, then into q and k.
          const double* qi = qv2.data() + i * D + off;
          double* gqi = gq.data() + i * D + off;
          for (std::size_t j = 0; j <= i; ++j) {
            const double p = prob[i * T + j];
            const double dsij = p * (dp[j] - dot) * invSqrt;
            ds[j] = dsij;
            const double* kj = kv2.data() + j * D + off;
            double* gkj = gk.data() + j * D + off;
            for (std::size_t e = 0; e < dh; ++e) {
              gqi[e] += dsij * kj[e];
              gkj[e] += dsij * qi[e];
            }
          }
        }
      }
    };
  }
  return push(std::move(n), "causal_self_attention");
}

NodeId Tape::mseLoss(NodeId pred, RealArray target) {
  const RealArray& pv = val(pred);
  if (!pv.sameShape(target)) {
    throw ShapeError("mse: prediction/target shape mismatch " + pv.shapeString() +
                     " vs " + target.shapeString());
  }
  target.requireFinite("mse target");
  const double invN = 1.0 / static_cast<double>(pv.size());
  double acc = 0.0;
  for (std::size_t i = 0; i < pv.size(); ++i) {
    const double d = pv[i] - target[i];
    acc += d * d;
  }
  Node n;
  n.owned = RealArray::scalar(acc * invN);
  n.parents = {pred, 0, 0};
  n.arity = 1;
  n.needsGrad = recordGrad_ && nodes_[pred].needsGrad;
  if (n.needsGrad) {
    n.back = [pred, target = std::move(target), invN](Tape& t, NodeId self) {
      const double g = t.nodes_[self].grad[0];
      const RealArray& pv2 = t.val(pred);
      RealArray& gp = t.gradRef(pred);
      for (std::size_t i = 0; i < gp.size(); ++i) {
        gp[i] += g * 2.0 * (pv2[i] - target[i]) * invN;
      }
    };
  }
  return push(std::move(n), "mse");
}

GradientRecord Tape::backward(NodeId loss) {
  if (nodes_.empty()) {
    throw Error("Tape::backward called before any forward computation");
  }
  if (!recordGrad_) {
    throw Error("Tape::backward called on a no-grad tape");
  }
  if (backwardRan_) {
    throw Error("Tape::backward may run only once per tape");
  }
  if (loss >= nodes_.size()) throw Error("Tape::backward: invalid loss node");
  const RealArray& lv = val(loss);
  if (lv.size() != 1) {
    throw ShapeError("Tape::backward: loss must be scalar, got " + lv.shapeString());
  }
  backwardRan_ = true;

  gradRef(loss)[0] = 1.0;
  for (NodeId i = static_cast<NodeId>(nodes_.size()); i-- > 0;) {
    Node& n = nodes_[i];
    if (n.grad.empty() || !n.back) continue;
    n.back(*this, i);
  }

  GradientRecord rec;
  rec.loss = lv[0];
  for (std::size_t i = 0; i < boundParams_.size(); ++i) {
    const Node& leaf = nodes_[boundNodes_[i]];
    if (!leaf.grad.empty()) {
      rec.grads.push_back({boundParams_[i].name, leaf.grad});
    } else {
      rec.grads.push_back(
          {boundParams_[i].name, RealArray::zeros(boundParams_[i].value->shape())});
    }
  }
  for (const auto& e : rec.grads) {
    e.value.requireFinite("gradient of '" + e.name + "'");
  }
  return rec;
}

GradientRecord finiteDiffGradient(const std::function<double(const ParamSet&)>& lossFn,
                                  const ParamSet& params, double h) {
  if (!(h > 0.0)) throw ConfigError("finiteDiffGradient: step size must be positive");
  ParamSet work;
  for (const auto& e : params.entries()) work.add(e.name, e.value);

  GradientRecord rec;
  rec.loss = lossFn(params);
  if (!std::isfinite(rec.loss)) {
    throw NumericError("finiteDiffGradient: non-finite loss at base point");
  }
  for (auto& e : work.entries()) {
    RealArray grad(e.value.shape());
    for (std::size_t i = 0; i < e.value.size(); ++i) {
      const double orig = e.value[i];
      e.value[i] = orig + h;
      const double up = lossFn(work);
      e.value[i] = orig - h;
      const double down = lossFn(work);
      e.value[i] = orig;
      if (!std::isfinite(up) || !std::isfinite(down)) {
        throw NumericError("finiteDiffGradient: non-finite loss during probing");
      }
      grad[i] = (up - down) / (2.0 * h);
    }
    rec.grads.push_back({e.name, std::move(grad)});
  }
  return rec;
}

}  // namespace dvpo::numkit
