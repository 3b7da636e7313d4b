// Copyright (c) 2026 the dvpo authors
// SPDX-License-Identifier: Apache-2.0
#include "dvpo/numkit/op_check.hpp"

#include <algorithm>
#include <cmath>

#include "dvpo/common/hash.hpp"

namespace dvpo::numkit {

double maxRelativeError(const GradientRecord& a, const GradientRecord& b) {
  if (a.grads.size() != b.grads.size()) {
    throw ShapeError("maxRelativeError: gradient records differ in entry count");
  }
  double worst = 0.0;
  for (std::size_t p = 0; p < a.grads.size(); ++p) {
    const RealArray& ga = a.grads[p].value;
    const RealArray* gb = b.find(a.grads[p].name);
    if (gb == nullptr || !ga.sameShape(*gb)) {
      throw ShapeError("maxRelativeError: mismatched entry '" + a.grads[p].name + "'");
    }
    for (std::size_t i = 0; i < ga.size(); ++i) {
      const double denom = std::max({1e-6, std::abs(ga[i]), std::abs((*gb)[i])});
      worst = std::max(worst, std::abs(ga[i] - (*gb)[i]) / denom);
    }
  }
  return worst;
}

double gradientCheck(const std::function<NodeId(Tape&, const ParamSet&)>& buildLoss,
                     const ParamSet& params, double h) {
  Tape tape;
  const NodeId loss = buildLoss(tape, params);
  const GradientRecord reverse = tape.backward(loss);
  const GradientRecord central = finiteDiffGradient(
      [&](const ParamSet& p) {
        Tape t;
        return t.scalarValue(buildLoss(t, p));
      },
      params, h);
  return maxRelativeError(reverse, central);
}

namespace {

RealArray randomArray(Rng& rng, std::vector<std::size_t> shape, double lo, double hi) {
  RealArray a(std::move(shape));
  for (double& v : a.values()) v = rng.uniform(lo, hi);
  return a;
}

// Uniform values with |v - center| >= margin for every kink center.
RealArray randomArrayAvoiding(Rng& rng, std::vector<std::size_t> shape, double lo,
                              double hi, const std::vector<double>& kinks,
                              double margin) {
  RealArray a(std::move(shape));
  for (double& v : a.values()) {
    for (int attempt = 0; attempt < 64; ++attempt) {
      v = rng.uniform(lo, hi);
      bool clear = true;
      for (double k : kinks) {
        if (std::abs(v - k) < margin) clear = false;
      }
      if (clear) break;
    }
  }
  return a;
}

// Reduces an op output to a scalar through a fixed random linear functional,
// so the check is sensitive to every output coordinate.
NodeId probe(Tape& t, NodeId out, const RealArray& weights) {
  return t.sum(t.mulConstant(out, weights));
}

using Builder = std::function<NodeId(Tape&, const ParamSet&)>;

double runCheck(const ParamSet& params, const Builder& build) {
  return gradientCheck(build, params);
}

std::vector<OpGradientCheck> makeRegistry() {
  std::vector<OpGradientCheck> reg;
  auto entry = [&reg](std::string name, std::function<double(Rng&)> fn) {
    reg.push_back({std::move(name), std::move(fn)});
  };

  entry("add", [](Rng& rng) {
    ParamSet ps;
    ps.add("a", randomArray(rng, {3, 4}, -2, 2));
    ps.add("b", randomArray(rng, {3, 4}, -2, 2));
    RealArray w = randomArray(rng, {3, 4}, -1, 1);
    return runCheck(ps, [w](Tape& t, const ParamSet& p) {
      return probe(t, t.add(t.param(p, "a"), t.param(p, "b")), w);
    });
  });

  entry("sub", [](Rng& rng) {
    ParamSet ps;
    ps.add("a", randomArray(rng, {3, 4}, -2, 2));
    ps.add("b", randomArray(rng, {3, 4}, -2, 2));
    RealArray w = randomArray(rng, {3, 4}, -1, 1);
    return runCheck(ps, [w](Tape& t, const ParamSet& p) {
      return probe(t, t.sub(t.param(p, "a"), t.param(p, "b")), w);
    });
  });

  entry("mul", [](Rng& rng) {
    ParamSet ps;
    ps.add("a", randomArray(rng, {3, 4}, -2, 2));
    ps.add("b", randomArray(rng, {3, 4}, -2, 2));
    RealArray w = randomArray(rng, {3, 4}, -1, 1);
    return runCheck(ps, [w](Tape& t, const ParamSet& p) {
      return probe(t, t.mul(t.param(p, "a"), t.param(p, "b")), w);
    });
  });

  entry("min", [](Rng& rng) {
    ParamSet ps;
    RealArray a = randomArray(rng, {3, 4}, -2, 2);
    RealArray b(a.shape());
    // Keep a clear winner per coordinate so the FD probe stays on one branch.
    for (std::size_t i = 0; i < b.size(); ++i) {
      b[i] = a[i] + (rng.uniform() < 0.5 ? -1.0 : 1.0) * rng.uniform(0.2, 1.0);
    }
    ps.add("a", std::move(a));
    ps.add("b", std::move(b));
    RealArray w = randomArray(rng, {3, 4}, -1, 1);
    return runCheck(ps, [w](Tape& t, const ParamSet& p) {
      return probe(t, t.minElem(t.param(p, "a"), t.param(p, "b")), w);
    });
  });

  entry("exp", [](Rng& rng) {
    ParamSet ps;
    ps.add("a", randomArray(rng, {3, 4}, -2, 2));
    RealArray w = randomArray(rng, {3, 4}, -1, 1);
    return runCheck(ps, [w](Tape& t, const ParamSet& p) {
      return probe(t, t.expElem(t.param(p, "a")), w);
    });
  });

  entry("log", [](Rng& rng) {
    ParamSet ps;
    ps.add("a", randomArray(rng, {3, 4}, 0.5, 3.0));
    RealArray w = randomArray(rng, {3, 4}, -1, 1);
    return runCheck(ps, [w](Tape& t, const ParamSet& p) {
      return probe(t, t.logElem(t.param(p, "a")), w);
    });
  });

  entry("clip", [](Rng& rng) {
    ParamSet ps;
    ps.add("a", randomArrayAvoiding(rng, {3, 4}, -2, 2, {-1.0, 1.0}, 0.1));
    RealArray w = randomArray(rng, {3, 4}, -1, 1);
    return runCheck(ps, [w](Tape& t, const ParamSet& p) {
      return probe(t, t.clip(t.param(p, "a"), -1.0, 1.0), w);
    });
  });

  entry("relu", [](Rng& rng) {
    ParamSet ps;
    ps.add("a", randomArrayAvoiding(rng, {3, 4}, -2, 2, {0.0}, 0.1));
    RealArray w = randomArray(rng, {3, 4}, -1, 1);
    return runCheck(ps, [w](Tape& t, const ParamSet& p) {
      return probe(t, t.relu(t.param(p, "a")), w);
    });
  });

  entry("scale", [](Rng& rng) {
    ParamSet ps;
    ps.add("a", randomArray(rng, {3, 4}, -2, 2));
    RealArray w = randomArray(rng, {3, 4}, -1, 1);
    return runCheck(ps, [w](Tape& t, const ParamSet& p) {
      return probe(t, t.scale(t.param(p, "a"), -1.7), w);
    });
  });

  entry("add_scalar", [](Rng& rng) {
    ParamSet ps;
    ps.add("a", randomArray(rng, {3, 4}, -2, 2));
    RealArray w = randomArray(rng, {3, 4}, -1, 1);
    return runCheck(ps, [w](Tape& t, const ParamSet& p) {
      return probe(t, t.addScalar(t.param(p, "a"), 0.31), w);
    });
  });

  entry("mul_constant", [](Rng& rng) {
    ParamSet ps;
    ps.add("a", randomArray(rng, {3, 4}, -2, 2));
    RealArray c = randomArray(rng, {3, 4}, -2, 2);
    RealArray w = randomArray(rng, {3, 4}, -1, 1);
    return runCheck(ps, [w, c](Tape& t, const ParamSet& p) {
      return probe(t, t.mulConstant(t.param(p, "a"), c), w);
    });
  });

  entry("sum", [](Rng& rng) {
    ParamSet ps;
    ps.add("a", randomArray(rng, {3, 4}, -2, 2));
    return runCheck(ps,
                    [](Tape& t, const ParamSet& p) { return t.sum(t.param(p, "a")); });
  });

  entry("mean", [](Rng& rng) {
    ParamSet ps;
    ps.add("a", randomArray(rng, {3, 4}, -2, 2));
    return runCheck(ps,
                    [](Tape& t, const ParamSet& p) { return t.mean(t.param(p, "a")); });
  });

  entry("sum_rows", [](Rng& rng) {
    ParamSet ps;
    ps.add("a", randomArray(rng, {3, 4}, -2, 2));
    RealArray w = randomArray(rng, {3}, -1, 1);
    return runCheck(ps, [w](Tape& t, const ParamSet& p) {
      return probe(t, t.sumRows(t.param(p, "a")), w);
    });
  });

  entry("slice_rows", [](Rng& rng) {
    ParamSet ps;
    ps.add("a", randomArray(rng, {5, 3}, -2, 2));
    RealArray w = randomArray(rng, {3, 3}, -1, 1);
    return runCheck(ps, [w](Tape& t, const ParamSet& p) {
      return probe(t, t.sliceRows(t.param(p, "a"), 1, 3), w);
    });
  });

  entry("pick_per_row", [](Rng& rng) {
    ParamSet ps;
    ps.add("a", randomArray(rng, {4, 5}, -2, 2));
    std::vector<int> cols;
    for (int r = 0; r < 4; ++r) cols.push_back(rng.uniformInt(0, 4));
    RealArray w = randomArray(rng, {4}, -1, 1);
    return runCheck(ps, [w, cols](Tape& t, const ParamSet& p) {
      return probe(t, t.pickPerRow(t.param(p, "a"), cols), w);
    });
  });

  entry("concat_rows", [](Rng& rng) {
    ParamSet ps;
    ps.add("a", randomArray(rng, {2, 3}, -2, 2));
    ps.add("b", randomArray(rng, {4, 3}, -2, 2));
    RealArray w = randomArray(rng, {6, 3}, -1, 1);
    return runCheck(ps, [w](Tape& t, const ParamSet& p) {
      return probe(t, t.concatRows(t.param(p, "a"), t.param(p, "b")), w);
    });
  });

  entry("stack_scalars", [](Rng& rng) {
    ParamSet ps;
    ps.add("a", randomArray(rng, {1}, -2, 2));
    ps.add("b", randomArray(rng, {1}, -2, 2));
    RealArray w = randomArray(rng, {3}, -1, 1);
    return runCheck(ps, [w](Tape& t, const ParamSet& p) {
      NodeId a = t.param(p, "a");
      NodeId b = t.param(p, "b");
      return probe(t, t.stackScalars({a, t.constantScalar(0.5), b}), w);
    });
  });

  entry("matmul", [](Rng& rng) {
    ParamSet ps;
    ps.add("a", randomArray(rng, {3, 4}, -2, 2));
    ps.add("b", randomArray(rng, {4, 2}, -2, 2));
    RealArray w = randomArray(rng, {3, 2}, -1, 1);
    return runCheck(ps, [w](Tape& t, const ParamSet& p) {
      return probe(t, t.matmul(t.param(p, "a"), t.param(p, "b")), w);
    });
  });

  entry("affine", [](Rng& rng) {
    ParamSet ps;
    ps.add("x", randomArray(rng, {3, 4}, -2, 2));
    ps.add("w", randomArray(rng, {4, 2}, -1, 1));
    ps.add("b", randomArray(rng, {2}, -1, 1));
    RealArray w = randomArray(rng, {3, 2}, -1, 1);
    return runCheck(ps, [w](Tape& t, const ParamSet& p) {
      return probe(t, t.affine(t.param(p, "x"), t.param(p, "w"), t.param(p, "b")), w);
    });
  });

  entry("embedding", [](Rng& rng) {
    ParamSet ps;
    ps.add("table", randomArray(rng, {6, 3}, -1, 1));
    std::vector<int> ids = {0, 2, 2, 5};  // repeated id exercises accumulation
    RealArray w = randomArray(rng, {4, 3}, -1, 1);
    return runCheck(ps, [w, ids](Tape& t, const ParamSet& p) {
      return probe(t, t.embedding(t.param(p, "table"), ids), w);
    });
  });

  entry("layer_norm", [](Rng& rng) {
    ParamSet ps;
    ps.add("x", randomArray(rng, {3, 6}, -2, 2));
    ps.add("gain", randomArray(rng, {6}, 0.5, 1.5));
    ps.add("bias", randomArray(rng, {6}, -0.5, 0.5));
    RealArray w = randomArray(rng, {3, 6}, -1, 1);
    return runCheck(ps, [w](Tape& t, const ParamSet& p) {
      return probe(t, t.layerNorm(t.param(p, "x"), t.param(p, "gain"), t.param(p, "bias")),
                   w);
    });
  });

  entry("softmax", [](Rng& rng) {
    ParamSet ps;
    ps.add("x", randomArray(rng, {3, 5}, -2, 2));
    RealArray w = randomArray(rng, {3, 5}, -1, 1);
    return runCheck(ps, [w](Tape& t, const ParamSet& p) {
      return probe(t, t.softmax(t.param(p, "x")), w);
    });
  });

  entry("log_softmax", [](Rng& rng) {
    ParamSet ps;
    ps.add("x", randomArray(rng, {3, 5}, -2, 2));
    RealArray w = randomArray(rng, {3, 5}, -1, 1);
    return runCheck(ps, [w](Tape& t, const ParamSet& p) {
      return probe(t, t.logSoftmax(t.param(p, "x")), w);
    });
  });

  entry("causal_self_attention", [](Rng& rng) {
    ParamSet ps;
    ps.add("q", randomArray(rng, {4, 6}, -1, 1));
    ps.add("k", randomArray(rng, {4, 6}, -1, 1));
    ps.add("v", randomArray(rng, {4, 6}, -1, 1));
    RealArray w = randomArray(rng, {4, 6}, -1, 1);
    return runCheck(ps, [w](Tape& t, const ParamSet& p) {
      return probe(
          t, t.causalSelfAttention(t.param(p, "q"), t.param(p, "k"), t.param(p, "v"), 2),
          w);
    });
  });

  entry("mse", [](Rng& rng) {
    ParamSet ps;
    ps.add("pred", randomArray(rng, {3, 4}, -2, 2));
    RealArray target = randomArray(rng, {3, 4}, -2, 2);
    return runCheck(ps, [target](Tape& t, const ParamSet& p) {
      return t.mseLoss(t.param(p, "pred"), target);
    });
  });

  return reg;
}

}  // namespace

const std::vector<OpGradientCheck>& opGradientChecks() {
  static const std::vector<OpGradientCheck> registry = makeRegistry();
  return registry;
}

std::uint64_t opSetHash() {
  HashAccumulator h;
  for (const auto& check : opGradientChecks()) h.str(check.name);
  return h.digest();
}

}  // namespace dvpo::numkit
