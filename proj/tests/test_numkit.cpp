// Copyright (c) 2026 the dvpo authors
// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>

#include "dvpo/common/rng.hpp"
#include "dvpo/numkit/checkpoint.hpp"
#include "dvpo/numkit/op_check.hpp"
#include "dvpo/numkit/optimizer.hpp"
#include "dvpo/numkit/tape.hpp"

using namespace dvpo;
using namespace dvpo::numkit;

namespace {

std::filesystem::path tempFile(const char* name) {
  auto dir = std::filesystem::temp_directory_path() / "dvpo_tests";
  std::filesystem::create_directories(dir);
  return dir / name;
}

}  // namespace

TEST_CASE("softmax symmetry and normalization") {
  Tape t;
  NodeId logits = t.constant(RealArray({2}, {0.0, 0.0}));
  NodeId out = t.softmax(logits);
  CHECK(t.value(out)[0] == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(t.value(out)[1] == doctest::Approx(0.5).epsilon(1e-12));

  Rng rng(7);
  Tape t2;
  RealArray x({5, 9});
  for (double& v : x.values()) v = rng.uniform(-4, 4);
  NodeId sm = t2.softmax(t2.constant(x));
  const RealArray& y = t2.value(sm);
  for (std::size_t r = 0; r < 5; ++r) {
    double rowSum = 0.0;
    for (std::size_t c = 0; c < 9; ++c) {
      CHECK(y.at(r, c) >= 0.0);
      rowSum += y.at(r, c);
    }
    CHECK(rowSum == doctest::Approx(1.0).epsilon(1e-9));
  }
}

TEST_CASE("affine with zero weights and bias produces zeros") {
  Tape t;
  NodeId x = t.constant(RealArray({3, 4}, {1, -2, 3, 4, 5, 6, 7, 8, -9, 10, 11, 12}));
  NodeId w = t.constant(RealArray::zeros({4, 2}));
  NodeId b = t.constant(RealArray::zeros({2}));
  NodeId y = t.affine(x, w, b);
  for (double v : t.value(y).values()) CHECK(v == 0.0);
}

TEST_CASE("two-layer network matches hand-evaluated matrix chain") {
  // Oracle: plain nested loops, no tape involvement.
  Rng rng(0);
  const std::size_t T = 3, I = 4, H = 5, O = 2;
  RealArray x({T, I}), w1({I, H}), b1({H}), w2({H, O}), b2({O});
  for (double& v : x.values()) v = rng.uniform(-1, 1);
  for (double& v : w1.values()) v = rng.uniform(-1, 1);
  for (double& v : b1.values()) v = rng.uniform(-1, 1);
  for (double& v : w2.values()) v = rng.uniform(-1, 1);
  for (double& v : b2.values()) v = rng.uniform(-1, 1);

  RealArray hidden({T, H});
  for (std::size_t t0 = 0; t0 < T; ++t0) {
    for (std::size_t h = 0; h < H; ++h) {
      double acc = b1[h];
      for (std::size_t i = 0; i < I; ++i) acc += x.at(t0, i) * w1.at(i, h);
      hidden.at(t0, h) = acc > 0.0 ? acc : 0.0;
    }
  }
  RealArray expected({T, O});
  for (std::size_t t0 = 0; t0 < T; ++t0) {
    for (std::size_t o = 0; o < O; ++o) {
      double acc = b2[o];
      for (std::size_t h = 0; h < H; ++h) acc += hidden.at(t0, h) * w2.at(h, o);
      expected.at(t0, o) = acc;
    }
  }

  Tape t;
  NodeId y = t.affine(t.relu(t.affine(t.constant(x), t.constant(w1), t.constant(b1))),
                      t.constant(w2), t.constant(b2));
  const RealArray& got = t.value(y);
  REQUIRE(got.sameShape(expected));
  for (std::size_t i = 0; i < got.size(); ++i) {
    CHECK(got[i] == doctest::Approx(expected[i]).epsilon(1e-12));
  }
}

TEST_CASE("backward: analytic derivatives on scalars") {
  ParamSet ps;
  ps.add("p", RealArray::scalar(3.0));

  SUBCASE("loss = p^2 has gradient 2p") {
    Tape t;
    NodeId p = t.param(ps, "p");
    NodeId loss = t.sum(t.mul(p, p));
    auto rec = t.backward(loss);
    CHECK(rec.loss == doctest::Approx(9.0));
    CHECK((*rec.find("p"))[0] == doctest::Approx(6.0).epsilon(1e-12));
  }

  SUBCASE("loss constant in p has zero gradient") {
    Tape t;
    (void)t.param(ps, "p");
    NodeId loss = t.sum(t.constant(RealArray::scalar(42.0)));
    auto rec = t.backward(loss);
    CHECK((*rec.find("p"))[0] == 0.0);
  }
}

TEST_CASE("backward error paths") {
  SUBCASE("backward before any forward") {
    Tape t;
    CHECK_THROWS_AS((void)t.backward(0), Error);
  }
  SUBCASE("non-scalar loss") {
    Tape t;
    NodeId x = t.constant(RealArray({2}, {1.0, 2.0}));
    NodeId y = t.add(x, x);
    CHECK_THROWS_AS((void)t.backward(y), ShapeError);
  }
  SUBCASE("shape mismatch") {
    Tape t;
    NodeId a = t.constant(RealArray({2}, {1.0, 2.0}));
    NodeId b = t.constant(RealArray({3}, {1.0, 2.0, 3.0}));
    CHECK_THROWS_AS((void)t.add(a, b), ShapeError);
  }
  SUBCASE("non-finite intermediate aborts with diagnostic") {
    Tape t;
    NodeId a = t.constant(RealArray({1}, {-1.0}));
    CHECK_THROWS_AS((void)t.logElem(a), NumericError);
  }
}

TEST_CASE("every registered op matches central differences") {
  Rng rng(123);
  for (const auto& check : opGradientChecks()) {
    for (int round = 0; round < 3; ++round) {
      Rng sub = rng.split(static_cast<std::uint64_t>(round) * 1000 + 17);
      const double err = check.maxRelativeError(sub);
      INFO("op ", check.name, " round ", round);
      CHECK(err <= 1e-4);
    }
  }
}

TEST_CASE("optimizerStep: zero gradient leaves parameters unchanged") {
  ParamSet ps;
  ps.add("p", RealArray({2}, {1.5, -0.5}));
  const auto before = ps.fingerprint();

  GradientRecord g;
  g.grads.push_back({"p", RealArray::zeros({2})});
  OptimizerState st;
  st.config.learningRate = 0.1;
  optimizerStep(ps, g, st);
  CHECK(ps.fingerprint() == before);
  CHECK(st.step == 1);
}

TEST_CASE("optimizerStep: descent direction on p^2") {
  ParamSet ps;
  ps.add("p", RealArray::scalar(1.0));
  OptimizerState st;
  st.config.learningRate = 1e-2;

  Tape t;
  NodeId p = t.param(ps, "p");
  auto rec = t.backward(t.sum(t.mul(p, p)));
  optimizerStep(ps, rec, st);
  CHECK(std::abs(ps.get("p")[0]) < 1.0);
}

TEST_CASE("optimizerStep: 200 steps reach the quadratic optimum") {
  // f(p) = (p0 - 1)^2 + 2 (p1 + 0.5)^2, closed-form minimum 0 at (1, -0.5).
  ParamSet ps;
  ps.add("p", RealArray({2}, {0.0, 0.0}));
  OptimizerState st;
  st.config.learningRate = 0.05;

  double loss = 0.0;
  for (int step = 0; step < 200; ++step) {
    Tape t;
    NodeId p = t.param(ps, "p");
    NodeId d = t.sub(p, t.constant(RealArray({2}, {1.0, -0.5})));
    NodeId sq = t.mul(d, d);
    NodeId weighted = t.mulConstant(sq, RealArray({2}, {1.0, 2.0}));
    auto rec = t.backward(t.sum(weighted));
    loss = rec.loss;
    optimizerStep(ps, rec, st);
  }
  CHECK(loss < 1e-6);
}

TEST_CASE("optimizerStep is a pure function of its inputs") {
  auto run = [] {
    ParamSet ps;
    ps.add("a", RealArray({3}, {0.3, -0.7, 1.1}));
    GradientRecord g;
    g.grads.push_back({"a", RealArray({3}, {0.01, -0.02, 0.05})});
    OptimizerState st;
    st.config.learningRate = 3e-3;
    for (int i = 0; i < 5; ++i) optimizerStep(ps, g, st);
    return ps.fingerprint();
  };
  CHECK(run() == run());
}

TEST_CASE("finiteDiffGradient on simple functions") {
  ParamSet ps;
  ps.add("p", RealArray::scalar(3.0));

  auto square = [](const ParamSet& p) {
    const double v = p.get("p")[0];
    return v * v;
  };
  auto rec = finiteDiffGradient(square, ps, 1e-5);
  CHECK((*rec.find("p"))[0] == doctest::Approx(6.0).epsilon(1e-6));

  auto constant = [](const ParamSet&) { return 4.2; };
  auto rec2 = finiteDiffGradient(constant, ps, 1e-5);
  CHECK(std::abs((*rec2.find("p"))[0]) <= 1e-9);
}

TEST_CASE("ParamSet fingerprint changes iff content changes") {
  ParamSet a;
  a.add("x", RealArray({2}, {1.0, 2.0}));
  a.add("y", RealArray::scalar(3.0));
  ParamSet b;
  b.add("x", RealArray({2}, {1.0, 2.0}));
  b.add("y", RealArray::scalar(3.0));
  CHECK(a.fingerprint() == b.fingerprint());

  b.get("y")[0] = 3.0000001;
  CHECK(a.fingerprint() != b.fingerprint());
}

TEST_CASE("checkpoint round-trip preserves the fingerprint") {
  Rng rng(9);
  ParamSet ps;
  RealArray w({4, 3});
  for (double& v : w.values()) v = rng.gaussian();
  ps.add("layer.w", std::move(w));
  ps.add("layer.b", RealArray({3}, {0.25, -1.5, 1e-17}));

  const auto path = tempFile("roundtrip.ckpt");
  nlohmann::json extra{{"role", "test"}};
  saveCheckpoint(path, ps, opSetHash(), extra);
  auto loaded = loadCheckpoint(path);
  CHECK(loaded.params.fingerprint() == ps.fingerprint());
  CHECK(loaded.opSetHash == opSetHash());
  CHECK(loaded.extra.at("role") == "test");

  SUBCASE("corrupt file is rejected") {
    std::FILE* f = std::fopen(path.c_str(), "r+b");
    REQUIRE(f != nullptr);
    std::fputc('X', f);
    std::fclose(f);
    CHECK_THROWS_AS((void)loadCheckpoint(path), IoError);
  }
}

TEST_CASE("min/clip arithmetic used by the surrogate objective") {
  Tape t;
  NodeId r = t.constant(RealArray::scalar(1.5));
  NodeId clipped = t.clip(r, 0.8, 1.2);
  CHECK(t.scalarValue(clipped) == doctest::Approx(1.2));
  NodeId m = t.minElem(r, clipped);
  CHECK(t.scalarValue(m) == doctest::Approx(1.2));
}
