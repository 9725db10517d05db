#include <catch2/catch_amalgamated.hpp>

#include <sstream>

#include "lodfm/fm.hpp"
#include "lodfm/rng.hpp"

#include "support/fm_oracle.hpp"

using namespace lodfm;

TEST_CASE("fm prediction basics") {
  SECTION("zero model scores zero everywhere") {
    FmModel model;
    model.p = 4;
    model.m = 3;
    model.w.assign(4, 0.0);
    model.v.assign(12, 0.0);
    SparseVector x = SparseVector::from_entries({{0, 1.0}, {3, -2.0}});
    CHECK(fm_predict(model, x) == 0.0);
    CHECK(fm_predict_naive(model, x) == 0.0);
  }

  SECTION("hand-computed two-feature example") {
    // w0=0.1, w=(0.2,0.3), v_1=(1,0), v_2=(0.5,0.5), x=(1,1)
    // => 0.1 + 0.2 + 0.3 + <v1,v2> = 1.1
    FmModel model;
    model.p = 2;
    model.m = 2;
    model.w0 = 0.1;
    model.w = {0.2, 0.3};
    model.v = {1.0, 0.0, 0.5, 0.5};
    SparseVector x = SparseVector::from_entries({{0, 1.0}, {1, 1.0}});
    CHECK_THAT(fm_predict(model, x), Catch::Matchers::WithinAbs(1.1, 1e-12));
    CHECK_THAT(fm_predict_naive(model, x), Catch::Matchers::WithinAbs(1.1, 1e-12));
  }

  SECTION("single nonzero feature has no pairwise term") {
    Rng rng(7);
    oracle::FmInstance inst = oracle::random_fm_instance(rng);
    SparseVector x = SparseVector::from_entries({{0, 1.5}});
    const double expected = inst.model.w0 + inst.model.w[0] * 1.5;
    CHECK_THAT(fm_predict(inst.model, x), Catch::Matchers::WithinRel(expected, 1e-12));
  }

  SECTION("out-of-range index is a dimension error") {
    FmModel model;
    model.p = 2;
    model.m = 1;
    model.w.assign(2, 0.0);
    model.v.assign(2, 0.0);
    SparseVector x = SparseVector::from_entries({{5, 1.0}});
    CHECK_THROWS_AS(fm_predict(model, x), DimensionError);
    CHECK_THROWS_AS(fm_predict_naive(model, x), DimensionError);
    CHECK_THROWS_AS(fm_gradient(model, x), DimensionError);
  }
}

TEST_CASE("linear-time prediction matches the naive double sum") {
  Rng rng(20240812);
  for (int trial = 0; trial < 300; ++trial) {
    oracle::FmInstance inst = oracle::random_fm_instance(rng);
    const double fast = fm_predict(inst.model, inst.x);
    const double naive = fm_predict_naive(inst.model, inst.x);
    CHECK(std::abs(fast - naive) <= 1e-9 * (1.0 + std::abs(naive)));
  }
}

TEST_CASE("prediction is linear in w at fixed V") {
  Rng rng(99);
  for (int trial = 0; trial < 50; ++trial) {
    oracle::FmInstance inst = oracle::random_fm_instance(rng);
    FmModel a = inst.model, b = inst.model, sum = inst.model, zero = inst.model;
    for (std::size_t i = 0; i < a.p; ++i) {
      a.w[i] = rng.normal(0, 1);
      b.w[i] = rng.normal(0, 1);
      sum.w[i] = a.w[i] + b.w[i];
      zero.w[i] = 0.0;
    }
    const double lhs = fm_predict(sum, inst.x);
    const double rhs = fm_predict(a, inst.x) + fm_predict(b, inst.x) -
                       fm_predict(zero, inst.x);
    CHECK_THAT(lhs, Catch::Matchers::WithinRel(rhs, 1e-9) ||
                        Catch::Matchers::WithinAbs(rhs, 1e-9));
  }
}

TEST_CASE("analytic gradient structure") {
  SECTION("zero V zeroes every dv") {
    FmModel model;
    model.p = 3;
    model.m = 2;
    model.w = {0.5, 0.5, 0.5};
    model.v.assign(6, 0.0);
    SparseVector x = SparseVector::from_entries({{0, 1.0}, {2, 2.0}});
    FmGradient g = fm_gradient(model, x);
    for (const auto& [i, dv] : g.v)
      for (double d : dv) CHECK(d == 0.0);
  }

  SECTION("one-hot x: dw = 1, dv = 0") {
    Rng rng(3);
    oracle::FmInstance inst = oracle::random_fm_instance(rng);
    SparseVector x = SparseVector::from_entries({{0, 1.0}});
    FmGradient g = fm_gradient(inst.model, x);
    CHECK(g.w0 == 1.0);
    REQUIRE(g.w.size() == 1);
    CHECK(g.w[0].second == 1.0);
    REQUIRE(g.v.size() == 1);
    for (double d : g.v[0].second) CHECK_THAT(d, Catch::Matchers::WithinAbs(0.0, 1e-15));
  }

  SECTION("gradient entries cover exactly the touched features") {
    Rng rng(4);
    oracle::FmInstance inst = oracle::random_fm_instance(rng);
    FmGradient g = fm_gradient(inst.model, inst.x);
    REQUIRE(g.w.size() == inst.x.nnz());
    REQUIRE(g.v.size() == inst.x.nnz());
    for (std::size_t k = 0; k < inst.x.nnz(); ++k) {
      CHECK(g.w[k].first == inst.x.entries()[k].index);
      CHECK(g.v[k].first == inst.x.entries()[k].index);
    }
  }
}

TEST_CASE("analytic gradient matches central finite differences") {
  Rng rng(20240813);
  for (int trial = 0; trial < 60; ++trial) {
    oracle::FmInstance inst = oracle::random_fm_instance(rng, 30, 6, 10);
    const FmGradient analytic = fm_gradient(inst.model, inst.x);
    const oracle::FdGradient fd = oracle::finite_difference_gradient(inst.model, inst.x);
    auto close = [](double a, double b) {
      return std::abs(a - b) <= 1e-4 * std::max(1.0, std::abs(b));
    };
    CHECK(close(analytic.w0, fd.w0));
    for (std::size_t k = 0; k < analytic.w.size(); ++k)
      CHECK(close(analytic.w[k].second, fd.w[k]));
    for (std::size_t k = 0; k < analytic.v.size(); ++k)
      for (std::size_t f = 0; f < inst.model.m; ++f)
        CHECK(close(analytic.v[k].second[f], fd.v[k][f]));
  }
}

TEST_CASE("model initialization is seeded and shaped correctly") {
  FmHyperparams hp;
  hp.factors = 4;
  hp.seed = 123;
  FmModel a = FmModel::init(10, hp);
  FmModel b = FmModel::init(10, hp);
  CHECK(a == b);
  CHECK(a.w0 == 0.0);
  for (double w : a.w) CHECK(w == 0.0);
  bool any_nonzero = false;
  for (double v : a.v) any_nonzero |= (v != 0.0);
  CHECK(any_nonzero);
  hp.seed = 124;
  CHECK(FmModel::init(10, hp) != a);
}

TEST_CASE("checkpoints round-trip bit-exactly and verify the index fingerprint") {
  Rng rng(5);
  oracle::FmInstance inst = oracle::random_fm_instance(rng);
  std::stringstream ss;
  save_fm(inst.model, "deadbeefdeadbeef", ss);
  FmModel loaded = load_fm(ss, "deadbeefdeadbeef");
  CHECK(loaded == inst.model);

  std::stringstream ss2;
  save_fm(inst.model, "deadbeefdeadbeef", ss2);
  CHECK_THROWS_AS(load_fm(ss2, "0000000000000000"), StructuralError);

  std::stringstream bad("not a checkpoint\n");
  CHECK_THROWS_AS(load_fm(bad, ""), ParseError);
}
