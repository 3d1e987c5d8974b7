#include <cmath>

#include <gtest/gtest.h>

#include "crg/prototypes.hpp"
#include "support.hpp"

namespace crg {
namespace {

TEST(Calibrate, Examples) {
  Rng rng(1);
  const Matrix base = test::random_unit_rows(rng, 4, 5);
  const Matrix same = calibrate(base, Matrix(4, 5));
  EXPECT_LE(test::max_abs_diff(same.flat(), base.flat()), 1e-15);

  const Matrix r = calibrate(Matrix::from_rows({{1.0, 0.0}}), Matrix::from_rows({{0.0, 1.0}}));
  EXPECT_NEAR(r(0, 0), 0.70710678118654752, 1e-15);
  EXPECT_NEAR(r(0, 1), 0.70710678118654752, 1e-15);

  try {
    calibrate(Matrix::from_rows({{0.0, 1.0}, {1.0, 0.0}}), Matrix::from_rows({{0.0, 0.0}, {-1.0, 0.0}}));
    FAIL() << "expected DegenerateVector";
  } catch (const DegenerateVector& e) {
    EXPECT_EQ(e.row(), 1);
  }
}

TEST(Calibrate, UnitRowsProperty) {
  Rng rng(2);
  for (int t = 0; t < 300; ++t) {
    const std::size_t k = 2 + rng.index(6);
    const std::size_t d = 2 + rng.index(10);
    const Matrix base = test::random_matrix(rng, k, d);
    const Matrix out = calibrate(base, test::random_matrix(rng, k, d, 0.3));
    for (std::size_t r = 0; r < k; ++r) EXPECT_NEAR(l2_norm(out.row(r)), 1.0, 1e-9);
    const Matrix zero = calibrate(base, Matrix(k, d));
    for (std::size_t r = 0; r < k; ++r) EXPECT_NEAR(cosine(zero.row(r), base.row(r)), 1.0, 1e-12);
  }
}

TEST(NegativePrototypes, Examples) {
  const Matrix two = Matrix::from_rows({{1.0, 2.0}, {3.0, 4.0}});
  const Matrix n2 = negative_prototypes(two);
  EXPECT_EQ(n2(0, 0), 3.0);
  EXPECT_EQ(n2(1, 1), 2.0);

  const Matrix n3 = negative_prototypes(Matrix::identity(3));
  EXPECT_EQ(n3(0, 0), 0.0);
  EXPECT_EQ(n3(0, 1), 0.5);
  EXPECT_EQ(n3(0, 2), 0.5);

  const Matrix same = Matrix::from_rows({{0.6, 0.8}, {0.6, 0.8}, {0.6, 0.8}});
  EXPECT_LE(test::max_abs_diff(negative_prototypes(same).flat(), same.flat()), 1e-15);

  EXPECT_THROW(negative_prototypes(Matrix::from_rows({{1.0, 0.0}})), ConfigMismatch);
}

TEST(NegativePrototypes, AlgebraicIdentityProperty) {
  Rng rng(3);
  for (int t = 0; t < 500; ++t) {
    const std::size_t k = 2 + rng.index(8);
    const std::size_t d = 1 + rng.index(8);
    const Matrix pos = test::random_unit_rows(rng, k, d);
    const Matrix neg = negative_prototypes(pos);
    for (std::size_t c = 0; c < d; ++c) {
      double total = 0.0;
      for (std::size_t j = 0; j < k; ++j) total += pos(j, c);
      for (std::size_t r = 0; r < k; ++r) {
        // Explicit mean over the other rows.
        double others = 0.0;
        for (std::size_t j = 0; j < k; ++j) {
          if (j != r) others += pos(j, c);
        }
        ASSERT_NEAR(neg(r, c), others / static_cast<double>(k - 1), 1e-12);
        ASSERT_NEAR(static_cast<double>(k - 1) * neg(r, c) + pos(r, c), total, 1e-12);
      }
    }
  }
}

TEST(BuildPrototypeState, InitialState) {
  Rng rng(4);
  const Matrix text = test::random_unit_rows(rng, 4, 6);
  const PrototypeState s = build_prototype_state(text, text, ResidualSet::zeros(4, 6));
  EXPECT_LE(test::max_abs_diff(s.pos.flat(), s.text.flat()), 1e-15);
  const Matrix expected_neg = [&] {
    Matrix n = negative_prototypes(s.pos);
    normalize_rows(n);
    return n;
  }();
  EXPECT_LE(test::max_abs_diff(s.neg.flat(), expected_neg.flat()), 1e-15);
  for (std::size_t r = 0; r < 4; ++r) EXPECT_NEAR(l2_norm(s.neg.row(r)), 1.0, 1e-9);
}

TEST(BuildPrototypeState, TwoClassNegativesSwapPositives) {
  Rng rng(5);
  const Matrix text = test::random_unit_rows(rng, 2, 3);
  const PrototypeState s = build_prototype_state(text, text, ResidualSet::zeros(2, 3));
  for (std::size_t c = 0; c < 3; ++c) {
    EXPECT_NEAR(s.neg(0, c), s.pos(1, c), 1e-15);
    EXPECT_NEAR(s.neg(1, c), s.pos(0, c), 1e-15);
  }
}

TEST(BuildPrototypeState, TextResidualOnlyTouchesText) {
  Rng rng(6);
  const Matrix text = test::random_unit_rows(rng, 3, 5);
  const Matrix means = test::random_matrix(rng, 3, 5);
  ResidualSet res = ResidualSet::zeros(3, 5);
  const PrototypeState a = build_prototype_state(means, text, res);
  res.text = test::random_matrix(rng, 3, 5, 0.2);
  const PrototypeState b = build_prototype_state(means, text, res);
  EXPECT_NE(a.text, b.text);
  EXPECT_EQ(a.pos, b.pos);
  EXPECT_EQ(a.neg, b.neg);
}

TEST(BuildPrototypeState, PureAndOptionAware) {
  Rng rng(7);
  const Matrix text = test::random_unit_rows(rng, 3, 5);
  const Matrix means = test::random_matrix(rng, 3, 5);
  ResidualSet res = ResidualSet::zeros(3, 5);
  res.pos = test::random_matrix(rng, 3, 5, 0.3);
  const PrototypeState a = build_prototype_state(means, text, res);
  const PrototypeState b = build_prototype_state(means, text, res);
  EXPECT_EQ(a.pos, b.pos);
  EXPECT_EQ(a.neg, b.neg);
  EXPECT_EQ(a.raw_pos_means, means);

  const PrototypeState raw = build_prototype_state(means, text, res, {true, true});
  Matrix expected = negative_prototypes(means);
  normalize_rows(expected);
  EXPECT_LE(test::max_abs_diff(raw.neg.flat(), expected.flat()), 1e-15);

  const PrototypeState none = build_prototype_state(means, text, res, {false, false});
  EXPECT_TRUE(none.neg.empty());
}

TEST(BuildPrototypeState, DegenerateRowIsTagged) {
  const Matrix text = Matrix::from_rows({{1.0, 0.0}, {0.0, 1.0}});
  ResidualSet res = ResidualSet::zeros(2, 2);
  res.pos(1, 1) = -1.0;
  try {
    build_prototype_state(text, text, res);
    FAIL() << "expected DegeneratePrototype";
  } catch (const DegeneratePrototype& e) {
    EXPECT_EQ(e.kind(), PrototypeKind::Positive);
    EXPECT_EQ(e.row(), 1);
  }
}

TEST(BuildPrototypeState, FromCaches) {
  Rng rng(8);
  EngineConfig cfg;
  cfg.num_classes = 3;
  cfg.dim = 4;
  const Matrix text = test::random_unit_rows(rng, 3, 4);
  auto [cache, tc] = init_caches(text, cfg);
  const PrototypeState s = build_prototype_state(cache, tc, ResidualSet::zeros(3, 4));
  EXPECT_LE(test::max_abs_diff(s.pos.flat(), text.flat()), 1e-15);
}

}  // namespace
}  // namespace crg
