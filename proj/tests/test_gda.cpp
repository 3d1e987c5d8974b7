#include <cmath>

#include <Eigen/Dense>
#include <gtest/gtest.h>

#include "crg/gda.hpp"
#include "crg/objective.hpp"
#include "gda_oracle.hpp"
#include "support.hpp"

namespace crg {
namespace {

PositiveCache cache_from(const std::vector<std::vector<Vector>>& queues, std::size_t cap = 16) {
  PositiveCache c(queues.size(), queues.front().front().size(), cap);
  std::uint64_t id = 0;
  for (std::size_t k = 0; k < queues.size(); ++k) {
    for (const Vector& f : queues[k]) c.insert(k, CacheEntry{f, 0.1, id++, std::nullopt, 0});
  }
  return c;
}

TEST(ClassStats, HandComputedPool) {
  const PositiveCache c = cache_from({{{1.0, 0.0}, {0.0, 1.0}}});
  const ClassStats s = class_stats(c, Matrix(1, 2));
  EXPECT_EQ(s.total, 2u);
  EXPECT_DOUBLE_EQ(s.means(0, 0), 0.5);
  EXPECT_DOUBLE_EQ(s.means(0, 1), 0.5);
  EXPECT_DOUBLE_EQ(s.covariance(0, 0), 0.25);
  EXPECT_DOUBLE_EQ(s.covariance(0, 1), -0.25);
  EXPECT_DOUBLE_EQ(s.covariance(1, 0), -0.25);
  EXPECT_DOUBLE_EQ(s.covariance(1, 1), 0.25);
}

TEST(ClassStats, MatchesBruteForcePooledCovariance) {
  Rng rng(1);
  for (int t = 0; t < 50; ++t) {
    const std::size_t k = 2 + rng.index(4);
    const std::size_t d = 2 + rng.index(5);
    std::vector<std::vector<Vector>> queues(k);
    for (auto& q : queues) {
      const std::size_t n = 1 + rng.index(5);
      for (std::size_t i = 0; i < n; ++i) q.push_back(test::random_unit(rng, d));
    }
    const Matrix res = test::random_matrix(rng, k, d, 0.1);
    const ClassStats s = class_stats(cache_from(queues), res);

    Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(d, d);
    std::size_t total = 0;
    for (std::size_t c = 0; c < k; ++c) {
      std::vector<Eigen::VectorXd> xs;
      for (const Vector& f : queues[c]) {
        Eigen::VectorXd x(d);
        for (std::size_t i = 0; i < d; ++i) x[i] = f[i] + res(c, i);
        xs.push_back(x);
      }
      Eigen::VectorXd mu = Eigen::VectorXd::Zero(d);
      for (const auto& x : xs) mu += x;
      mu /= static_cast<double>(xs.size());
      for (std::size_t i = 0; i < d; ++i) ASSERT_NEAR(s.means(c, i), mu[i], 1e-14);
      for (const auto& x : xs) cov += (x - mu) * (x - mu).transpose();
      total += xs.size();
    }
    cov /= static_cast<double>(total);
    for (std::size_t i = 0; i < d; ++i) {
      for (std::size_t j = 0; j < d; ++j) ASSERT_NEAR(s.covariance(i, j), cov(i, j), 1e-14);
    }
  }
}

TEST(ClassStats, ResidualShiftMovesOnlyThatMean) {
  Rng rng(2);
  for (int t = 0; t < 100; ++t) {
    const std::size_t k = 3;
    const std::size_t d = 4;
    std::vector<std::vector<Vector>> queues(k);
    for (auto& q : queues) {
      for (int i = 0; i < 3; ++i) q.push_back(test::random_unit(rng, d));
    }
    const PositiveCache cache = cache_from(queues);
    const Matrix res = test::random_matrix(rng, k, d, 0.1);
    Matrix shifted = res;
    const std::size_t cls = rng.index(k);
    const Vector c = test::random_vector(rng, d);
    for (std::size_t i = 0; i < d; ++i) shifted(cls, i) += c[i];
    const ClassStats a = class_stats(cache, res);
    const ClassStats b = class_stats(cache, shifted);
    EXPECT_LE(test::max_abs_diff(a.covariance.flat(), b.covariance.flat()), 1e-12);
    for (std::size_t r = 0; r < k; ++r) {
      for (std::size_t i = 0; i < d; ++i) {
        const double expect = r == cls ? a.means(r, i) + c[i] : a.means(r, i);
        EXPECT_NEAR(b.means(r, i), expect, 1e-12);
      }
    }
  }
}

TEST(ClassStats, CovarianceSymmetric) {
  Rng rng(3);
  std::vector<std::vector<Vector>> queues(4);
  for (auto& q : queues) {
    for (int i = 0; i < 5; ++i) q.push_back(test::random_unit(rng, 7));
  }
  const ClassStats s = class_stats(cache_from(queues), test::random_matrix(rng, 4, 7, 0.1));
  for (std::size_t i = 0; i < 7; ++i) {
    for (std::size_t j = 0; j < 7; ++j) EXPECT_EQ(s.covariance(i, j), s.covariance(j, i));
  }
}

TEST(Cholesky, ReconstructsAndRejects) {
  Rng rng(4);
  const Matrix g = test::random_matrix(rng, 5, 5);
  Matrix a(5, 5);
  for (std::size_t i = 0; i < 5; ++i) {
    for (std::size_t j = 0; j < 5; ++j) {
      for (std::size_t t = 0; t < 5; ++t) a(i, j) += g(i, t) * g(j, t);
    }
    a(i, i) += 0.1;
  }
  const Matrix l = cholesky(a);
  for (std::size_t i = 0; i < 5; ++i) {
    for (std::size_t j = 0; j < 5; ++j) {
      if (j > i) {
        EXPECT_EQ(l(i, j), 0.0);
      }
      double s = 0.0;
      for (std::size_t t = 0; t < 5; ++t) s += l(i, t) * l(j, t);
      EXPECT_NEAR(s, a(i, j), 1e-12);
    }
  }
  EXPECT_THROW(cholesky(Matrix::from_rows({{1.0, 2.0}, {2.0, 1.0}})), NumericalError);
}

TEST(RegularizedPrecision, Examples) {
  const Matrix id = regularized_precision(Matrix::identity(3), 0.0);
  EXPECT_LE(test::max_abs_diff(id.flat(), Matrix::identity(3).flat()), 1e-12);

  const Matrix ridge = regularized_precision(Matrix(3, 3), 1e-3);
  const double eps = 1e-3 * kRidgeFloor;
  for (std::size_t i = 0; i < 3; ++i) {
    for (std::size_t j = 0; j < 3; ++j) EXPECT_NEAR(ridge(i, j), i == j ? 1.0 / eps : 0.0, 1e-3);
  }
}

TEST(RegularizedPrecision, MatchesEigenInverseProperty) {
  Rng rng(5);
  for (int t = 0; t < 100; ++t) {
    const std::size_t d = 2 + rng.index(8);
    const Eigen::MatrixXd cov = test::random_spd(rng, d);
    Matrix c(d, d);
    for (std::size_t i = 0; i < d; ++i) {
      for (std::size_t j = 0; j < d; ++j) c(i, j) = cov(i, j);
    }
    const double eps_cov = rng.uniform() * 1e-2;
    const Matrix p = regularized_precision(c, eps_cov);
    const double ridge = eps_cov * std::max(cov.trace() / static_cast<double>(d), kRidgeFloor);
    const Eigen::MatrixXd expect =
        (cov + ridge * Eigen::MatrixXd::Identity(d, d)).inverse();
    for (std::size_t i = 0; i < d; ++i) {
      for (std::size_t j = 0; j < d; ++j) {
        ASSERT_NEAR(p(i, j), expect(i, j), 1e-9 * (1.0 + std::abs(expect(i, j))));
        ASSERT_EQ(p(i, j), p(j, i));
      }
    }
  }
}

TEST(BuildGda, IdentityPrecision) {
  const GdaModel m = build_gda(Matrix::identity(3), Matrix::identity(3));
  for (std::size_t k = 0; k < 3; ++k) {
    for (std::size_t i = 0; i < 3; ++i) EXPECT_EQ(m.weights(k, i), k == i ? 1.0 : 0.0);
    EXPECT_NEAR(m.biases[k], std::log(1.0 / 3.0) - 0.5, 1e-15);
    EXPECT_NEAR(m.priors[k], 1.0 / 3.0, 1e-15);
  }
}

TEST(BuildGda, WeightsAndBiasesFollowDefinitionProperty) {
  Rng rng(6);
  for (int t = 0; t < 100; ++t) {
    const std::size_t k = 2 + rng.index(4);
    const std::size_t d = 2 + rng.index(6);
    const Matrix means = test::random_matrix(rng, k, d);
    const Eigen::MatrixXd p = test::random_spd(rng, d);
    Matrix prec(d, d);
    for (std::size_t i = 0; i < d; ++i) {
      for (std::size_t j = 0; j < d; ++j) prec(i, j) = p(i, j);
    }
    const GdaModel m = build_gda(means, prec);
    for (std::size_t c = 0; c < k; ++c) {
      Eigen::VectorXd mu(d);
      for (std::size_t i = 0; i < d; ++i) mu[i] = means(c, i);
      const Eigen::VectorXd w = p * mu;
      for (std::size_t i = 0; i < d; ++i) ASSERT_NEAR(m.weights(c, i), w[i], 1e-9);
      const double b = std::log(1.0 / static_cast<double>(k)) - 0.5 * mu.dot(p * mu);
      ASSERT_NEAR(m.biases[c], b, 1e-9);
    }
  }
}

TEST(GdaScores, TwoClassExample) {
  const GdaModel m = build_gda(Matrix::identity(2), Matrix::identity(2));
  const Vector h = gda_scores(m, Vector{1.0, 0.0});
  EXPECT_NEAR(h[0], 0.5 + std::log(0.5), 1e-15);
  EXPECT_NEAR(h[1], std::log(0.5) - 0.5, 1e-15);
  EXPECT_EQ(argmax(h), 0u);
}

TEST(GdaScores, BayesPosteriorEquivalence) {
  Rng rng(7);
  for (int t = 0; t < 200; ++t) {
    const test::GdaInstance inst = test::random_gda_instance(rng);
    ASSERT_LE(test::gda_posterior_error(inst), 1e-9) << "instance " << t;
  }
}

TEST(FitGda, InitialStateFromSentinelsIsPositiveDefinite) {
  Rng rng(8);
  EngineConfig cfg;
  cfg.num_classes = 5;
  cfg.dim = 6;
  auto [cache, tc] = init_caches(test::random_unit_rows(rng, 5, 6), cfg);
  const GdaModel m = fit_gda(cache, Matrix(5, 6), cfg.eps_cov);
  EXPECT_NO_THROW(cholesky(m.precision));
  // Zero covariance: pure ridge.
  EXPECT_NEAR(m.precision(0, 0), 1.0 / (cfg.eps_cov * kRidgeFloor), 1e-3);
}

TEST(FusedLogitsGda, IdenticalClassStatsReduceToNoGdaBranch) {
  Rng rng(9);
  for (int t = 0; t < 50; ++t) {
    const std::size_t k = 4;
    const std::size_t d = 5;
    Matrix means(k, d);
    const Vector mu = test::random_unit(rng, d);
    for (std::size_t c = 0; c < k; ++c) std::copy(mu.begin(), mu.end(), means.row(c).begin());
    const GdaModel m = build_gda(means, regularized_precision(Matrix::identity(d), 1e-3));
    const Matrix text = test::random_unit_rows(rng, k, d);
    const PrototypeState proto = build_prototype_state(test::random_matrix(rng, k, d), text,
                                                       ResidualSet::zeros(k, d));
    FusionParams p;
    p.tau = 0.5;
    const Vector f = test::random_unit(rng, d);
    const Vector with = softmax(fused_logits_gda(f, proto, m, p), p.tau);
    FusionParams off = p;
    off.lambda1 = 0.0;
    const Vector without = softmax(fused_logits_sim(f, proto, off), off.tau);
    EXPECT_LE(test::max_abs_diff(with, without), 1e-9);
  }
}

}  // namespace
}  // namespace crg
