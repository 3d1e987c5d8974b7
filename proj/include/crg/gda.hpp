#pragma once

#include "crg/cache.hpp"
#include "crg/core.hpp"

namespace crg {

/// Per-class means and the pooled within-class covariance of cached features.
struct ClassStats {
  Matrix means;       // K x d
  Matrix covariance;  // d x d
  std::size_t total = 0;
};

/// Shifts every entry of queue k by residual row k (no re-normalization),
/// then pools deviations from each class mean: (1/N) sum (x - mu_k)(x - mu_k)^T.
ClassStats class_stats(const PositiveCache& cache, const Matrix& pos_residual);

/// Lower-triangular L with L L^T = a. Throws NumericalError if a is not
/// positive definite.
Matrix cholesky(const Matrix& a);

/// (cov + eps I)^-1 with eps = eps_cov * max(trace(cov)/d, 1e-6).
Matrix regularized_precision(const Matrix& covariance, double eps_cov);

inline constexpr double kRidgeFloor = 1e-6;

/// Linear discriminant with shared covariance and uniform priors.
/// Scores are h_k(f) = w_k . f + b_k.
struct GdaModel {
  Matrix means;
  Matrix covariance;
  Matrix precision;
  Matrix weights;  // w_k = precision * mu_k
  Vector biases;   // b_k = ln(1/K) - mu_k^T precision mu_k / 2
  Vector priors;   // 1/K each
};

GdaModel build_gda(const Matrix& means, const Matrix& precision);

/// Stats, ridge precision and classifier in one call.
GdaModel fit_gda(const PositiveCache& cache, const Matrix& pos_residual, double eps_cov);

Vector gda_scores(const GdaModel& model, std::span<const double> f);

}  // namespace crg
