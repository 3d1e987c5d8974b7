#include "crg/gda.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "crg/kernels.hpp"

namespace crg {

ClassStats class_stats(const PositiveCache& cache, const Matrix& pos_residual) {
  const std::size_t k_classes = cache.num_classes();
  const std::size_t d = cache.dim();
  if (pos_residual.rows() != k_classes || pos_residual.cols() != d) {
    throw ConfigMismatch("positive residual shape does not match the cache");
  }
  ClassStats s{Matrix(k_classes, d), Matrix(d, d), 0};
  Vector dev(d);
  for (std::size_t k = 0; k < k_classes; ++k) {
    const auto& entries = cache.queue(k).entries();
    if (entries.empty()) throw InternalInvariantViolation("queue " + std::to_string(k) + " is empty");
    auto mu = s.means.row(k);
    for (const CacheEntry& e : entries) kernels::axpy(1.0, e.feature, mu);
    const double inv = 1.0 / static_cast<double>(entries.size());
    for (double& x : mu) x *= inv;
    // The residual shifts every member and therefore the mean; deviations are
    // unchanged by it.
    kernels::axpy(1.0, pos_residual.row(k), mu);
    for (const CacheEntry& e : entries) {
      for (std::size_t c = 0; c < d; ++c) dev[c] = e.feature[c] + pos_residual(k, c) - mu[c];
      for (std::size_t r = 0; r < d; ++r) {
        if (dev[r] != 0.0) kernels::axpy(dev[r], dev, s.covariance.row(r));
      }
    }
    s.total += entries.size();
  }
  const double inv_total = 1.0 / static_cast<double>(s.total);
  for (double& x : s.covariance.flat()) x *= inv_total;
  // Enforce exact symmetry.
  for (std::size_t r = 0; r < d; ++r) {
    for (std::size_t c = r + 1; c < d; ++c) {
      const double avg = 0.5 * (s.covariance(r, c) + s.covariance(c, r));
      s.covariance(r, c) = avg;
      s.covariance(c, r) = avg;
    }
  }
  return s;
}

Matrix cholesky(const Matrix& a) {
  const std::size_t n = a.rows();
  if (a.cols() != n) throw InvalidInput("cholesky needs a square matrix");
  Matrix l(n, n);
  for (std::size_t j = 0; j < n; ++j) {
    auto lj = l.row(j);
    const double diag = a(j, j) - kernels::dot(lj.first(j), lj.first(j));
    if (!(diag > 0.0) || !std::isfinite(diag)) {
      throw NumericalError("matrix is not positive definite (pivot " + std::to_string(j) + ")");
    }
    const double ljj = std::sqrt(diag);
    lj[j] = ljj;
    for (std::size_t i = j + 1; i < n; ++i) {
      auto li = l.row(i);
      li[j] = (a(i, j) - kernels::dot(li.first(j), lj.first(j))) / ljj;
    }
  }
  return l;
}

Matrix regularized_precision(const Matrix& covariance, double eps_cov) {
  const std::size_t d = covariance.rows();
  if (covariance.cols() != d || d == 0) throw InvalidInput("covariance must be square");
  double trace = 0.0;
  for (std::size_t i = 0; i < d; ++i) trace += covariance(i, i);
  const double ridge = eps_cov * std::max(trace / static_cast<double>(d), kRidgeFloor);
  Matrix a = covariance;
  for (std::size_t i = 0; i < d; ++i) a(i, i) += ridge;

  const Matrix l = cholesky(a);
  // Invert L by forward substitution, then precision = L^-T L^-1.
  Matrix linv(d, d);
  for (std::size_t i = 0; i < d; ++i) {
    linv(i, i) = 1.0 / l(i, i);
    for (std::size_t j = 0; j < i; ++j) {
      double s = 0.0;
      for (std::size_t k = j; k < i; ++k) s += l(i, k) * linv(k, j);
      linv(i, j) = -s / l(i, i);
    }
  }
  // Work on the transpose so the inner products are contiguous.
  Matrix linv_t(d, d);
  for (std::size_t i = 0; i < d; ++i) {
    for (std::size_t j = 0; j <= i; ++j) linv_t(j, i) = linv(i, j);
  }
  Matrix prec(d, d);
  for (std::size_t i = 0; i < d; ++i) {
    for (std::size_t j = 0; j <= i; ++j) {
      // (L^-T L^-1)_{ij} = sum_k linv(k,i) linv(k,j), k >= max(i,j) = i
      const auto ri = linv_t.row(i).subspan(i);
      const auto rj = linv_t.row(j).subspan(i);
      const double v = kernels::dot(ri, rj);
      prec(i, j) = v;
      prec(j, i) = v;
    }
  }
  for (double x : prec.flat()) {
    if (!std::isfinite(x)) throw NumericalError("non-finite precision entry");
  }
  return prec;
}

GdaModel build_gda(const Matrix& means, const Matrix& precision) {
  const std::size_t k_classes = means.rows();
  const std::size_t d = means.cols();
  if (precision.rows() != d || precision.cols() != d) {
    throw ConfigMismatch("precision shape does not match class means");
  }
  GdaModel m;
  m.means = means;
  m.precision = precision;
  m.weights = Matrix(k_classes, d);
  m.biases.assign(k_classes, 0.0);
  m.priors.assign(k_classes, 1.0 / static_cast<double>(k_classes));
  const double log_prior = std::log(1.0 / static_cast<double>(k_classes));
  for (std::size_t k = 0; k < k_classes; ++k) {
    kernels::gemv(precision.flat(), d, d, means.row(k), m.weights.row(k));
    m.biases[k] = log_prior - 0.5 * kernels::dot(means.row(k), m.weights.row(k));
  }
  return m;
}

GdaModel fit_gda(const PositiveCache& cache, const Matrix& pos_residual, double eps_cov) {
  ClassStats stats = class_stats(cache, pos_residual);
  GdaModel m = build_gda(stats.means, regularized_precision(stats.covariance, eps_cov));
  m.covariance = std::move(stats.covariance);
  return m;
}

Vector gda_scores(const GdaModel& model, std::span<const double> f) {
  const std::size_t k_classes = model.weights.rows();
  if (f.size() != model.weights.cols()) throw ConfigMismatch("feature dimension mismatch");
  Vector h(k_classes);
  kernels::gemv(model.weights.flat(), k_classes, model.weights.cols(), f, h);
  for (std::size_t k = 0; k < k_classes; ++k) h[k] += model.biases[k];
  return h;
}

}  // namespace crg
