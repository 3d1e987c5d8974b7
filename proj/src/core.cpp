#include "crg/core.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "crg/kernels.hpp"

namespace crg {

Matrix Matrix::identity(std::size_t n) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

Matrix Matrix::from_rows(const std::vector<Vector>& rows) {
  if (rows.empty()) return {};
  Matrix m(rows.size(), rows.front().size());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r].size() != m.cols()) throw InvalidInput("ragged rows");
    std::copy(rows[r].begin(), rows[r].end(), m.row(r).begin());
  }
  return m;
}

double l2_norm(std::span<const double> v) { return std::sqrt(kernels::dot(v, v)); }

Vector normalize(std::span<const double> v) {
  const double n = l2_norm(v);
  if (!(n > 0.0) || !std::isfinite(n)) throw DegenerateVector("cannot normalize a zero-norm vector");
  Vector out(v.begin(), v.end());
  const double inv = 1.0 / n;
  for (double& x : out) x *= inv;
  return out;
}

void normalize_rows(Matrix& m) {
  for (std::size_t r = 0; r < m.rows(); ++r) {
    auto row = m.row(r);
    const double n = l2_norm(row);
    if (!(n > 0.0) || !std::isfinite(n)) {
      throw DegenerateVector("zero-norm row " + std::to_string(r), static_cast<std::ptrdiff_t>(r));
    }
    const double inv = 1.0 / n;
    for (double& x : row) x *= inv;
  }
}

double cosine(std::span<const double> a, std::span<const double> b) {
  const double na = l2_norm(a);
  const double nb = l2_norm(b);
  if (!(na > 0.0) || !(nb > 0.0)) throw DegenerateVector("cosine of a zero-norm vector");
  return std::clamp(kernels::dot(a, b) / (na * nb), -1.0, 1.0);
}

Vector softmax(std::span<const double> logits, double tau) {
  if (!(tau > 0.0)) throw NumericalError("softmax temperature must be positive");
  if (logits.empty()) throw InvalidInput("softmax of an empty vector");
  double mx = -std::numeric_limits<double>::infinity();
  for (double z : logits) {
    if (!std::isfinite(z)) throw NumericalError("non-finite logit");
    mx = std::max(mx, z);
  }
  Vector p(logits.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    p[i] = std::exp((logits[i] - mx) / tau);
    sum += p[i];
  }
  for (double& x : p) x /= sum;
  return p;
}

void check_distribution(std::span<const double> p, double tol) {
  if (p.empty()) throw InvalidDistribution("empty distribution");
  double sum = 0.0;
  for (double x : p) {
    if (!(x >= 0.0 && x <= 1.0)) throw InvalidDistribution("probability outside [0,1]");
    sum += x;
  }
  if (std::abs(sum - 1.0) > tol) throw InvalidDistribution("probabilities do not sum to 1");
}

double entropy(std::span<const double> p) {
  check_distribution(p);
  double h = 0.0;
  for (double x : p) {
    if (x > 0.0) h -= x * std::log(x);
  }
  return std::max(h, 0.0);
}

std::size_t argmax(std::span<const double> v) {
  return static_cast<std::size_t>(std::max_element(v.begin(), v.end()) - v.begin());
}

void EngineConfig::validate() const {
  auto fail = [](const std::string& m) { throw ConfigMismatch("invalid config: " + m); };
  if (num_classes < 2) fail("K must be at least 2");
  if (dim < 2) fail("d must be at least 2");
  if (queue_capacity < 1) fail("queue capacity M must be at least 1");
  if (!(rho > 0.0 && rho <= 1.0)) fail("rho must lie in (0, 1]");
  if (!(tau > 0.0)) fail("tau must be positive");
  if (!(eps_cov >= 0.0)) fail("eps_cov must be non-negative");
  if (!(beta > 0.0)) fail("beta must be positive");
  if (!(lambda1 >= 0.0) || !(lambda2 >= 0.0)) fail("lambda1 and lambda2 must be non-negative");
  if (!(eta >= 0.0 && eta <= 1.0)) fail("eta must lie in [0, 1]");
  if (!(lr >= 0.0)) fail("lr must be non-negative");
  if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0) || !(adam_beta2 >= 0.0 && adam_beta2 < 1.0)) {
    fail("adam betas must lie in [0, 1)");
  }
  if (ece_bins < 1) fail("ece_bins must be at least 1");
  if (!(insertion_noise >= 0.0 && insertion_noise <= 1.0)) fail("insertion_noise must lie in [0, 1]");
}

}  // namespace crg
