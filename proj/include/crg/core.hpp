#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace crg {

// ---------------------------------------------------------------------------
// Errors
// ---------------------------------------------------------------------------

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Zero-norm vector where a direction was required. `row` is the offending
/// matrix row when the failure came from a row-wise operation.
class DegenerateVector : public Error {
 public:
  explicit DegenerateVector(std::string what, std::ptrdiff_t row = -1)
      : Error(std::move(what)), row_(row) {}
  std::ptrdiff_t row() const { return row_; }

 private:
  std::ptrdiff_t row_;
};

class NumericalError : public Error {
 public:
  using Error::Error;
};

class InvalidDistribution : public Error {
 public:
  using Error::Error;
};

class ConfigMismatch : public Error {
 public:
  using Error::Error;
};

class IndexError : public Error {
 public:
  using Error::Error;
};

class InternalInvariantViolation : public Error {
 public:
  using Error::Error;
};

class FilterEmpty : public Error {
 public:
  using Error::Error;
};

class InvalidInput : public Error {
 public:
  using Error::Error;
};

// ---------------------------------------------------------------------------
// Dense storage
// ---------------------------------------------------------------------------

using Vector = std::vector<double>;

/// Row-major dense matrix. Only the K x d and d x d shapes the pipeline needs.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  static Matrix identity(std::size_t n);
  static Matrix from_rows(const std::vector<Vector>& rows);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  bool empty() const { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  std::span<double> flat() { return data_; }
  std::span<const double> flat() const { return data_; }

  bool same_shape(const Matrix& o) const { return rows_ == o.rows_ && cols_ == o.cols_; }

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

// ---------------------------------------------------------------------------
// Vector primitives
// ---------------------------------------------------------------------------

double l2_norm(std::span<const double> v);

/// v / ||v||. Throws DegenerateVector on a zero (or non-finite) norm.
Vector normalize(std::span<const double> v);

/// Normalizes every row in place. Throws DegenerateVector carrying the row.
void normalize_rows(Matrix& m);

/// Cosine similarity; throws DegenerateVector if either input has zero norm.
double cosine(std::span<const double> a, std::span<const double> b);

/// Probabilities proportional to exp(logit / tau), computed with max-logit
/// subtraction. Throws NumericalError on non-finite logits or tau <= 0.
Vector softmax(std::span<const double> logits, double tau);

/// Shannon entropy in nats with 0 ln 0 = 0. Validates the distribution.
double entropy(std::span<const double> p);

/// Throws InvalidDistribution unless entries lie in [0,1] and sum to 1.
void check_distribution(std::span<const double> p, double tol = 1e-9);

std::size_t argmax(std::span<const double> v);

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

enum class DecisionRule { Similarity, Gaussian };

struct EngineConfig {
  std::size_t dim = 0;
  std::size_t num_classes = 0;

  double tau = 0.01;  // logits are divided by tau
  double lambda1 = 7.0;
  double lambda2 = 0.3;
  double beta = 5.0;
  double xi1 = 1.0;
  double xi2 = 10.0;
  double gamma = 2.0;
  double rho = 0.1;
  double tau_t = 0.1;
  double eta = 0.1;
  std::size_t queue_capacity = 12;

  double lr = 5e-4;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  double weight_decay = 0.0;

  double eps_cov = 1e-3;
  std::size_t n_views = 64;  // nominal; records carry their own view count
  std::uint64_t seed = 0;
  std::size_t ece_bins = 15;
  /// Rate at which the harness files a labeled sample under a wrong class.
  double insertion_noise = 0.0;

  // Ablation switches.
  bool use_gda = true;
  bool use_negative_cache = true;
  DecisionRule pseudo_label_rule = DecisionRule::Gaussian;
  bool negatives_from_raw_means = false;
  bool flip_confidence_threshold = false;
  bool persist_residuals = false;
  bool final_on_marginal = false;
  double negative_sign = 1.0;

  /// Throws ConfigMismatch when an invariant is violated.
  void validate() const;

  friend bool operator==(const EngineConfig&, const EngineConfig&) = default;
};

}  // namespace crg
