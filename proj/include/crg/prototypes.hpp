#pragma once

#include "crg/cache.hpp"
#include "crg/core.hpp"

namespace crg {

/// Learnable additive corrections for the text, positive and negative
/// prototype matrices. Each is K x d.
struct ResidualSet {
  Matrix text;
  Matrix pos;
  Matrix neg;

  static ResidualSet zeros(std::size_t num_classes, std::size_t dim) {
    return {Matrix(num_classes, dim), Matrix(num_classes, dim), Matrix(num_classes, dim)};
  }

  bool all_finite() const;

  friend bool operator==(const ResidualSet&, const ResidualSet&) = default;
};

/// The three calibrated prototype sets. `raw_pos_means` keeps the cache means
/// before the positive residual is applied.
struct PrototypeState {
  Matrix text;
  Matrix pos;
  Matrix neg;
  Matrix raw_pos_means;
};

/// Row-wise normalize(base + residual). DegenerateVector reports the row.
Matrix calibrate(const Matrix& base, const Matrix& residual);

/// Row k = mean of every other row. Throws ConfigMismatch for fewer than two rows.
Matrix negative_prototypes(const Matrix& pos);

struct PrototypeOptions {
  /// Average the raw cache means instead of the calibrated positive rows.
  bool negatives_from_raw_means = false;
  /// When false the negative set is left empty.
  bool with_negatives = true;
};

/// Which of the three matrices a degenerate row came from.
enum class PrototypeKind { Text, Positive, Negative };

class DegeneratePrototype : public DegenerateVector {
 public:
  DegeneratePrototype(PrototypeKind kind, std::ptrdiff_t row)
      : DegenerateVector("degenerate prototype row " + std::to_string(row), row), kind_(kind) {}
  PrototypeKind kind() const { return kind_; }

 private:
  PrototypeKind kind_;
};

/// Composes text = calibrate(T, R_T), pos = calibrate(means, R_pos),
/// neg = calibrate(negative_prototypes(pos), R_neg).
PrototypeState build_prototype_state(const Matrix& pos_means, const Matrix& text_cache,
                                     const ResidualSet& res, const PrototypeOptions& opts = {});

PrototypeState build_prototype_state(const PositiveCache& cache, const TextCache& tc,
                                     const ResidualSet& res, const PrototypeOptions& opts = {});

}  // namespace crg
