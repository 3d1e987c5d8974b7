#include "crg/prototypes.hpp"

#include <cmath>

#include "crg/kernels.hpp"

namespace crg {

bool ResidualSet::all_finite() const {
  for (const Matrix* m : {&text, &pos, &neg}) {
    for (double x : m->flat()) {
      if (!std::isfinite(x)) return false;
    }
  }
  return true;
}

Matrix calibrate(const Matrix& base, const Matrix& residual) {
  if (!base.same_shape(residual)) throw ConfigMismatch("residual shape does not match base");
  Matrix out = base;
  kernels::axpy(1.0, residual.flat(), out.flat());
  normalize_rows(out);
  return out;
}

Matrix negative_prototypes(const Matrix& pos) {
  const std::size_t k = pos.rows();
  if (k < 2) throw ConfigMismatch("negative prototypes need at least two classes");
  Vector total(pos.cols(), 0.0);
  for (std::size_t r = 0; r < k; ++r) kernels::axpy(1.0, pos.row(r), total);
  const double inv = 1.0 / static_cast<double>(k - 1);
  Matrix neg(k, pos.cols());
  for (std::size_t r = 0; r < k; ++r) {
    auto out = neg.row(r);
    auto p = pos.row(r);
    for (std::size_t c = 0; c < pos.cols(); ++c) out[c] = (total[c] - p[c]) * inv;
  }
  return neg;
}

namespace {

Matrix calibrate_tagged(const Matrix& base, const Matrix& residual, PrototypeKind kind) {
  try {
    return calibrate(base, residual);
  } catch (const DegenerateVector& e) {
    throw DegeneratePrototype(kind, e.row());
  }
}

}  // namespace

PrototypeState build_prototype_state(const Matrix& pos_means, const Matrix& text_cache,
                                     const ResidualSet& res, const PrototypeOptions& opts) {
  PrototypeState s;
  s.text = calibrate_tagged(text_cache, res.text, PrototypeKind::Text);
  s.pos = calibrate_tagged(pos_means, res.pos, PrototypeKind::Positive);
  if (opts.with_negatives) {
    const Matrix neg_base =
        negative_prototypes(opts.negatives_from_raw_means ? pos_means : s.pos);
    s.neg = calibrate_tagged(neg_base, res.neg, PrototypeKind::Negative);
  }
  s.raw_pos_means = pos_means;
  return s;
}

PrototypeState build_prototype_state(const PositiveCache& cache, const TextCache& tc,
                                     const ResidualSet& res, const PrototypeOptions& opts) {
  return build_prototype_state(cache.class_means(), tc.prototypes, res, opts);
}

}  // namespace crg
