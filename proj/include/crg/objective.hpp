#pragma once

#include <vector>

#include "crg/core.hpp"
#include "crg/gda.hpp"
#include "crg/prototypes.hpp"

namespace crg {

struct FusionParams {
  double lambda1 = 7.0;
  double lambda2 = 0.3;
  double beta = 5.0;
  double tau = 0.01;
  bool use_negative = true;
  /// Sign applied to the negative term (+1 adds it as written).
  double negative_sign = 1.0;

  static FusionParams from(const EngineConfig& cfg);
};

/// lambda1 * exp(-beta (1 - x)).
double pos_term(double x, const FusionParams& p);
/// lambda2 * exp(beta (1 - x)).
double neg_term(double x, const FusionParams& p);

/// logit_k = f.t_k + pos_term(f.v+_k) + neg_term(f.v-_k). Softmax with tau
/// is left to the caller.
Vector fused_logits_sim(std::span<const double> f, const PrototypeState& proto,
                        const FusionParams& p);

/// Same with the positive term replaced by lambda1 * h_k(f).
Vector fused_logits_gda(std::span<const double> f, const PrototypeState& proto,
                        const GdaModel& gda, const FusionParams& p);

/// Indices of the max(1, floor(rho N)) lowest-entropy views, ties to the
/// lower index, returned in ascending index order.
std::vector<std::size_t> select_views(std::span<const double> view_entropies, double rho);

/// Entropy of the mean of `dists`. Throws FilterEmpty for an empty list.
double tpt_loss(const std::vector<Vector>& dists);

/// sum over ordered pairs m != n of exp(-gamma ||t_m - t_n||^2).
double inter_text_loss(const Matrix& text, double gamma);

/// sum_c cos(v+_c, v-_c).
double pos_neg_loss(const Matrix& pos, const Matrix& neg);

// ---------------------------------------------------------------------------
// Training objective over the residuals
// ---------------------------------------------------------------------------

/// Fixed inputs of one sample's optimization step.
struct ObjectiveInputs {
  Matrix text_base;          // text cache rows before the text residual
  Matrix pos_means;          // raw positive cache means
  std::vector<Vector> views; // selected views
};

struct ObjectiveParams {
  FusionParams fusion;
  double xi1 = 1.0;
  double xi2 = 10.0;
  double gamma = 2.0;
  bool negatives_from_raw_means = false;

  static ObjectiveParams from(const EngineConfig& cfg);
};

struct LossBreakdown {
  double tpt = 0.0;
  double inter_text = 0.0;
  double pos_neg = 0.0;
  double total = 0.0;
};

LossBreakdown total_loss(const ObjectiveInputs& in, const ResidualSet& res,
                         const ObjectiveParams& p);

struct LossAndGrad {
  LossBreakdown loss;
  ResidualSet grad;
};

/// Exact gradient of total_loss with respect to all three residuals,
/// including the row normalizations and the dependence of the negative
/// prototypes on the calibrated positives.
LossAndGrad grad_total(const ObjectiveInputs& in, const ResidualSet& res,
                       const ObjectiveParams& p);

// ---------------------------------------------------------------------------
// AdamW
// ---------------------------------------------------------------------------

struct AdamWConfig {
  double lr = 5e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;

  static AdamWConfig from(const EngineConfig& cfg);
};

struct OptimizerState {
  std::size_t step = 0;
  ResidualSet m;
  ResidualSet v;

  static OptimizerState fresh(std::size_t num_classes, std::size_t dim) {
    return {0, ResidualSet::zeros(num_classes, dim), ResidualSet::zeros(num_classes, dim)};
  }
};

void adamw_step(ResidualSet& res, const ResidualSet& grads, OptimizerState& state,
                const AdamWConfig& cfg);

}  // namespace crg
