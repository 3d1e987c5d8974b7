#include "crg/objective.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "crg/kernels.hpp"

namespace crg {

FusionParams FusionParams::from(const EngineConfig& cfg) {
  return {cfg.lambda1, cfg.lambda2, cfg.beta, cfg.tau, cfg.use_negative_cache, cfg.negative_sign};
}

ObjectiveParams ObjectiveParams::from(const EngineConfig& cfg) {
  return {FusionParams::from(cfg), cfg.xi1, cfg.xi2, cfg.gamma, cfg.negatives_from_raw_means};
}

AdamWConfig AdamWConfig::from(const EngineConfig& cfg) {
  return {cfg.lr, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps, cfg.weight_decay};
}

double pos_term(double x, const FusionParams& p) {
  return p.lambda1 * std::exp(-p.beta * (1.0 - x));
}

double neg_term(double x, const FusionParams& p) {
  return p.lambda2 * std::exp(p.beta * (1.0 - x));
}

Vector fused_logits_sim(std::span<const double> f, const PrototypeState& proto,
                        const FusionParams& p) {
  const std::size_t k_classes = proto.text.rows();
  Vector logits(k_classes);
  for (std::size_t k = 0; k < k_classes; ++k) {
    double z = kernels::dot(f, proto.text.row(k));
    z += pos_term(kernels::dot(f, proto.pos.row(k)), p);
    if (p.use_negative) z += p.negative_sign * neg_term(kernels::dot(f, proto.neg.row(k)), p);
    logits[k] = z;
  }
  return logits;
}

Vector fused_logits_gda(std::span<const double> f, const PrototypeState& proto,
                        const GdaModel& gda, const FusionParams& p) {
  const std::size_t k_classes = proto.text.rows();
  const Vector h = gda_scores(gda, f);
  Vector logits(k_classes);
  for (std::size_t k = 0; k < k_classes; ++k) {
    double z = kernels::dot(f, proto.text.row(k));
    z += p.lambda1 * h[k];
    if (p.use_negative) z += p.negative_sign * neg_term(kernels::dot(f, proto.neg.row(k)), p);
    logits[k] = z;
  }
  return logits;
}

std::vector<std::size_t> select_views(std::span<const double> view_entropies, double rho) {
  const std::size_t n = view_entropies.size();
  if (n == 0) throw FilterEmpty("no views to select from");
  if (!(rho > 0.0 && rho <= 1.0)) throw InvalidInput("rho must lie in (0, 1]");
  const auto want = static_cast<std::size_t>(std::floor(rho * static_cast<double>(n) + 1e-9));
  const std::size_t m = std::clamp<std::size_t>(want, 1, n);
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    return view_entropies[a] < view_entropies[b];
  });
  idx.resize(m);
  std::sort(idx.begin(), idx.end());
  return idx;
}

double tpt_loss(const std::vector<Vector>& dists) {
  if (dists.empty()) throw FilterEmpty("no views passed the entropy filter");
  Vector mean(dists.front().size(), 0.0);
  for (const Vector& p : dists) kernels::axpy(1.0, p, mean);
  const double inv = 1.0 / static_cast<double>(dists.size());
  for (double& x : mean) x *= inv;
  return entropy(mean);
}

double inter_text_loss(const Matrix& text, double gamma) {
  double total = 0.0;
  const std::size_t k_classes = text.rows();
  for (std::size_t m = 0; m < k_classes; ++m) {
    for (std::size_t n = 0; n < k_classes; ++n) {
      if (m == n) continue;
      double d2 = 0.0;
      for (std::size_t c = 0; c < text.cols(); ++c) {
        const double diff = text(m, c) - text(n, c);
        d2 += diff * diff;
      }
      total += std::exp(-gamma * d2);
    }
  }
  return total;
}

double pos_neg_loss(const Matrix& pos, const Matrix& neg) {
  if (!pos.same_shape(neg)) throw ConfigMismatch("positive/negative prototype shapes differ");
  double total = 0.0;
  for (std::size_t c = 0; c < pos.rows(); ++c) total += cosine(pos.row(c), neg.row(c));
  return total;
}

namespace {

// Row-normalizes `m` in place, keeping the pre-normalization norms.
Vector normalize_keep_norms(Matrix& m, PrototypeKind kind) {
  Vector norms(m.rows());
  for (std::size_t r = 0; r < m.rows(); ++r) {
    auto row = m.row(r);
    const double n = l2_norm(row);
    if (!(n > 0.0) || !std::isfinite(n)) {
      throw DegeneratePrototype(kind, static_cast<std::ptrdiff_t>(r));
    }
    for (double& x : row) x /= n;
    norms[r] = n;
  }
  return norms;
}

// Pulls a gradient with respect to unit rows back to the raw rows:
// dL/draw = (g - (u.g) u) / ||raw||.
Matrix through_normalize(const Matrix& unit, const Vector& norms, Matrix g) {
  for (std::size_t r = 0; r < unit.rows(); ++r) {
    auto gr = g.row(r);
    const double proj = kernels::dot(unit.row(r), gr);
    kernels::axpby(1.0 / norms[r], -proj / norms[r], unit.row(r), gr);
  }
  return g;
}

struct Forward {
  Matrix text, pos, neg;
  Vector text_norms, pos_norms, neg_norms;
  std::vector<Vector> probs;
  Vector mean;
  LossBreakdown loss;
};

Forward forward(const ObjectiveInputs& in, const ResidualSet& res, const ObjectiveParams& p) {
  if (in.views.empty()) throw FilterEmpty("no views passed the entropy filter");
  Forward fw;
  fw.text = in.text_base;
  kernels::axpy(1.0, res.text.flat(), fw.text.flat());
  fw.text_norms = normalize_keep_norms(fw.text, PrototypeKind::Text);

  fw.pos = in.pos_means;
  kernels::axpy(1.0, res.pos.flat(), fw.pos.flat());
  fw.pos_norms = normalize_keep_norms(fw.pos, PrototypeKind::Positive);

  const bool with_neg = p.fusion.use_negative;
  if (with_neg) {
    fw.neg = negative_prototypes(p.negatives_from_raw_means ? in.pos_means : fw.pos);
    kernels::axpy(1.0, res.neg.flat(), fw.neg.flat());
    fw.neg_norms = normalize_keep_norms(fw.neg, PrototypeKind::Negative);
  }

  const PrototypeState proto{fw.text, fw.pos, fw.neg, in.pos_means};
  fw.probs.reserve(in.views.size());
  for (const Vector& f : in.views) {
    fw.probs.push_back(softmax(fused_logits_sim(f, proto, p.fusion), p.fusion.tau));
  }
  fw.mean.assign(fw.text.rows(), 0.0);
  for (const Vector& pr : fw.probs) kernels::axpy(1.0, pr, fw.mean);
  const double inv = 1.0 / static_cast<double>(fw.probs.size());
  for (double& x : fw.mean) x *= inv;

  fw.loss.tpt = entropy(fw.mean);
  if (p.xi1 != 0.0) fw.loss.inter_text = inter_text_loss(fw.text, p.gamma);
  if (p.xi2 != 0.0 && with_neg) fw.loss.pos_neg = pos_neg_loss(fw.pos, fw.neg);
  fw.loss.total = fw.loss.tpt + p.xi1 * fw.loss.inter_text + p.xi2 * fw.loss.pos_neg;
  if (!std::isfinite(fw.loss.total)) throw NumericalError("non-finite loss");
  return fw;
}

}  // namespace

LossBreakdown total_loss(const ObjectiveInputs& in, const ResidualSet& res,
                         const ObjectiveParams& p) {
  return forward(in, res, p).loss;
}

LossAndGrad grad_total(const ObjectiveInputs& in, const ResidualSet& res,
                       const ObjectiveParams& p) {
  const Forward fw = forward(in, res, p);
  const std::size_t k_classes = fw.text.rows();
  const std::size_t d = fw.text.cols();
  const std::size_t n_views = in.views.size();
  const FusionParams& fp = p.fusion;
  const bool with_neg = fp.use_negative;

  Matrix g_text(k_classes, d);
  Matrix g_pos(k_classes, d);
  Matrix g_neg(k_classes, d);

  // Entropy of the marginal: dH/dmean_k = -(ln mean_k + 1).
  Vector g_mean(k_classes, 0.0);
  for (std::size_t k = 0; k < k_classes; ++k) {
    if (fw.mean[k] > 0.0) g_mean[k] = -(std::log(fw.mean[k]) + 1.0);
  }
  const double scale = 1.0 / (static_cast<double>(n_views) * fp.tau);
  Vector delta(k_classes);
  for (std::size_t i = 0; i < n_views; ++i) {
    const Vector& pi = fw.probs[i];
    const Vector& f = in.views[i];
    double g_bar = 0.0;
    for (std::size_t k = 0; k < k_classes; ++k) {
      if (pi[k] > 0.0) g_bar += pi[k] * g_mean[k];
    }
    for (std::size_t k = 0; k < k_classes; ++k) {
      delta[k] = pi[k] > 0.0 ? pi[k] * (g_mean[k] - g_bar) * scale : 0.0;
    }
    for (std::size_t k = 0; k < k_classes; ++k) {
      if (delta[k] == 0.0) continue;
      kernels::axpy(delta[k], f, g_text.row(k));
      const double a = pos_term(kernels::dot(f, fw.pos.row(k)), fp);
      kernels::axpy(delta[k] * fp.beta * a, f, g_pos.row(k));
      if (with_neg) {
        const double b = neg_term(kernels::dot(f, fw.neg.row(k)), fp);
        kernels::axpy(-delta[k] * fp.negative_sign * fp.beta * b, f, g_neg.row(k));
      }
    }
  }

  if (p.xi1 != 0.0) {
    const double c = -4.0 * p.gamma * p.xi1;
    Vector diff(d);
    for (std::size_t m = 0; m < k_classes; ++m) {
      for (std::size_t n = 0; n < k_classes; ++n) {
        if (m == n) continue;
        double d2 = 0.0;
        for (std::size_t j = 0; j < d; ++j) {
          diff[j] = fw.text(m, j) - fw.text(n, j);
          d2 += diff[j] * diff[j];
        }
        kernels::axpy(c * std::exp(-p.gamma * d2), diff, g_text.row(m));
      }
    }
  }

  if (p.xi2 != 0.0 && with_neg) {
    kernels::axpy(p.xi2, fw.neg.flat(), g_pos.flat());
    kernels::axpy(p.xi2, fw.pos.flat(), g_neg.flat());
  }

  LossAndGrad out;
  out.loss = fw.loss;
  out.grad.text = through_normalize(fw.text, fw.text_norms, std::move(g_text));
  if (with_neg) {
    out.grad.neg = through_normalize(fw.neg, fw.neg_norms, std::move(g_neg));
    if (!p.negatives_from_raw_means) {
      // neg_base_k = (sum_j pos_j - pos_k) / (K - 1)
      Vector total(d, 0.0);
      for (std::size_t k = 0; k < k_classes; ++k) kernels::axpy(1.0, out.grad.neg.row(k), total);
      const double inv = 1.0 / static_cast<double>(k_classes - 1);
      for (std::size_t j = 0; j < k_classes; ++j) {
        auto gp = g_pos.row(j);
        auto gn = out.grad.neg.row(j);
        for (std::size_t c = 0; c < d; ++c) gp[c] += (total[c] - gn[c]) * inv;
      }
    }
  } else {
    out.grad.neg = Matrix(k_classes, d);
  }
  out.grad.pos = through_normalize(fw.pos, fw.pos_norms, std::move(g_pos));
  if (!out.grad.all_finite()) throw NumericalError("non-finite gradient");
  return out;
}

void adamw_step(ResidualSet& res, const ResidualSet& grads, OptimizerState& state,
                const AdamWConfig& cfg) {
  if (!res.text.same_shape(grads.text) || !res.pos.same_shape(grads.pos) ||
      !res.neg.same_shape(grads.neg) || !state.m.text.same_shape(res.text)) {
    throw ConfigMismatch("optimizer shapes do not match the residuals");
  }
  state.step += 1;
  const double t = static_cast<double>(state.step);
  const double bc1 = 1.0 - std::pow(cfg.beta1, t);
  const double bc2 = 1.0 - std::pow(cfg.beta2, t);

  auto update = [&](Matrix& param, const Matrix& g, Matrix& m, Matrix& v) {
    auto pw = param.flat();
    auto gw = g.flat();
    auto mw = m.flat();
    auto vw = v.flat();
    for (std::size_t i = 0; i < pw.size(); ++i) {
      mw[i] = cfg.beta1 * mw[i] + (1.0 - cfg.beta1) * gw[i];
      vw[i] = cfg.beta2 * vw[i] + (1.0 - cfg.beta2) * gw[i] * gw[i];
      const double m_hat = mw[i] / bc1;
      const double v_hat = vw[i] / bc2;
      pw[i] -= cfg.lr * (m_hat / (std::sqrt(v_hat) + cfg.eps) + cfg.weight_decay * pw[i]);
    }
  };
  update(res.text, grads.text, state.m.text, state.v.text);
  update(res.pos, grads.pos, state.m.pos, state.v.pos);
  update(res.neg, grads.neg, state.m.neg, state.v.neg);
}

}  // namespace crg
