#include "crg/adapt.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

#include <json.hpp>

#include "crg/kernels.hpp"
#include "crg/rng.hpp"

namespace crg {

Engine::Engine(EngineConfig cfg, const Matrix& text_features)
    : cfg_(std::move(cfg)), metrics_(cfg_.ece_bins) {
  auto [cache, text] = init_caches(text_features, cfg_);
  cache_ = std::move(cache);
  text_ = std::move(text);
  initial_text_ = text_features;
  carried_ = ResidualSet::zeros(cfg_.num_classes, cfg_.dim);
}

PrototypeState Engine::build_with_fallback(const Matrix& means, ResidualSet& res,
                                           std::size_t& degenerate) const {
  const PrototypeOptions opts{cfg_.negatives_from_raw_means, cfg_.use_negative_cache};
  // Each retry zeroes one residual row, so 3K attempts bound the loop.
  for (std::size_t attempt = 0; attempt <= 3 * cfg_.num_classes; ++attempt) {
    try {
      return build_prototype_state(means, text_.prototypes, res, opts);
    } catch (const DegeneratePrototype& e) {
      Matrix& target = e.kind() == PrototypeKind::Text       ? res.text
                       : e.kind() == PrototypeKind::Positive ? res.pos
                                                             : res.neg;
      auto row = target.row(static_cast<std::size_t>(e.row()));
      if (std::all_of(row.begin(), row.end(), [](double x) { return x == 0.0; })) {
        throw NumericalError(std::string("prototype row degenerate without residual: ") + e.what());
      }
      std::fill(row.begin(), row.end(), 0.0);
      ++degenerate;
    }
  }
  throw InternalInvariantViolation("degenerate-row fallback did not converge");
}

std::size_t Engine::insertion_class(const SampleRecord& s, std::size_t pseudo,
                                    bool& injected) const {
  injected = false;
  const auto truth = s.true_label();
  if (cfg_.insertion_noise <= 0.0 || !truth) return pseudo;
  // Keyed by sample id so a resumed stream draws the same noise.
  Rng rng(cfg_.seed ^ splitmix64(s.id));
  if (!(rng.uniform() < cfg_.insertion_noise)) return pseudo;
  const auto wrong = static_cast<std::size_t>(rng.index(cfg_.num_classes - 1));
  injected = true;
  return wrong >= *truth ? wrong + 1 : wrong;
}

namespace {

Vector mean_of(const std::vector<Vector>& dists, std::span<const std::size_t> idx) {
  Vector m(dists.front().size(), 0.0);
  for (std::size_t i : idx) kernels::axpy(1.0, dists[i], m);
  const double inv = 1.0 / static_cast<double>(idx.size());
  for (double& x : m) x *= inv;
  return m;
}

}  // namespace

SamplePrediction Engine::process(const SampleRecord& sample) {
  const std::size_t k_classes = cfg_.num_classes;
  const std::size_t n_views = sample.views.rows();
  if (n_views == 0) throw InvalidInput("sample has no views");
  if (sample.views.cols() != cfg_.dim) throw ConfigMismatch("sample dimension does not match");
  if (sample.label >= static_cast<std::int32_t>(k_classes)) throw IndexError("label out of range");

  const double log_k = std::log(static_cast<double>(k_classes));
  const FusionParams fusion = FusionParams::from(cfg_);
  const bool gda_pseudo = cfg_.use_gda && cfg_.pseudo_label_rule == DecisionRule::Gaussian;
  const auto view0 = sample.views.row(0);

  SamplePrediction out;
  out.sample_id = sample.id;
  out.true_label = sample.true_label();
  {
    Vector zs(k_classes);
    kernels::gemv(initial_text_.flat(), k_classes, cfg_.dim, view0, zs);
    out.zero_shot_pred = argmax(zs);
  }

  // (1) fresh residuals and optimizer.
  ResidualSet res = cfg_.persist_residuals ? carried_ : ResidualSet::zeros(k_classes, cfg_.dim);
  OptimizerState opt = OptimizerState::fresh(k_classes, cfg_.dim);

  // (2)-(3) pseudo-label from the filtered-view marginal.
  std::vector<Vector> view_probs(n_views);
  Vector view_ent(n_views);
  try {
    const Matrix means = cache_.class_means();
    const PrototypeState proto = build_with_fallback(means, res, out.degenerate_rows);
    std::optional<GdaModel> gda;
    if (gda_pseudo) gda = fit_gda(cache_, res.pos, cfg_.eps_cov);
    for (std::size_t v = 0; v < n_views; ++v) {
      const auto f = sample.views.row(v);
      const Vector logits =
          gda ? fused_logits_gda(f, proto, *gda, fusion) : fused_logits_sim(f, proto, fusion);
      view_probs[v] = softmax(logits, cfg_.tau);
      view_ent[v] = entropy(view_probs[v]);
    }
  } catch (const Error&) {
    // Cache state unusable for this sample: fall back to the text cache alone.
    out.fallback = true;
    for (std::size_t v = 0; v < n_views; ++v) {
      Vector logits(k_classes);
      kernels::gemv(text_.prototypes.flat(), k_classes, cfg_.dim, sample.views.row(v), logits);
      view_probs[v] = softmax(logits, cfg_.tau);
      view_ent[v] = entropy(view_probs[v]);
    }
  }
  const std::vector<std::size_t> selected = select_views(view_ent, cfg_.rho);
  const Vector p0 = mean_of(view_probs, selected);
  out.selected_views = selected.size();
  out.pseudo_label = argmax(p0);
  out.entropy_before = std::min(entropy(p0), log_k);

  // (4) cache insertion.
  out.inserted_class = insertion_class(sample, out.pseudo_label, out.noise_injected);
  out.insertion = cache_
                      .insert(out.inserted_class,
                              CacheEntry{Vector(view0.begin(), view0.end()), out.entropy_before,
                                         sample.id,
                                         out.true_label ? std::optional<int>(sample.label)
                                                        : std::nullopt,
                                         0})
                      .kind;

  auto emit_fallback = [&] {
    out.fallback = true;
    out.probs = p0;
    out.predicted = argmax(p0);
    out.entropy_final = out.entropy_before;
  };

  if (out.fallback) {
    emit_fallback();
  } else {
    try {
      // (5)-(6) one optimizer step on the similarity-form objective.
      ObjectiveInputs in{text_.prototypes, cache_.class_means(), {}};
      in.views.reserve(selected.size());
      for (std::size_t v : selected) {
        const auto row = sample.views.row(v);
        in.views.emplace_back(row.begin(), row.end());
      }
      const ObjectiveParams op = ObjectiveParams::from(cfg_);
      const LossAndGrad lg = grad_total(in, res, op);
      out.loss_before = lg.loss.total;
      adamw_step(res, lg.grad, opt, AdamWConfig::from(cfg_));
      if (!res.all_finite()) throw NumericalError("non-finite residual after the update");

      // (7) calibrated prototypes and residual-shifted GDA.
      const PrototypeState proto = build_with_fallback(in.pos_means, res, out.degenerate_rows);
      out.loss_after = total_loss(in, res, op).total;
      std::optional<GdaModel> gda;
      if (cfg_.use_gda) gda = fit_gda(cache_, res.pos, cfg_.eps_cov);

      // (8) final decision.
      auto decide = [&](std::span<const double> f) {
        const Vector logits =
            gda ? fused_logits_gda(f, proto, *gda, fusion) : fused_logits_sim(f, proto, fusion);
        return softmax(logits, cfg_.tau);
      };
      if (cfg_.final_on_marginal) {
        Vector m(k_classes, 0.0);
        for (std::size_t v = 0; v < n_views; ++v) kernels::axpy(1.0, decide(sample.views.row(v)), m);
        for (double& x : m) x /= static_cast<double>(n_views);
        out.probs = std::move(m);
      } else {
        out.probs = decide(view0);
      }
      out.predicted = argmax(out.probs);
      out.entropy_final = std::min(entropy(out.probs), log_k);

      // (9) text cache momentum.
      out.text_updated = momentum_update_text(text_, proto.text, out.entropy_final / log_k, cfg_);
      if (cfg_.persist_residuals) carried_ = res;
    } catch (const Error&) {
      emit_fallback();
    }
  }

  // (10) metrics.
  metrics_.record(out, cache_error_rate(cache_));
  ++processed_;
  return out;
}

MetricsReport run_stream(Engine& engine, const SampleSource& source, std::ostream* log) {
  while (auto rec = source()) {
    const SamplePrediction p = engine.process(*rec);
    if (log) *log << prediction_json(p) << '\n';
  }
  return engine.metrics().report();
}

std::string prediction_json(const SamplePrediction& p) {
  nlohmann::ordered_json j;
  j["id"] = p.sample_id;
  if (p.true_label) {
    j["label"] = *p.true_label;
  } else {
    j["label"] = nullptr;
  }
  j["pred"] = p.predicted;
  j["confidence"] = p.probs.empty() ? 0.0 : p.probs[p.predicted];
  j["zero_shot_pred"] = p.zero_shot_pred;
  j["pseudo_label"] = p.pseudo_label;
  j["inserted_class"] = p.inserted_class;
  j["noise"] = p.noise_injected;
  j["outcome"] = p.insertion == InsertKind::Inserted   ? "inserted"
                 : p.insertion == InsertKind::Replaced ? "replaced"
                                                       : "discarded";
  j["entropy_before"] = p.entropy_before;
  j["entropy_final"] = p.entropy_final;
  j["loss_before"] = p.loss_before;
  j["loss_after"] = p.loss_after;
  j["selected_views"] = p.selected_views;
  j["degenerate_rows"] = p.degenerate_rows;
  j["text_updated"] = p.text_updated;
  j["fallback"] = p.fallback;
  return j.dump();
}

}  // namespace crg
