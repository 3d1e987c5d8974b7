#include <algorithm>
#include <cmath>

#include <json.hpp>

#include "crg/adapt.hpp"

namespace crg {

using ojson = nlohmann::ordered_json;

double ece(std::span<const CalibrationPoint> points, std::size_t bins) {
  if (points.empty()) throw InvalidInput("ECE of an empty prediction list");
  if (bins == 0) throw InvalidInput("ECE needs at least one bin");
  std::vector<double> conf_sum(bins, 0.0);
  std::vector<double> acc_sum(bins, 0.0);
  std::vector<std::size_t> count(bins, 0);
  for (const CalibrationPoint& p : points) {
    // Right-closed bins (b/B, (b+1)/B]; confidence 0 joins the first bin.
    const double scaled = std::clamp(p.confidence, 0.0, 1.0) * static_cast<double>(bins);
    auto b = static_cast<std::size_t>(std::ceil(scaled));
    b = b == 0 ? 0 : b - 1;
    b = std::min(b, bins - 1);
    conf_sum[b] += p.confidence;
    acc_sum[b] += p.correct ? 1.0 : 0.0;
    ++count[b];
  }
  const auto n = static_cast<double>(points.size());
  double total = 0.0;
  for (std::size_t b = 0; b < bins; ++b) {
    if (count[b] == 0) continue;
    const auto nb = static_cast<double>(count[b]);
    total += (nb / n) * std::abs(acc_sum[b] / nb - conf_sum[b] / nb);
  }
  return total;
}

double ece(const std::vector<std::pair<Vector, std::size_t>>& predictions, std::size_t bins) {
  std::vector<CalibrationPoint> pts;
  pts.reserve(predictions.size());
  for (const auto& [probs, label] : predictions) {
    const std::size_t top = argmax(probs);
    pts.push_back({probs[top], top == label});
  }
  return ece(pts, bins);
}

double cache_error_rate(const PositiveCache& cache) {
  std::size_t labeled = 0;
  std::size_t wrong = 0;
  for (std::size_t k = 0; k < cache.num_classes(); ++k) {
    for (const CacheEntry& e : cache.queue(k).entries()) {
      if (e.is_text_init() || !e.noted_label) continue;
      ++labeled;
      if (static_cast<std::size_t>(*e.noted_label) != k) ++wrong;
    }
  }
  return labeled == 0 ? 0.0 : static_cast<double>(wrong) / static_cast<double>(labeled);
}

void MetricsAccumulator::record(const SamplePrediction& p, double cache_error) {
  ++samples_;
  switch (p.insertion) {
    case InsertKind::Inserted:
      ++inserted_;
      break;
    case InsertKind::Replaced:
      ++replaced_;
      break;
    case InsertKind::Discarded:
      ++discarded_;
      break;
  }
  if (p.noise_injected) ++noise_;
  if (p.text_updated) ++text_updates_;
  degenerate_ += p.degenerate_rows;
  if (p.fallback) ++fallbacks_;
  if (p.true_label) {
    const bool ok = p.predicted == *p.true_label;
    correct_ += ok ? 1 : 0;
    zero_shot_correct_ += p.zero_shot_pred == *p.true_label ? 1 : 0;
    calibration_.push_back({p.probs[p.predicted], ok});
  }
  error_series_.push_back(cache_error);
}

MetricsReport MetricsAccumulator::report() const {
  MetricsReport r;
  r.samples = samples_;
  r.labeled = calibration_.size();
  r.ece_bins = ece_bins_;
  if (r.labeled > 0) {
    const auto n = static_cast<double>(r.labeled);
    r.accuracy = static_cast<double>(correct_) / n;
    r.zero_shot_accuracy = static_cast<double>(zero_shot_correct_) / n;
    r.ece = ece(calibration_, ece_bins_);
  }
  r.inserted = inserted_;
  r.replaced = replaced_;
  r.discarded = discarded_;
  r.noise_injections = noise_;
  r.text_updates = text_updates_;
  r.degenerate_rows = degenerate_;
  r.fallbacks = fallbacks_;
  r.cache_error_rate = error_series_;
  return r;
}

std::string MetricsAccumulator::state_json() const {
  ojson j;
  j["ece_bins"] = ece_bins_;
  j["samples"] = samples_;
  j["correct"] = correct_;
  j["zero_shot_correct"] = zero_shot_correct_;
  j["inserted"] = inserted_;
  j["replaced"] = replaced_;
  j["discarded"] = discarded_;
  j["noise"] = noise_;
  j["text_updates"] = text_updates_;
  j["degenerate"] = degenerate_;
  j["fallbacks"] = fallbacks_;
  ojson conf = ojson::array();
  ojson ok = ojson::array();
  for (const auto& c : calibration_) {
    conf.push_back(c.confidence);
    ok.push_back(c.correct);
  }
  j["confidence"] = std::move(conf);
  j["correct_flags"] = std::move(ok);
  j["error_series"] = error_series_;
  return j.dump();
}

MetricsAccumulator MetricsAccumulator::from_state_json(const std::string& text) {
  const ojson j = ojson::parse(text);
  MetricsAccumulator m(j.at("ece_bins").get<std::size_t>());
  m.samples_ = j.at("samples").get<std::size_t>();
  m.correct_ = j.at("correct").get<std::size_t>();
  m.zero_shot_correct_ = j.at("zero_shot_correct").get<std::size_t>();
  m.inserted_ = j.at("inserted").get<std::size_t>();
  m.replaced_ = j.at("replaced").get<std::size_t>();
  m.discarded_ = j.at("discarded").get<std::size_t>();
  m.noise_ = j.at("noise").get<std::size_t>();
  m.text_updates_ = j.at("text_updates").get<std::size_t>();
  m.degenerate_ = j.at("degenerate").get<std::size_t>();
  m.fallbacks_ = j.at("fallbacks").get<std::size_t>();
  const auto& conf = j.at("confidence");
  const auto& ok = j.at("correct_flags");
  if (conf.size() != ok.size()) throw InvalidInput("inconsistent metrics state");
  for (std::size_t i = 0; i < conf.size(); ++i) {
    m.calibration_.push_back({conf[i].get<double>(), ok[i].get<bool>()});
  }
  m.error_series_ = j.at("error_series").get<std::vector<double>>();
  return m;
}

std::string MetricsReport::to_json() const {
  ojson j;
  j["samples"] = samples;
  j["labeled"] = labeled;
  if (accuracy) j["accuracy"] = *accuracy;
  if (zero_shot_accuracy) j["zero_shot_accuracy"] = *zero_shot_accuracy;
  if (ece) j["ece"] = *ece;
  j["ece_bins"] = ece_bins;
  j["inserted"] = inserted;
  j["replaced"] = replaced;
  j["discarded"] = discarded;
  j["noise_injections"] = noise_injections;
  j["text_updates"] = text_updates;
  j["degenerate_rows"] = degenerate_rows;
  j["fallbacks"] = fallbacks;
  j["cache_error_rate"] = cache_error_rate;
  return j.dump(2) + "\n";
}

MetricsReport MetricsReport::from_json(const std::string& text) {
  ojson j;
  try {
    j = ojson::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError("malformed metrics file: " + std::string(e.what()), e.byte);
  }
  MetricsReport r;
  try {
    r.samples = j.at("samples").get<std::size_t>();
    r.labeled = j.at("labeled").get<std::size_t>();
    if (j.contains("accuracy")) r.accuracy = j.at("accuracy").get<double>();
    if (j.contains("zero_shot_accuracy")) r.zero_shot_accuracy = j.at("zero_shot_accuracy").get<double>();
    if (j.contains("ece")) r.ece = j.at("ece").get<double>();
    r.ece_bins = j.at("ece_bins").get<std::size_t>();
    r.inserted = j.at("inserted").get<std::size_t>();
    r.replaced = j.at("replaced").get<std::size_t>();
    r.discarded = j.at("discarded").get<std::size_t>();
    r.noise_injections = j.at("noise_injections").get<std::size_t>();
    r.text_updates = j.at("text_updates").get<std::size_t>();
    r.degenerate_rows = j.at("degenerate_rows").get<std::size_t>();
    r.fallbacks = j.at("fallbacks").get<std::size_t>();
    r.cache_error_rate = j.at("cache_error_rate").get<std::vector<double>>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("malformed metrics field: " + std::string(e.what()), 0);
  }
  return r;
}

}  // namespace crg
