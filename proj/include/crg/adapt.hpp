#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "crg/cache.hpp"
#include "crg/core.hpp"
#include "crg/data.hpp"
#include "crg/gda.hpp"
#include "crg/objective.hpp"
#include "crg/prototypes.hpp"

namespace crg {

struct SamplePrediction {
  std::uint64_t sample_id = 0;
  std::optional<std::size_t> true_label;
  Vector probs;                   // final distribution
  std::size_t predicted = 0;      // argmax of probs
  std::size_t pseudo_label = 0;   // argmax of the filtered-view marginal
  std::size_t inserted_class = 0; // queue the feature was offered to
  bool noise_injected = false;
  InsertKind insertion = InsertKind::Discarded;
  double entropy_before = 0.0;    // entropy of the filtered-view marginal
  double entropy_final = 0.0;
  double loss_before = 0.0;
  double loss_after = 0.0;
  std::size_t selected_views = 0;
  std::size_t degenerate_rows = 0;
  bool fallback = false;
  bool text_updated = false;
  std::size_t zero_shot_pred = 0; // argmax over the initial text features
};

struct CalibrationPoint {
  double confidence = 0.0;
  bool correct = false;
};

/// Expected calibration error with equal-width, right-closed confidence bins.
/// Throws InvalidInput on an empty list or zero bins.
double ece(std::span<const CalibrationPoint> points, std::size_t bins = 15);
double ece(const std::vector<std::pair<Vector, std::size_t>>& predictions, std::size_t bins = 15);

/// Fraction of sample entries (with a known label) filed under a class other
/// than their true one. Zero when no such entries exist.
double cache_error_rate(const PositiveCache& cache);

struct MetricsReport {
  std::size_t samples = 0;
  std::size_t labeled = 0;
  std::optional<double> accuracy;
  std::optional<double> zero_shot_accuracy;
  std::optional<double> ece;
  std::size_t ece_bins = 15;
  std::size_t inserted = 0;
  std::size_t replaced = 0;
  std::size_t discarded = 0;
  std::size_t noise_injections = 0;
  std::size_t text_updates = 0;
  std::size_t degenerate_rows = 0;
  std::size_t fallbacks = 0;
  std::vector<double> cache_error_rate;

  std::string to_json() const;
  static MetricsReport from_json(const std::string& text);

  friend bool operator==(const MetricsReport&, const MetricsReport&) = default;
};

class MetricsAccumulator {
 public:
  explicit MetricsAccumulator(std::size_t ece_bins = 15) : ece_bins_(ece_bins) {}

  void record(const SamplePrediction& p, double cache_error);
  MetricsReport report() const;

  std::string state_json() const;
  static MetricsAccumulator from_state_json(const std::string& text);

 private:
  std::size_t ece_bins_;
  std::size_t samples_ = 0;
  std::size_t correct_ = 0;
  std::size_t zero_shot_correct_ = 0;
  std::size_t inserted_ = 0;
  std::size_t replaced_ = 0;
  std::size_t discarded_ = 0;
  std::size_t noise_ = 0;
  std::size_t text_updates_ = 0;
  std::size_t degenerate_ = 0;
  std::size_t fallbacks_ = 0;
  std::vector<CalibrationPoint> calibration_;
  std::vector<double> error_series_;
};

/// The online adaptation state: caches, text cache and running metrics.
class Engine {
 public:
  Engine(EngineConfig cfg, const Matrix& text_features);

  /// Runs the full per-sample pipeline and updates the caches.
  SamplePrediction process(const SampleRecord& sample);

  const EngineConfig& config() const { return cfg_; }
  const PositiveCache& cache() const { return cache_; }
  const TextCache& text_cache() const { return text_; }
  const Matrix& initial_text() const { return initial_text_; }
  const MetricsAccumulator& metrics() const { return metrics_; }
  std::uint64_t processed() const { return processed_; }

  /// Writes caches, config, metrics and stream position.
  void save_checkpoint(const std::filesystem::path& path) const;
  static Engine load_checkpoint(const std::filesystem::path& path);

 private:
  Engine() = default;

  PrototypeState build_with_fallback(const Matrix& means, ResidualSet& res,
                                     std::size_t& degenerate) const;
  std::size_t insertion_class(const SampleRecord& s, std::size_t pseudo, bool& injected) const;

  EngineConfig cfg_;
  PositiveCache cache_;
  TextCache text_;
  Matrix initial_text_;
  ResidualSet carried_;  // only used when residuals persist across samples
  MetricsAccumulator metrics_;
  std::uint64_t processed_ = 0;
};

using SampleSource = std::function<std::optional<SampleRecord>()>;

/// Folds Engine::process over the source. Each prediction is written to `log`
/// as one JSON line when given.
MetricsReport run_stream(Engine& engine, const SampleSource& source, std::ostream* log = nullptr);

std::string prediction_json(const SamplePrediction& p);

// ---------------------------------------------------------------------------
// Config serialization (field names mirror EngineConfig)
// ---------------------------------------------------------------------------

std::string config_to_json(const EngineConfig& cfg);
/// Overlays the fields present in `text` onto `base`. Unknown keys are errors.
EngineConfig config_from_json(const std::string& text, EngineConfig base = {});
EngineConfig load_config_file(const std::filesystem::path& path, EngineConfig base = {});

}  // namespace crg
