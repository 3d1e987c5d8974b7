#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "crg/core.hpp"

namespace crg {

/// A cached image feature with the entropy of the prediction that filed it.
struct CacheEntry {
  Vector feature;
  double entropy = 0.0;
  /// Sample that produced the entry; empty for the text-feature seed.
  std::optional<std::uint64_t> sample_id;
  /// Ground truth carried along for error-rate bookkeeping only.
  std::optional<int> noted_label;
  /// Arrival order within the owning cache; assigned on insertion.
  std::uint64_t arrival = 0;

  bool is_text_init() const { return !sample_id.has_value(); }

  friend bool operator==(const CacheEntry&, const CacheEntry&) = default;
};

enum class InsertKind { Inserted, Replaced, Discarded };

struct InsertOutcome {
  InsertKind kind = InsertKind::Discarded;
  std::optional<CacheEntry> evicted;
};

/// Bounded max-entropy heap. The worst entry is the one with the highest
/// entropy; among equal entropies the latest arrival counts as worse.
class ClassQueue {
 public:
  explicit ClassQueue(std::size_t capacity = 1) : capacity_(capacity) {}

  std::size_t size() const { return heap_.size(); }
  std::size_t capacity() const { return capacity_; }
  bool full() const { return heap_.size() >= capacity_; }
  bool empty() const { return heap_.empty(); }

  /// Highest-entropy entry. Precondition: not empty.
  const CacheEntry& worst() const { return heap_.front(); }

  /// Entries in heap order (unspecified but deterministic).
  const std::vector<CacheEntry>& entries() const { return heap_; }

  InsertOutcome offer(CacheEntry entry);

  /// Restores a queue from a serialized heap array. Re-heapifies.
  void assign(std::vector<CacheEntry> entries);

 private:
  std::size_t capacity_;
  std::vector<CacheEntry> heap_;
};

/// K entropy-priority queues of visual features, one per class.
class PositiveCache {
 public:
  PositiveCache() = default;
  PositiveCache(std::size_t num_classes, std::size_t dim, std::size_t capacity);

  std::size_t num_classes() const { return queues_.size(); }
  std::size_t dim() const { return dim_; }
  std::size_t capacity() const { return capacity_; }

  const ClassQueue& queue(std::size_t k) const;
  ClassQueue& queue_mut(std::size_t k);

  /// Files `entry` under class `cls`. Throws IndexError for a bad class.
  InsertOutcome insert(std::size_t cls, CacheEntry entry);

  /// Row k = arithmetic mean of the features in queue k (not normalized).
  Matrix class_means() const;

  std::size_t total_entries() const;

  std::uint64_t next_arrival() const { return next_arrival_; }
  void set_next_arrival(std::uint64_t a) { next_arrival_ = a; }

 private:
  std::size_t dim_ = 0;
  std::size_t capacity_ = 0;
  std::vector<ClassQueue> queues_;
  std::uint64_t next_arrival_ = 0;
};

struct TextCache {
  Matrix prototypes;  // K x d, unit rows
};

/// Seeds each queue with its text feature at entropy ln K and copies the text
/// features into the text cache.
std::pair<PositiveCache, TextCache> init_caches(const Matrix& text_features,
                                                const EngineConfig& cfg);

/// Momentum blend toward `calibrated` when the prediction is confident enough:
/// normalized entropy below tau_t (above it when the threshold is flipped).
/// Returns true when the update was applied.
bool momentum_update_text(TextCache& tc, const Matrix& calibrated, double pred_entropy_norm,
                          const EngineConfig& cfg);

}  // namespace crg
