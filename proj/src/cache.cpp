#include "crg/cache.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "crg/kernels.hpp"

namespace crg {
namespace {

// Max-heap ordering: "a < b" means b is worse (evicted first).
bool less_worse(const CacheEntry& a, const CacheEntry& b) {
  if (a.entropy != b.entropy) return a.entropy < b.entropy;
  return a.arrival < b.arrival;
}

}  // namespace

InsertOutcome ClassQueue::offer(CacheEntry entry) {
  if (!std::isfinite(entry.entropy)) throw InvalidInput("cache entry entropy must be finite");
  if (!full()) {
    heap_.push_back(std::move(entry));
    std::push_heap(heap_.begin(), heap_.end(), less_worse);
    return {InsertKind::Inserted, std::nullopt};
  }
  // Strictly lower entropy is required to displace the current worst.
  if (!(entry.entropy < heap_.front().entropy)) return {InsertKind::Discarded, std::nullopt};
  std::pop_heap(heap_.begin(), heap_.end(), less_worse);
  CacheEntry evicted = std::move(heap_.back());
  heap_.back() = std::move(entry);
  std::push_heap(heap_.begin(), heap_.end(), less_worse);
  return {InsertKind::Replaced, std::move(evicted)};
}

void ClassQueue::assign(std::vector<CacheEntry> entries) {
  if (entries.size() > capacity_) throw InvalidInput("queue restore exceeds capacity");
  heap_ = std::move(entries);
  if (!std::is_heap(heap_.begin(), heap_.end(), less_worse)) {
    std::make_heap(heap_.begin(), heap_.end(), less_worse);
  }
}

PositiveCache::PositiveCache(std::size_t num_classes, std::size_t dim, std::size_t capacity)
    : dim_(dim), capacity_(capacity), queues_(num_classes, ClassQueue(capacity)) {}

const ClassQueue& PositiveCache::queue(std::size_t k) const {
  if (k >= queues_.size()) throw IndexError("class index " + std::to_string(k) + " out of range");
  return queues_[k];
}

ClassQueue& PositiveCache::queue_mut(std::size_t k) {
  if (k >= queues_.size()) throw IndexError("class index " + std::to_string(k) + " out of range");
  return queues_[k];
}

InsertOutcome PositiveCache::insert(std::size_t cls, CacheEntry entry) {
  ClassQueue& q = queue_mut(cls);
  if (entry.feature.size() != dim_) throw ConfigMismatch("cache entry has wrong dimension");
  entry.arrival = next_arrival_++;
  return q.offer(std::move(entry));
}

Matrix PositiveCache::class_means() const {
  Matrix means(queues_.size(), dim_);
  for (std::size_t k = 0; k < queues_.size(); ++k) {
    const auto& entries = queues_[k].entries();
    if (entries.empty()) {
      throw InternalInvariantViolation("queue " + std::to_string(k) + " is empty");
    }
    auto row = means.row(k);
    for (const CacheEntry& e : entries) kernels::axpy(1.0, e.feature, row);
    const double inv = 1.0 / static_cast<double>(entries.size());
    for (double& x : row) x *= inv;
  }
  return means;
}

std::size_t PositiveCache::total_entries() const {
  std::size_t n = 0;
  for (const auto& q : queues_) n += q.size();
  return n;
}

std::pair<PositiveCache, TextCache> init_caches(const Matrix& text_features,
                                                const EngineConfig& cfg) {
  cfg.validate();
  if (text_features.rows() != cfg.num_classes || text_features.cols() != cfg.dim) {
    throw ConfigMismatch("text features are " + std::to_string(text_features.rows()) + "x" +
                         std::to_string(text_features.cols()) + ", config expects " +
                         std::to_string(cfg.num_classes) + "x" + std::to_string(cfg.dim));
  }
  PositiveCache cache(cfg.num_classes, cfg.dim, cfg.queue_capacity);
  const double sentinel = std::log(static_cast<double>(cfg.num_classes));
  for (std::size_t k = 0; k < cfg.num_classes; ++k) {
    auto row = text_features.row(k);
    cache.insert(k, CacheEntry{Vector(row.begin(), row.end()), sentinel, std::nullopt,
                               std::nullopt, 0});
  }
  return {std::move(cache), TextCache{text_features}};
}

bool momentum_update_text(TextCache& tc, const Matrix& calibrated, double pred_entropy_norm,
                          const EngineConfig& cfg) {
  if (!tc.prototypes.same_shape(calibrated)) throw ConfigMismatch("text cache shape mismatch");
  const bool confident = cfg.flip_confidence_threshold ? pred_entropy_norm > cfg.tau_t
                                                       : pred_entropy_norm < cfg.tau_t;
  if (!confident || cfg.eta == 0.0) return false;
  if (cfg.eta == 1.0) {
    tc.prototypes = calibrated;
    return true;
  }
  Matrix next = tc.prototypes;
  for (std::size_t k = 0; k < next.rows(); ++k) {
    kernels::axpby(1.0 - cfg.eta, cfg.eta, calibrated.row(k), next.row(k));
  }
  normalize_rows(next);
  tc.prototypes = std::move(next);
  return true;
}

}  // namespace crg
