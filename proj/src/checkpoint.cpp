// Checkpoint layout, little-endian:
//   "CRGCKP1\0" u32 version  u32 d  u32 K  u64 samples_processed  u64 next_arrival
//   u64 len, config JSON     u64 len, metrics-state JSON
//   text cache K*d f64       initial text K*d f64     carried residuals 3*K*d f64
//   per class: u32 count, then per entry
//     u64 sample id (all ones = text seed)  i32 noted label (-1 none)  u64 arrival
//     f64 entropy  d*f64 feature

#include <bit>
#include <cstring>
#include <fstream>
#include <limits>

#include "crg/adapt.hpp"

namespace crg {
namespace {

constexpr char kCheckpointMagic[8] = {'C', 'R', 'G', 'C', 'K', 'P', '1', '\0'};
constexpr std::uint64_t kTextSeedId = std::numeric_limits<std::uint64_t>::max();

class Out {
 public:
  explicit Out(const std::filesystem::path& p) : f_(p, std::ios::binary | std::ios::trunc) {
    if (!f_) throw InvalidInput("cannot write checkpoint " + p.string());
  }
  void u32(std::uint32_t v) { bytes(v); }
  void u64(std::uint64_t v) { bytes(v); }
  void i32(std::int32_t v) { bytes(static_cast<std::uint32_t>(v)); }
  void f64(double v) { bytes(std::bit_cast<std::uint64_t>(v)); }
  void str(const std::string& s) {
    u64(s.size());
    f_.write(s.data(), static_cast<std::streamsize>(s.size()));
  }
  void matrix(const Matrix& m) {
    for (double x : m.flat()) f64(x);
  }
  void raw(const char* p, std::size_t n) { f_.write(p, static_cast<std::streamsize>(n)); }
  void finish() {
    f_.flush();
    if (!f_) throw InvalidInput("failed writing checkpoint");
  }

 private:
  template <class T>
  void bytes(T v) {
    char b[sizeof(T)];
    for (std::size_t i = 0; i < sizeof(T); ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
    f_.write(b, sizeof(T));
  }
  std::ofstream f_;
};

class In {
 public:
  explicit In(const std::filesystem::path& p) : f_(p, std::ios::binary) {
    if (!f_) throw InvalidInput("cannot open checkpoint " + p.string());
  }
  std::uint32_t u32() { return bytes<std::uint32_t>(); }
  std::uint64_t u64() { return bytes<std::uint64_t>(); }
  std::int32_t i32() { return static_cast<std::int32_t>(bytes<std::uint32_t>()); }
  double f64() { return std::bit_cast<double>(bytes<std::uint64_t>()); }
  std::string str() {
    const std::uint64_t n = u64();
    if (n > (1ULL << 32)) throw FormatError("implausible string length in checkpoint", offset_);
    std::string s(n, '\0');
    read(s.data(), n);
    return s;
  }
  void matrix(Matrix& m) {
    for (double& x : m.flat()) x = f64();
  }
  void read(char* dst, std::size_t n) {
    f_.read(dst, static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(f_.gcount()) != n) throw FormatError("truncated checkpoint", offset_);
    offset_ += n;
  }

 private:
  template <class T>
  T bytes() {
    unsigned char b[sizeof(T)];
    read(reinterpret_cast<char*>(b), sizeof(T));
    T v = 0;
    for (std::size_t i = sizeof(T); i-- > 0;) v = static_cast<T>((v << 8) | b[i]);
    return v;
  }
  std::ifstream f_;
  std::uint64_t offset_ = 0;
};

}  // namespace

void Engine::save_checkpoint(const std::filesystem::path& path) const {
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    Out o(tmp);
    o.raw(kCheckpointMagic, 8);
    o.u32(kFormatVersion);
    o.u32(static_cast<std::uint32_t>(cfg_.dim));
    o.u32(static_cast<std::uint32_t>(cfg_.num_classes));
    o.u64(processed_);
    o.u64(cache_.next_arrival());
    o.str(config_to_json(cfg_));
    o.str(metrics_.state_json());
    o.matrix(text_.prototypes);
    o.matrix(initial_text_);
    o.matrix(carried_.text);
    o.matrix(carried_.pos);
    o.matrix(carried_.neg);
    for (std::size_t k = 0; k < cache_.num_classes(); ++k) {
      const auto& entries = cache_.queue(k).entries();
      o.u32(static_cast<std::uint32_t>(entries.size()));
      for (const CacheEntry& e : entries) {
        o.u64(e.sample_id.value_or(kTextSeedId));
        o.i32(e.noted_label.value_or(-1));
        o.u64(e.arrival);
        o.f64(e.entropy);
        for (double x : e.feature) o.f64(x);
      }
    }
    o.finish();
  }
  std::filesystem::rename(tmp, path);
}

Engine Engine::load_checkpoint(const std::filesystem::path& path) {
  In in(path);
  char magic[8];
  in.read(magic, 8);
  if (std::memcmp(magic, kCheckpointMagic, 8) != 0) throw FormatError("bad checkpoint magic", 0);
  const std::uint32_t version = in.u32();
  if (version != kFormatVersion) {
    throw VersionError("unsupported checkpoint version " + std::to_string(version));
  }
  const std::uint32_t d = in.u32();
  const std::uint32_t k_classes = in.u32();

  Engine e;
  e.processed_ = in.u64();
  const std::uint64_t next_arrival = in.u64();
  e.cfg_ = config_from_json(in.str());
  if (e.cfg_.dim != d || e.cfg_.num_classes != k_classes) {
    throw FormatError("checkpoint header disagrees with its config", 12);
  }
  e.cfg_.validate();
  e.metrics_ = MetricsAccumulator::from_state_json(in.str());
  e.text_.prototypes = Matrix(k_classes, d);
  in.matrix(e.text_.prototypes);
  e.initial_text_ = Matrix(k_classes, d);
  in.matrix(e.initial_text_);
  e.carried_ = ResidualSet::zeros(k_classes, d);
  in.matrix(e.carried_.text);
  in.matrix(e.carried_.pos);
  in.matrix(e.carried_.neg);

  e.cache_ = PositiveCache(k_classes, d, e.cfg_.queue_capacity);
  for (std::uint32_t k = 0; k < k_classes; ++k) {
    const std::uint32_t count = in.u32();
    if (count == 0 || count > e.cfg_.queue_capacity) {
      throw FormatError("checkpoint queue size out of range", 0);
    }
    std::vector<CacheEntry> entries(count);
    for (CacheEntry& ce : entries) {
      const std::uint64_t id = in.u64();
      if (id != kTextSeedId) ce.sample_id = id;
      const std::int32_t label = in.i32();
      if (label >= 0) ce.noted_label = label;
      ce.arrival = in.u64();
      ce.entropy = in.f64();
      ce.feature.resize(d);
      for (double& x : ce.feature) x = in.f64();
    }
    e.cache_.queue_mut(k).assign(std::move(entries));
  }
  e.cache_.set_next_arrival(next_arrival);
  return e;
}

}  // namespace crg
