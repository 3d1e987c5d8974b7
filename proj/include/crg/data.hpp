#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "crg/core.hpp"

namespace crg {

class FormatError : public Error {
 public:
  FormatError(const std::string& what, std::uint64_t offset)
      : Error(what + " (at byte " + std::to_string(offset) + ")"), offset_(offset) {}
  std::uint64_t offset() const { return offset_; }

 private:
  std::uint64_t offset_;
};

class VersionError : public Error {
 public:
  using Error::Error;
};

inline constexpr std::uint32_t kFormatVersion = 1;
inline constexpr char kSampleMagic[8] = {'C', 'R', 'G', 'E', 'M', 'B', '1', '\0'};
inline constexpr char kTextMagic[8] = {'C', 'R', 'G', 'T', 'X', 'T', '1', '\0'};

struct Manifest {
  std::uint32_t format_version = kFormatVersion;
  std::uint32_t dim = 0;
  std::uint32_t num_classes = 0;
  std::vector<std::string> class_names;
  std::string text_features;  // path, relative to the manifest's directory
  std::string samples;        // path, relative to the manifest's directory
  std::string dataset;
  std::string prompt_note;
  /// Set on synthetic noise experiments: rate of forced wrong cache insertions.
  std::optional<double> insertion_noise;

  void validate() const;

  friend bool operator==(const Manifest&, const Manifest&) = default;
};

Manifest read_manifest(const std::filesystem::path& path);
void write_manifest(const Manifest& m, const std::filesystem::path& path);

/// Resolves a manifest-relative path.
std::filesystem::path resolve(const std::filesystem::path& manifest_path, const std::string& rel);

struct SampleRecord {
  std::uint64_t id = 0;
  std::int32_t label = -1;  // -1 = unknown
  Matrix views;             // n_views x d, view 0 is the original image

  std::optional<std::size_t> true_label() const {
    if (label < 0) return std::nullopt;
    return static_cast<std::size_t>(label);
  }

  friend bool operator==(const SampleRecord&, const SampleRecord&) = default;
};

struct ReadOptions {
  /// Re-normalize every stored row after widening to double.
  bool renormalize = true;
  /// Rows whose stored norm deviates from 1 by more than this are rejected.
  double norm_tolerance = 1e-3;
};

/// Streaming reader for the sample block. Holds one record at a time.
class SampleReader {
 public:
  SampleReader(const std::filesystem::path& path, std::uint32_t dim, std::uint32_t num_classes,
               ReadOptions opts = {});

  /// Next record, or nullopt at a clean end of file. Throws FormatError with
  /// the byte offset of the offending field.
  std::optional<SampleRecord> next();

  /// Skips `n` records without decoding their features.
  void skip(std::uint64_t n);

  std::uint64_t offset() const { return offset_; }
  std::uint64_t records_read() const { return records_; }
  /// Largest |norm - 1| over all rows read so far.
  double max_norm_deviation() const { return max_dev_; }

 private:
  bool read_exact(void* dst, std::size_t n, bool allow_eof);

  std::ifstream in_;
  std::uint32_t dim_;
  std::uint32_t num_classes_;
  ReadOptions opts_;
  std::uint64_t offset_ = 0;
  std::uint64_t records_ = 0;
  double max_dev_ = 0.0;
  std::vector<float> buf_;
};

/// Streaming writer for the sample block.
class SampleWriter {
 public:
  SampleWriter(const std::filesystem::path& path, std::uint32_t dim, std::uint32_t num_classes);
  void write(const SampleRecord& r);
  void close();

 private:
  std::ofstream out_;
  std::uint32_t dim_;
};

void write_samples(const std::vector<SampleRecord>& records, const std::filesystem::path& path,
                   std::uint32_t dim, std::uint32_t num_classes);
std::vector<SampleRecord> read_samples(const std::filesystem::path& path, std::uint32_t dim,
                                       std::uint32_t num_classes, ReadOptions opts = {});

Matrix read_text_features(const std::filesystem::path& path, std::uint32_t dim,
                          std::uint32_t num_classes, ReadOptions opts = {});
void write_text_features(const Matrix& text, const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Synthetic data
// ---------------------------------------------------------------------------

struct SynthConfig {
  std::size_t num_classes = 10;
  std::size_t dim = 64;
  std::size_t samples = 2000;
  double label_noise_rate = 0.0;  // insertion noise, applied by the engine
  double class_spread = 0.3;      // per-coordinate std of within-class noise
  double view_jitter = 0.1;       // per-coordinate std of augmentation noise
  double text_jitter = 0.15;      // per-coordinate std of text-feature offset
  std::size_t n_views = 16;
  std::uint64_t seed = 0;

  void validate() const;
};

struct SynthDataset {
  Manifest manifest;
  Matrix directions;  // K x d class directions
  Matrix text;        // K x d text features
  std::vector<SampleRecord> samples;
};

SynthDataset synth_generate(const SynthConfig& cfg);

/// Writes manifest.json, text.bin and samples.bin into `dir`. Returns the
/// manifest path.
std::filesystem::path write_dataset(const SynthDataset& ds, const std::filesystem::path& dir);

}  // namespace crg
