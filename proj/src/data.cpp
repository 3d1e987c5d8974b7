#include "crg/data.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <iomanip>
#include <sstream>

#include <json.hpp>

#include "crg/rng.hpp"

namespace crg {
namespace {

using ojson = nlohmann::ordered_json;

void put_u32(std::ostream& out, std::uint32_t v) {
  char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
  out.write(b, 4);
}

void put_u64(std::ostream& out, std::uint64_t v) {
  char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
  out.write(b, 8);
}

void put_f32(std::ostream& out, double v) { put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(v))); }

std::uint32_t get_u32(const unsigned char* b) {
  std::uint32_t v = 0;
  for (int i = 3; i >= 0; --i) v = (v << 8) | b[i];
  return v;
}

std::uint64_t get_u64(const unsigned char* b) {
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | b[i];
  return v;
}

void write_header(std::ostream& out, const char (&magic)[8], std::uint32_t dim,
                  std::uint32_t num_classes) {
  out.write(magic, 8);
  put_u32(out, kFormatVersion);
  put_u32(out, dim);
  put_u32(out, num_classes);
}

// Reads and checks the 20-byte block header.
void read_header(std::istream& in, const char (&magic)[8], std::uint32_t dim,
                 std::uint32_t num_classes) {
  unsigned char h[20];
  in.read(reinterpret_cast<char*>(h), sizeof h);
  if (in.gcount() != static_cast<std::streamsize>(sizeof h)) {
    throw FormatError("truncated block header", static_cast<std::uint64_t>(in.gcount()));
  }
  if (std::memcmp(h, magic, 8) != 0) throw FormatError("bad block magic", 0);
  const std::uint32_t version = get_u32(h + 8);
  if (version != kFormatVersion) {
    throw VersionError("unsupported block version " + std::to_string(version));
  }
  if (get_u32(h + 12) != dim) throw FormatError("block dimension does not match manifest", 12);
  if (get_u32(h + 16) != num_classes) {
    throw FormatError("block class count does not match manifest", 16);
  }
}

// Widens one stored row, tracking and optionally removing the norm drift.
void load_row(const float* src, std::span<double> dst, const ReadOptions& opts, double& max_dev,
              std::uint64_t offset) {
  double ss = 0.0;
  for (std::size_t c = 0; c < dst.size(); ++c) {
    dst[c] = static_cast<double>(src[c]);
    if (!std::isfinite(dst[c])) throw FormatError("non-finite feature value", offset);
    ss += dst[c] * dst[c];
  }
  const double n = std::sqrt(ss);
  const double dev = std::abs(n - 1.0);
  if (dev > opts.norm_tolerance) throw FormatError("feature row is not unit-norm", offset);
  max_dev = std::max(max_dev, dev);
  if (opts.renormalize) {
    for (double& x : dst) x /= n;
  }
}

}  // namespace

// ---------------------------------------------------------------------------
// Manifest
// ---------------------------------------------------------------------------

void Manifest::validate() const {
  if (dim == 0 || num_classes == 0) throw FormatError("manifest needs positive dim and num_classes", 0);
  if (class_names.size() != num_classes) {
    throw FormatError("manifest lists " + std::to_string(class_names.size()) +
                          " class names for " + std::to_string(num_classes) + " classes",
                      0);
  }
  if (insertion_noise && !(*insertion_noise >= 0.0 && *insertion_noise <= 1.0)) {
    throw FormatError("insertion_noise must lie in [0, 1]", 0);
  }
}

void write_manifest(const Manifest& m, const std::filesystem::path& path) {
  ojson j;
  j["format_version"] = m.format_version;
  j["dim"] = m.dim;
  j["num_classes"] = m.num_classes;
  j["class_names"] = m.class_names;
  j["text_features"] = m.text_features;
  j["samples"] = m.samples;
  j["dataset"] = m.dataset;
  j["prompt_note"] = m.prompt_note;
  if (m.insertion_noise) j["insertion_noise"] = *m.insertion_noise;
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw InvalidInput("cannot write manifest " + path.string());
  out << j.dump(2) << '\n';
  if (!out) throw InvalidInput("failed writing manifest " + path.string());
}

Manifest read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InvalidInput("cannot open manifest " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  const std::string text = ss.str();
  ojson j;
  try {
    j = ojson::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError("malformed manifest: " + std::string(e.what()), e.byte);
  }
  Manifest m;
  try {
    m.format_version = j.at("format_version").get<std::uint32_t>();
    if (m.format_version != kFormatVersion) {
      throw VersionError("unsupported manifest version " + std::to_string(m.format_version));
    }
    m.dim = j.at("dim").get<std::uint32_t>();
    m.num_classes = j.at("num_classes").get<std::uint32_t>();
    m.class_names = j.at("class_names").get<std::vector<std::string>>();
    m.text_features = j.at("text_features").get<std::string>();
    m.samples = j.at("samples").get<std::string>();
    m.dataset = j.value("dataset", "");
    m.prompt_note = j.value("prompt_note", "");
    if (j.contains("insertion_noise")) m.insertion_noise = j.at("insertion_noise").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("malformed manifest field: " + std::string(e.what()), 0);
  }
  m.validate();
  return m;
}

std::filesystem::path resolve(const std::filesystem::path& manifest_path, const std::string& rel) {
  const std::filesystem::path p(rel);
  if (p.is_absolute()) return p;
  return manifest_path.parent_path() / p;
}

// ---------------------------------------------------------------------------
// Sample block
// ---------------------------------------------------------------------------

SampleReader::SampleReader(const std::filesystem::path& path, std::uint32_t dim,
                           std::uint32_t num_classes, ReadOptions opts)
    : in_(path, std::ios::binary), dim_(dim), num_classes_(num_classes), opts_(opts) {
  if (!in_) throw InvalidInput("cannot open sample block " + path.string());
  read_header(in_, kSampleMagic, dim, num_classes);
  offset_ = 20;
}

bool SampleReader::read_exact(void* dst, std::size_t n, bool allow_eof) {
  in_.read(static_cast<char*>(dst), static_cast<std::streamsize>(n));
  const auto got = static_cast<std::size_t>(in_.gcount());
  if (got == n) return true;
  if (got == 0 && allow_eof) return false;
  throw FormatError("truncated record", offset_ + got);
}

std::optional<SampleRecord> SampleReader::next() {
  unsigned char head[16];
  const std::uint64_t record_start = offset_;
  if (!read_exact(head, sizeof head, true)) return std::nullopt;
  SampleRecord r;
  r.id = get_u64(head);
  r.label = static_cast<std::int32_t>(get_u32(head + 8));
  const std::uint32_t n_views = get_u32(head + 12);
  if (r.label < -1 || r.label >= static_cast<std::int32_t>(num_classes_)) {
    throw FormatError("label out of range", record_start + 8);
  }
  if (n_views == 0) throw FormatError("record has zero views", record_start + 12);
  offset_ += sizeof head;
  const std::size_t count = static_cast<std::size_t>(n_views) * dim_;
  buf_.resize(count);
  static_assert(std::endian::native == std::endian::little,
                "feature blocks are read in native little-endian order");
  read_exact(buf_.data(), count * sizeof(float), false);
  r.views = Matrix(n_views, dim_);
  for (std::uint32_t v = 0; v < n_views; ++v) {
    load_row(buf_.data() + static_cast<std::size_t>(v) * dim_, r.views.row(v), opts_, max_dev_,
             offset_ + static_cast<std::uint64_t>(v) * dim_ * sizeof(float));
  }
  offset_ += count * sizeof(float);
  ++records_;
  return r;
}

void SampleReader::skip(std::uint64_t n) {
  unsigned char head[16];
  for (std::uint64_t i = 0; i < n; ++i) {
    const std::uint64_t record_start = offset_;
    if (!read_exact(head, sizeof head, true)) {
      throw FormatError("stream ended while skipping to the resume point", record_start);
    }
    const std::uint32_t n_views = get_u32(head + 12);
    if (n_views == 0) throw FormatError("record has zero views", record_start + 12);
    offset_ += sizeof head;
    const std::uint64_t bytes = static_cast<std::uint64_t>(n_views) * dim_ * sizeof(float);
    in_.seekg(static_cast<std::streamoff>(bytes), std::ios::cur);
    if (!in_) throw FormatError("truncated record", offset_);
    offset_ += bytes;
    ++records_;
  }
}

SampleWriter::SampleWriter(const std::filesystem::path& path, std::uint32_t dim,
                           std::uint32_t num_classes)
    : out_(path, std::ios::binary | std::ios::trunc), dim_(dim) {
  if (!out_) throw InvalidInput("cannot write sample block " + path.string());
  write_header(out_, kSampleMagic, dim, num_classes);
}

void SampleWriter::write(const SampleRecord& r) {
  if (r.views.rows() == 0) throw InvalidInput("record must have at least one view");
  if (r.views.cols() != dim_) throw ConfigMismatch("record dimension does not match block");
  put_u64(out_, r.id);
  put_u32(out_, static_cast<std::uint32_t>(r.label));
  put_u32(out_, static_cast<std::uint32_t>(r.views.rows()));
  for (double x : r.views.flat()) put_f32(out_, x);
}

void SampleWriter::close() {
  out_.flush();
  if (!out_) throw InvalidInput("failed writing sample block");
  out_.close();
}

void write_samples(const std::vector<SampleRecord>& records, const std::filesystem::path& path,
                   std::uint32_t dim, std::uint32_t num_classes) {
  SampleWriter w(path, dim, num_classes);
  for (const auto& r : records) w.write(r);
  w.close();
}

std::vector<SampleRecord> read_samples(const std::filesystem::path& path, std::uint32_t dim,
                                       std::uint32_t num_classes, ReadOptions opts) {
  SampleReader reader(path, dim, num_classes, opts);
  std::vector<SampleRecord> out;
  while (auto r = reader.next()) out.push_back(std::move(*r));
  return out;
}

// ---------------------------------------------------------------------------
// Text block
// ---------------------------------------------------------------------------

void write_text_features(const Matrix& text, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw InvalidInput("cannot write text block " + path.string());
  write_header(out, kTextMagic, static_cast<std::uint32_t>(text.cols()),
               static_cast<std::uint32_t>(text.rows()));
  for (double x : text.flat()) put_f32(out, x);
  if (!out) throw InvalidInput("failed writing text block " + path.string());
}

Matrix read_text_features(const std::filesystem::path& path, std::uint32_t dim,
                          std::uint32_t num_classes, ReadOptions opts) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InvalidInput("cannot open text block " + path.string());
  read_header(in, kTextMagic, dim, num_classes);
  std::vector<float> buf(static_cast<std::size_t>(dim) * num_classes);
  in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size() * 4));
  if (static_cast<std::size_t>(in.gcount()) != buf.size() * 4) {
    throw FormatError("truncated text block", 20 + static_cast<std::uint64_t>(in.gcount()));
  }
  if (in.peek() != std::char_traits<char>::eof()) {
    throw FormatError("trailing bytes after text block", 20 + buf.size() * 4);
  }
  Matrix text(num_classes, dim);
  double dev = 0.0;
  for (std::uint32_t k = 0; k < num_classes; ++k) {
    load_row(buf.data() + static_cast<std::size_t>(k) * dim, text.row(k), opts, dev,
             20 + static_cast<std::uint64_t>(k) * dim * 4);
  }
  return text;
}

// ---------------------------------------------------------------------------
// Synthetic generator
// ---------------------------------------------------------------------------

void SynthConfig::validate() const {
  if (num_classes < 2 || dim < 2) throw ConfigMismatch("synthetic data needs K >= 2 and d >= 2");
  if (n_views < 1) throw ConfigMismatch("synthetic data needs at least one view");
  if (!(label_noise_rate >= 0.0 && label_noise_rate <= 1.0)) {
    throw ConfigMismatch("noise rate must lie in [0, 1]");
  }
  if (!(class_spread >= 0.0) || !(view_jitter >= 0.0) || !(text_jitter >= 0.0)) {
    throw ConfigMismatch("noise scales must be non-negative");
  }
}

namespace {

// normalize(base + scale * N(0, I)); returns base unchanged when scale is 0.
Vector perturb(std::span<const double> base, double scale, Rng& rng) {
  Vector v(base.begin(), base.end());
  if (scale == 0.0) return v;
  for (double& x : v) x += scale * rng.normal();
  return normalize(v);
}

}  // namespace

SynthDataset synth_generate(const SynthConfig& cfg) {
  cfg.validate();
  Rng rng(cfg.seed);
  const std::size_t k_classes = cfg.num_classes;
  const std::size_t d = cfg.dim;

  SynthDataset ds;
  ds.directions = Matrix(k_classes, d);
  for (std::size_t k = 0; k < k_classes; ++k) {
    Vector g(d);
    for (double& x : g) x = rng.normal();
    const Vector u = normalize(g);
    std::copy(u.begin(), u.end(), ds.directions.row(k).begin());
  }
  ds.text = Matrix(k_classes, d);
  for (std::size_t k = 0; k < k_classes; ++k) {
    const Vector t = perturb(ds.directions.row(k), cfg.text_jitter, rng);
    std::copy(t.begin(), t.end(), ds.text.row(k).begin());
  }

  ds.samples.reserve(cfg.samples);
  for (std::size_t i = 0; i < cfg.samples; ++i) {
    SampleRecord r;
    r.id = i;
    const auto c = static_cast<std::size_t>(rng.index(k_classes));
    r.label = static_cast<std::int32_t>(c);
    const Vector base = perturb(ds.directions.row(c), cfg.class_spread, rng);
    r.views = Matrix(cfg.n_views, d);
    std::copy(base.begin(), base.end(), r.views.row(0).begin());
    for (std::size_t v = 1; v < cfg.n_views; ++v) {
      const Vector view = perturb(base, cfg.view_jitter, rng);
      std::copy(view.begin(), view.end(), r.views.row(v).begin());
    }
    ds.samples.push_back(std::move(r));
  }

  Manifest& m = ds.manifest;
  m.dim = static_cast<std::uint32_t>(d);
  m.num_classes = static_cast<std::uint32_t>(k_classes);
  for (std::size_t k = 0; k < k_classes; ++k) {
    std::ostringstream name;
    name << "class_" << std::setw(3) << std::setfill('0') << k;
    m.class_names.push_back(name.str());
  }
  m.text_features = "text.bin";
  m.samples = "samples.bin";
  m.dataset = "synthetic";
  std::ostringstream note;
  note << "synthetic spread=" << cfg.class_spread << " view_jitter=" << cfg.view_jitter
       << " text_jitter=" << cfg.text_jitter << " views=" << cfg.n_views << " seed=" << cfg.seed;
  m.prompt_note = note.str();
  if (cfg.label_noise_rate > 0.0) m.insertion_noise = cfg.label_noise_rate;
  return ds;
}

std::filesystem::path write_dataset(const SynthDataset& ds, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  const auto manifest_path = dir / "manifest.json";
  write_text_features(ds.text, resolve(manifest_path, ds.manifest.text_features));
  write_samples(ds.samples, resolve(manifest_path, ds.manifest.samples), ds.manifest.dim,
                ds.manifest.num_classes);
  write_manifest(ds.manifest, manifest_path);
  return manifest_path;
}

}  // namespace crg
