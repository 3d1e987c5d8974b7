// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "cache_oracle.hpp"
#include "crg/adapt.hpp"
#include "crg/cli.hpp"
#include "crg/kernels.hpp"
#include "gda_oracle.hpp"
#include "objective_oracle.hpp"
#include "stream_oracle.hpp"
#include "support.hpp"

namespace {

using namespace crg;

struct Outcome {
  bool pass;
  std::string detail;
};

int failures = 0;

void criterion(const std::string& name, double limit_seconds, const std::function<Outcome()>& fn) {
  const auto start = std::chrono::steady_clock::now();
  Outcome o;
  try {
    o = fn();
  } catch (const std::exception& e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  if (limit_seconds > 0.0 && secs >= limit_seconds) {
    o.pass = false;
    o.detail += "; over the time limit";
  }
  if (!o.pass) ++failures;
  std::printf("%s  %-28s %s [%.2f s]\n", o.pass ? "PASS" : "FAIL", name.c_str(), o.detail.c_str(), secs);
  std::fflush(stdout);
}

std::string fmt(const char* f, double a, double b = 0.0, double c = 0.0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, a, b, c);
  return buf;
}

SynthDataset benchmark_dataset(std::uint64_t seed, double noise, std::size_t samples = 2000) {
  SynthConfig cfg;
  cfg.num_classes = 10;
  cfg.dim = 64;
  cfg.samples = samples;
  cfg.class_spread = 0.3;
  cfg.label_noise_rate = noise;
  cfg.seed = seed;
  return synth_generate(cfg);
}

double stream_accuracy(const SynthDataset& ds, EngineConfig cfg, double* zero_shot = nullptr) {
  Engine engine(cfg, ds.text);
  std::size_t i = 0;
  const MetricsReport r = run_stream(engine, [&]() -> std::optional<SampleRecord> {
    if (i >= ds.samples.size()) return std::nullopt;
    return ds.samples[i++];
  });
  if (zero_shot) *zero_shot = *r.zero_shot_accuracy;
  return *r.accuracy;
}

struct Trend {
  double full = 0.0;
  double no_gda = 0.0;
  double zero_shot = 0.0;
};

/// Mean accuracies over seeds 0..n-1 of the full method and the similarity
/// decision rule, plus the text-only baseline.
Trend benchmark(double noise, int seeds) {
  Trend t;
  for (int s = 0; s < seeds; ++s) {
    const SynthDataset ds = benchmark_dataset(static_cast<std::uint64_t>(s), noise);
    EngineConfig cfg = test::engine_config_for(ds);
    cfg.seed = static_cast<std::uint64_t>(s);
    double zs = 0.0;
    t.full += stream_accuracy(ds, cfg, &zs);
    t.zero_shot += zs;
    cfg.use_gda = false;
    t.no_gda += stream_accuracy(ds, cfg);
  }
  t.full /= seeds;
  t.no_gda /= seeds;
  t.zero_shot /= seeds;
  return t;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

int invoke(std::vector<std::string> args) {
  args.insert(args.begin(), "crg");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out;
  std::ostringstream err;
  const int code = cli::main(static_cast<int>(argv.size()), argv.data(), out, err);
  if (code != 0) std::fprintf(stderr, "%s", err.str().c_str());
  return code;
}

}  // namespace

int main() {
  std::printf("kernel backend: %s\n", std::string(kernels::name(kernels::active_backend())).c_str());

  criterion("gda-bayes-equivalence", 5.0, [] {
    Rng rng(2024);
    double worst = 0.0;
    for (int t = 0; t < 200; ++t) worst = std::max(worst, test::gda_posterior_error(test::random_gda_instance(rng)));
    return Outcome{worst <= 1e-9, fmt("200 instances, max abs error %.3g (tol 1e-9)", worst)};
  });

  criterion("gradient-exactness", 30.0, [] {
    Rng rng(2025);
    double worst = 0.0;
    for (int t = 0; t < 100; ++t) worst = std::max(worst, test::gradient_check_error(test::random_objective_instance(rng)));
    return Outcome{worst < 1e-4, fmt("100 instances, max relative error %.3g (tol 1e-4)", worst)};
  });

  criterion("cache-policy-oracle", 5.0, [] {
    Rng rng(2026);
    int bad = 0;
    for (int s = 0; s < 1000; ++s) bad += !test::replay_random_sequence(rng);
    return Outcome{bad == 0, fmt("1000 sequences, %g mismatches", bad)};
  });

  criterion("degradation-to-baseline", 0.0, [] {
    const SynthDataset ds = benchmark_dataset(7, 0.0, 100);
    auto count_differ = [&](double lr) {
      EngineConfig cfg = test::engine_config_for(ds);
      cfg.lambda1 = cfg.lambda2 = cfg.xi1 = cfg.xi2 = cfg.eta = 0.0;
      cfg.lr = lr;
      Engine engine(cfg, ds.text);
      int differ = 0;
      for (const SampleRecord& s : ds.samples) differ += engine.process(s).predicted != test::zero_shot_oracle(ds.text, s);
      return differ;
    };
    const int differ = count_differ(EngineConfig{}.lr);
    // The text residual still takes one TPT step; lr = 0 isolates that effect.
    const int frozen = count_differ(0.0);
    return Outcome{differ == 0, fmt("100 samples, %g differ from the zero-shot rule (%g with lr = 0)", differ, frozen)};
  });

  criterion("ablation-monotonicity", 600.0, [] {
    const Trend t = benchmark(0.2, 20);
    const bool ok = t.full >= t.no_gda && t.no_gda >= t.zero_shot;
    return Outcome{ok, fmt("20 seeds, noise 0.2: full %.4f, no-GDA %.4f, zero-shot %.4f", t.full, t.no_gda, t.zero_shot)};
  });

  criterion("gda-noise-robustness", 600.0, [] {
    const Trend t = benchmark(0.25, 20);
    return Outcome{t.full >= t.no_gda,
                   fmt("20 seeds, noise 0.25: Gaussian rule %.4f, similarity rule %.4f", t.full, t.no_gda)};
  });

  criterion("error-rate-tracking", 0.0, [] {
    const SynthDataset ds = benchmark_dataset(11, 0.25, 500);
    const EngineConfig cfg = test::engine_config_for(ds);
    Engine engine(cfg, ds.text);
    std::vector<SamplePrediction> preds;
    std::vector<double> direct;
    for (const SampleRecord& s : ds.samples) {
      preds.push_back(engine.process(s));
      direct.push_back(test::recount_error_rate(engine.cache()));
    }
    const auto& series = engine.metrics().report().cache_error_rate;
    const auto replay = test::replay_error_series(preds, cfg.num_classes, cfg.queue_capacity);
    const bool ok = series.size() == 500 && series == direct && series == replay;
    return Outcome{ok, fmt("500 samples, final error rate %.4f, exact match %g", series.back(), ok)};
  });

  criterion("determinism", 0.0, [] {
    test::TempDir dir;
    if (invoke({"simulate", "--samples", "300", "--noise", "0.2", "--seed", "5", "--out", dir.path().string()}) != 0) {
      return Outcome{false, "simulate failed"};
    }
    const std::string manifest = (dir / "manifest.json").string();
    for (const char* name : {"a.json", "b.json"}) {
      if (invoke({"run", "--manifest", manifest, "--metrics", (dir / name).string()}) != 0) {
        return Outcome{false, "run failed"};
      }
    }
    const std::string a = slurp(dir / "a.json");
    const bool same = !a.empty() && a == slurp(dir / "b.json");
    return Outcome{same, fmt("two runs, %g-byte metrics files identical", static_cast<double>(a.size()))};
  });

  criterion("fusion-unit-values", 0.0, [] {
    const FusionParams p;
    const double e[4] = {std::abs(pos_term(1.0, p) - 7.0), std::abs(neg_term(1.0, p) - 0.3),
                         std::abs(pos_term(0.8, p) - 7.0 * std::exp(-1.0)),
                         std::abs(neg_term(0.8, p) - 0.3 * std::exp(1.0))};
    const double worst = std::max({e[0], e[1], e[2], e[3]});
    return Outcome{worst <= 1e-12, fmt("pos(1), neg(1), pos(0.8), neg(0.8): max error %.3g", worst)};
  });

  std::printf("%d criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
