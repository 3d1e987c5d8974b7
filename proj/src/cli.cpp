#include "crg/cli.hpp"

#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <ostream>
#include <sstream>

#include <CLI11.hpp>

#include "crg/adapt.hpp"

namespace crg::cli {

namespace fs = std::filesystem;

ActiveComponents active_components(const EngineConfig& cfg) {
  ActiveComponents a;
  a.negative_cache = cfg.use_negative_cache;
  a.gda = cfg.use_gda;
  a.inter_text_loss = cfg.xi1 > 0.0;
  a.pos_neg_loss = cfg.xi2 > 0.0 && cfg.use_negative_cache;
  return a;
}

std::vector<std::string> ablation_row_flags(int row) {
  switch (row) {
    case 1:
      return {"--disable-neg", "--disable-gda", "--xi1", "0", "--xi2", "0"};
    case 2:
      return {"--disable-neg", "--disable-gda", "--xi2", "0"};
    case 3:
      return {"--disable-gda", "--xi1", "0", "--xi2", "0"};
    case 4:
      return {"--disable-gda", "--xi1", "0"};
    case 5:
      return {"--disable-neg", "--xi1", "0", "--xi2", "0"};
    case 6:
      return {};
    default:
      throw InvalidInput("ablation rows are numbered 1 to 6");
  }
}

EngineConfig resolve_config(const RunArgs& args, const Manifest& manifest) {
  EngineConfig cfg;
  cfg.dim = manifest.dim;
  cfg.num_classes = manifest.num_classes;
  if (manifest.insertion_noise) cfg.insertion_noise = *manifest.insertion_noise;
  if (args.config) {
    cfg = load_config_file(*args.config, cfg);
    if (cfg.dim != manifest.dim || cfg.num_classes != manifest.num_classes) {
      throw ConfigMismatch("config dimensions disagree with the manifest");
    }
  }
  if (const char* env = std::getenv("CRG_SEED")) {
    try {
      cfg.seed = std::stoull(env);
    } catch (const std::exception&) {
      throw ConfigMismatch(std::string("CRG_SEED is not an unsigned integer: ") + env);
    }
  }
  if (args.seed) cfg.seed = *args.seed;

  auto set = [](double& dst, const std::optional<double>& v) {
    if (v) dst = *v;
  };
  set(cfg.lambda1, args.lambda1);
  set(cfg.lambda2, args.lambda2);
  set(cfg.beta, args.beta);
  set(cfg.tau, args.tau);
  set(cfg.xi1, args.xi1);
  set(cfg.xi2, args.xi2);
  set(cfg.gamma, args.gamma);
  set(cfg.rho, args.rho);
  set(cfg.tau_t, args.tau_t);
  set(cfg.eta, args.eta);
  set(cfg.lr, args.lr);
  set(cfg.eps_cov, args.eps_cov);
  set(cfg.insertion_noise, args.insertion_noise);
  if (args.queue_size) cfg.queue_capacity = *args.queue_size;

  if (args.disable_gda) cfg.use_gda = false;
  if (args.disable_neg) cfg.use_negative_cache = false;
  if (args.disable_inter_loss) cfg.xi1 = 0.0;
  if (args.disable_posneg_loss) cfg.xi2 = 0.0;
  if (args.eq5_pseudolabel) cfg.pseudo_label_rule = DecisionRule::Similarity;
  if (args.raw_mean_negatives) cfg.negatives_from_raw_means = true;
  if (args.flip_confidence_threshold) cfg.flip_confidence_threshold = true;
  if (args.final_on_marginal) cfg.final_on_marginal = true;
  if (args.persist_residuals) cfg.persist_residuals = true;
  cfg.validate();
  return cfg;
}

namespace {

void check_writable_parent(const fs::path& p) {
  const fs::path parent = p.has_parent_path() ? p.parent_path() : fs::path(".");
  if (!fs::is_directory(parent)) {
    throw InvalidInput("output directory does not exist: " + parent.string());
  }
}

void write_atomically(const fs::path& path, const std::string& content) {
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw InvalidInput("cannot write " + tmp.string());
    out << content;
    out.flush();
    if (!out) throw InvalidInput("failed writing " + tmp.string());
  }
  fs::rename(tmp, path);
}

template <class F>
int guarded(std::ostream& err, F&& body) {
  try {
    return body();
  } catch (const NumericalError& e) {
    err << "crg: numerical failure: " << e.what() << '\n';
    return kNumerical;
  } catch (const std::exception& e) {
    err << "crg: " << e.what() << '\n';
    return kUsage;
  }
}

}  // namespace

int cmd_run(const RunArgs& args, std::ostream& err) {
  return guarded(err, [&] {
    // Validate every path before any state is touched.
    if (!fs::is_regular_file(args.manifest)) {
      throw InvalidInput("manifest not found: " + args.manifest.string());
    }
    if (args.config && !fs::is_regular_file(*args.config)) {
      throw InvalidInput("config not found: " + args.config->string());
    }
    check_writable_parent(args.metrics);
    if (args.log) check_writable_parent(*args.log);
    if (args.checkpoint) check_writable_parent(*args.checkpoint);

    const Manifest manifest = read_manifest(args.manifest);
    const EngineConfig cfg = resolve_config(args, manifest);
    const Matrix text = read_text_features(resolve(args.manifest, manifest.text_features),
                                           manifest.dim, manifest.num_classes);

    const bool resume = args.checkpoint && fs::exists(*args.checkpoint);
    Engine engine = resume ? Engine::load_checkpoint(*args.checkpoint) : Engine(cfg, text);
    if (resume && !(engine.config() == cfg)) {
      throw ConfigMismatch("checkpoint was written with a different configuration");
    }

    SampleReader reader(resolve(args.manifest, manifest.samples), manifest.dim,
                        manifest.num_classes);
    reader.skip(engine.processed());

    std::ofstream log;
    if (args.log) {
      log.open(*args.log, std::ios::binary | (resume ? std::ios::app : std::ios::trunc));
      if (!log) throw InvalidInput("cannot write log " + args.log->string());
    }

    const SampleSource source = [&]() -> std::optional<SampleRecord> {
      if (args.checkpoint && args.checkpoint_every > 0 && engine.processed() > 0 &&
          engine.processed() % args.checkpoint_every == 0) {
        engine.save_checkpoint(*args.checkpoint);
      }
      return reader.next();
    };
    const MetricsReport report = run_stream(engine, source, args.log ? &log : nullptr);
    if (args.checkpoint) engine.save_checkpoint(*args.checkpoint);
    write_atomically(args.metrics, report.to_json());
    return int{kOk};
  });
}

int cmd_simulate(const SynthConfig& cfg, const fs::path& out_dir, std::ostream& err) {
  return guarded(err, [&] {
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (ec || !fs::is_directory(out_dir)) {
      throw InvalidInput("cannot create output directory " + out_dir.string());
    }
    write_dataset(synth_generate(cfg), out_dir);
    return int{kOk};
  });
}

int cmd_report(const fs::path& metrics, const std::string& format, std::ostream& out,
               std::ostream& err) {
  return guarded(err, [&] {
    if (format != "table" && format != "csv" && format != "json") {
      throw InvalidInput("unknown report format '" + format + "' (table, csv, json)");
    }
    std::ifstream in(metrics, std::ios::binary);
    if (!in) throw InvalidInput("cannot read metrics " + metrics.string());
    std::stringstream ss;
    ss << in.rdbuf();
    const MetricsReport r = MetricsReport::from_json(ss.str());
    const auto& series = r.cache_error_rate;

    if (format == "json") {
      out << r.to_json();
      return int{kOk};
    }
    if (format == "csv") {
      out << "step,cache_error_rate\n";
      out << std::setprecision(17);
      for (std::size_t i = 0; i < series.size(); ++i) out << i + 1 << ',' << series[i] << '\n';
      return int{kOk};
    }

    auto opt = [](const std::optional<double>& v) {
      std::ostringstream o;
      if (v) {
        o << std::fixed << std::setprecision(4) << *v;
      } else {
        o << "n/a";
      }
      return o.str();
    };
    const double sum = std::accumulate(series.begin(), series.end(), 0.0);
    out << std::left;
    out << std::setw(22) << "samples" << r.samples << '\n';
    out << std::setw(22) << "labeled" << r.labeled << '\n';
    out << std::setw(22) << "accuracy" << opt(r.accuracy) << '\n';
    out << std::setw(22) << "zero_shot_accuracy" << opt(r.zero_shot_accuracy) << '\n';
    out << std::setw(22) << "ece" << opt(r.ece) << '\n';
    out << std::setw(22) << "inserted" << r.inserted << '\n';
    out << std::setw(22) << "replaced" << r.replaced << '\n';
    out << std::setw(22) << "discarded" << r.discarded << '\n';
    out << std::setw(22) << "noise_injections" << r.noise_injections << '\n';
    out << std::setw(22) << "text_updates" << r.text_updates << '\n';
    out << std::setw(22) << "degenerate_rows" << r.degenerate_rows << '\n';
    out << std::setw(22) << "fallbacks" << r.fallbacks << '\n';
    out << std::setw(22) << "error_rate_points" << series.size() << '\n';
    out << std::setw(22) << "error_rate_sum" << std::setprecision(17) << sum << '\n';
    out << '\n' << std::setw(10) << "step" << "cache_error_rate\n";
    for (std::size_t i = 0; i < series.size(); ++i) {
      out << std::setw(10) << i + 1 << std::setprecision(6) << std::fixed << series[i]
          << std::defaultfloat << '\n';
    }
    return int{kOk};
  });
}

int main(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Cache/residual/Gaussian test-time adaptation over embedding streams"};
  app.require_subcommand(1);

  RunArgs run;
  auto* run_cmd = app.add_subcommand("run", "Adapt over a manifest's stream and write metrics");
  run_cmd->add_option("--manifest", run.manifest, "Stream manifest")->required();
  run_cmd->add_option("--metrics", run.metrics, "Output metrics file")->required();
  run_cmd->add_option("--config", run.config, "Engine config (JSON)");
  run_cmd->add_option("--log", run.log, "Per-sample log (JSON lines)");
  run_cmd->add_option("--checkpoint", run.checkpoint, "Checkpoint file; resumes if present");
  run_cmd->add_option("--checkpoint-every", run.checkpoint_every, "Checkpoint interval (samples)");
  run_cmd->add_option("--seed", run.seed, "Seed (overrides CRG_SEED and config)");
  run_cmd->add_option("--lambda1", run.lambda1);
  run_cmd->add_option("--lambda2", run.lambda2);
  run_cmd->add_option("--beta", run.beta);
  run_cmd->add_option("--tau", run.tau);
  run_cmd->add_option("--xi1", run.xi1);
  run_cmd->add_option("--xi2", run.xi2);
  run_cmd->add_option("--gamma", run.gamma);
  run_cmd->add_option("--rho", run.rho);
  run_cmd->add_option("--tau-t", run.tau_t);
  run_cmd->add_option("--eta", run.eta);
  run_cmd->add_option("--lr", run.lr);
  run_cmd->add_option("--eps-cov", run.eps_cov);
  run_cmd->add_option("--queue-size", run.queue_size, "Per-class queue capacity M");
  run_cmd->add_option("--insertion-noise", run.insertion_noise);
  run_cmd->add_flag("--disable-gda", run.disable_gda, "Decide with the similarity rule");
  run_cmd->add_flag("--disable-neg", run.disable_neg, "Drop the negative prototypes");
  run_cmd->add_flag("--disable-inter-loss", run.disable_inter_loss, "Set xi1 = 0");
  run_cmd->add_flag("--disable-posneg-loss", run.disable_posneg_loss, "Set xi2 = 0");
  run_cmd->add_flag("--eq5-pseudolabel", run.eq5_pseudolabel, "Pseudo-label with the similarity rule");
  run_cmd->add_flag("--raw-mean-negatives", run.raw_mean_negatives);
  run_cmd->add_flag("--flip-confidence-threshold", run.flip_confidence_threshold);
  run_cmd->add_flag("--final-on-marginal", run.final_on_marginal);
  run_cmd->add_flag("--persist-residuals", run.persist_residuals);
  int ablation_row = 0;
  run_cmd->add_option("--ablation-row", ablation_row, "Preset for component ablation row 1-6")
      ->check(CLI::Range(1, 6));

  SynthConfig sim;
  fs::path sim_out;
  auto* sim_cmd = app.add_subcommand("simulate", "Generate a synthetic embedding stream");
  sim_cmd->add_option("--classes", sim.num_classes)->capture_default_str();
  sim_cmd->add_option("--dim", sim.dim)->capture_default_str();
  sim_cmd->add_option("--samples", sim.samples)->capture_default_str();
  sim_cmd->add_option("--noise", sim.label_noise_rate, "Insertion-noise rate")->capture_default_str();
  sim_cmd->add_option("--spread", sim.class_spread)->capture_default_str();
  sim_cmd->add_option("--jitter", sim.view_jitter)->capture_default_str();
  sim_cmd->add_option("--text-jitter", sim.text_jitter)->capture_default_str();
  sim_cmd->add_option("--views", sim.n_views)->capture_default_str();
  sim_cmd->add_option("--seed", sim.seed)->capture_default_str();
  sim_cmd->add_option("--out", sim_out, "Output directory")->required();

  fs::path report_path;
  std::string report_format = "table";
  auto* rep_cmd = app.add_subcommand("report", "Render a metrics file");
  rep_cmd->add_option("--metrics", report_path)->required();
  rep_cmd->add_option("--format", report_format, "table, csv or json")->capture_default_str();

  try {
    app.parse(argc, argv);
    if (ablation_row != 0) {
      // Re-parse with the preset flags prepended so explicit flags still win.
      std::vector<std::string> args{argv[0], "run"};
      for (const auto& f : ablation_row_flags(ablation_row)) args.push_back(f);
      for (int i = 2; i < argc; ++i) args.emplace_back(argv[i]);
      std::vector<const char*> ptrs;
      for (const auto& a : args) ptrs.push_back(a.c_str());
      run = RunArgs{};
      app.parse(static_cast<int>(ptrs.size()), ptrs.data());
    }
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "crg: " << e.what() << '\n';
    return kUsage;
  }

  if (run_cmd->parsed()) return cmd_run(run, err);
  if (sim_cmd->parsed()) return cmd_simulate(sim, sim_out, err);
  return cmd_report(report_path, report_format, out, err);
}

}  // namespace crg::cli
