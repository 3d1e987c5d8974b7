#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "crg/core.hpp"
#include "crg/data.hpp"

namespace crg::cli {

enum ExitCode : int { kOk = 0, kUsage = 2, kNumerical = 3 };

/// Components of the method a configuration leaves switched on.
struct ActiveComponents {
  bool text_cache = true;
  bool positive_cache = true;
  bool negative_cache = false;
  bool gda = false;
  bool inter_text_loss = false;
  bool pos_neg_loss = false;

  friend bool operator==(const ActiveComponents&, const ActiveComponents&) = default;
};

ActiveComponents active_components(const EngineConfig& cfg);

/// Flag combinations reproducing the six rows of the component ablation
/// (row 1 = caches only, row 6 = full method).
std::vector<std::string> ablation_row_flags(int row);

struct RunArgs {
  std::filesystem::path manifest;
  std::filesystem::path metrics;
  std::optional<std::filesystem::path> config;
  std::optional<std::filesystem::path> log;
  std::optional<std::filesystem::path> checkpoint;
  std::size_t checkpoint_every = 0;
  std::optional<std::uint64_t> seed;

  // Overrides; unset means "keep the config/default value".
  std::optional<double> lambda1, lambda2, beta, tau, xi1, xi2, gamma, rho, tau_t, eta, lr,
      eps_cov, insertion_noise;
  std::optional<std::size_t> queue_size;

  bool disable_gda = false;
  bool disable_neg = false;
  bool disable_inter_loss = false;
  bool disable_posneg_loss = false;
  bool eq5_pseudolabel = false;
  bool raw_mean_negatives = false;
  bool flip_confidence_threshold = false;
  bool final_on_marginal = false;
  bool persist_residuals = false;
};

/// Resolves the effective config: defaults, manifest, config file, CRG_SEED,
/// then flags (highest precedence).
EngineConfig resolve_config(const RunArgs& args, const Manifest& manifest);

int cmd_run(const RunArgs& args, std::ostream& err);

int cmd_simulate(const SynthConfig& cfg, const std::filesystem::path& out_dir, std::ostream& err);

int cmd_report(const std::filesystem::path& metrics, const std::string& format, std::ostream& out,
               std::ostream& err);

/// Full command-line entry point (subcommands run, simulate, report).
int main(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace crg::cli
