#pragma once

// Config-driven experiment runner. A run parses the TOML config, resolves the
// seed (explicit > MFJE_SEED > [mc].seed > 0), executes one experiment and
// writes its CSV/JSON results plus manifest.json into the output directory.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mfje/kernel.hpp"
#include "mfje/metrics.hpp"
#include "mfje/parallel.hpp"
#include "mfje/simulate.hpp"

namespace mfje {

struct RunOptions {
  std::string config_text;
  std::string out_dir;
  // Subcommand; must agree with [experiment].name when both are given.
  std::optional<std::string> experiment;
  std::optional<std::uint64_t> seed;
  unsigned workers = default_workers();
  bool quiet = false;
  // When false, MFJE_SEED is ignored (reruns use the recorded seed).
  bool use_env_seed = true;
};

struct OutputFile {
  std::string name;
  std::string hash;  // FNV-1a of the content with timing columns blanked
};

struct RunResult {
  std::string experiment;
  std::string preset;
  std::uint64_t seed = 0;
  double wall_time_ms = 0.0;
  std::vector<OutputFile> files;
};

// Canonical experiment name, or empty for unknown names. Accepts the
// subcommand spellings (converge, reserve-sird, claims-gamma).
std::string canonical_experiment(const std::string& name);
std::vector<std::string> experiment_names();

RunResult run_experiment(const RunOptions& options);

struct RerunResult {
  RunResult run;
  // Files whose hash differs from the manifest (empty when reproduced).
  std::vector<std::string> mismatched;
};

RerunResult rerun_from_manifest(const std::string& manifest_path, const std::string& out_dir,
                                unsigned workers = default_workers(), bool quiet = true);

// Blanks the named columns of a CSV text (header row kept) before hashing.
std::string mask_csv_columns(const std::string& csv, std::span<const std::string> columns);

// ---- chaos-convergence ------------------------------------------------------

struct ChaosRow {
  std::size_t n = 0;
  std::size_t replications = 0;
  // Gap statistics over replications of the per-replication mean sup-distance.
  GapSummary gap;
  double fournier_beta = 0.0;
  bool crn_fallback = false;
};

struct ChaosResult {
  std::vector<ChaosRow> rows;
  std::optional<double> slope;
  std::optional<double> r2;
  bool strictly_decreasing = false;
};

// Coupled interacting / mean-field pairs for each n, with the mean-field flow
// from the non-linear forward solver on `grid` (finite spaces only).
ChaosResult chaos_convergence(const IntensityKernel& kernel, const MeasureSnapshot& initial_law, Horizon horizon,
                              std::span<const std::size_t> n_list, std::size_t replications, std::size_t grid_points,
                              double fournier_q, std::uint64_t seed, unsigned workers = default_workers());

}  // namespace mfje
