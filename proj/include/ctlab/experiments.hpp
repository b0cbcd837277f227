#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "ctlab/geometry.hpp"
#include "ctlab/phantom.hpp"
#include "ctlab/sampler.hpp"
#include "ctlab/schedules.hpp"

namespace ctlab {

/// Configuration problems (bad file, unknown keys, invalid values); the CLI
/// maps these to exit code 2.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class ExperimentKind { gen_dataset, sweep, schedule_grid, gap, reconstruct };

enum class Domain { sim_std, sim_cad, sim_recon_surrogate };

const char* to_string(ExperimentKind e);
const char* to_string(Domain d);

enum class PriorKind { zero, gaussian, smoothing, external };

struct PriorConfig {
  PriorKind kind = PriorKind::smoothing;
  double sigma_max_px = 2.0;       // smoothing
  double gaussian_tau2 = 1.0;      // gaussian (flat zero-mean prior)
  std::string executable;          // external
  double timeout_seconds = 60.0;   // external

  std::string name() const;
};

struct MismatchSettings {
  bool enabled = false;
  MismatchConfig config;
  int supersample_side = 1024;  // resolution the mismatched measurement is synthesized at
};

struct DatasetConfig {
  std::string kind = "std";  // std | exp | mix
  int count = 1000;
  PerturbationConfig perturb;
  bool rasterize_samples = false;
  int raster_side = 128;
};

/// Calibration from the dimensionless phantom tables to attenuation per mm;
/// keeps simulated line integrals in a physically plausible range (peak
/// around 2.5) so the transmission-domain mismatch stages behave sanely.
inline constexpr double kDefaultAttenuationPerUnit = 0.03;

struct ExperimentConfig {
  ExperimentKind experiment = ExperimentKind::sweep;
  std::uint64_t master_seed = 0;
  std::filesystem::path out_dir = "out";
  int threads = 1;
  double attenuation_per_unit = kDefaultAttenuationPerUnit;

  std::vector<Domain> domains{Domain::sim_std};
  std::vector<PriorConfig> priors{PriorConfig{}};
  ScannerPreset scanner;
  AngularSpan span = AngularSpan::half;
  int grid_side = 128;
  std::vector<int> views;
  std::vector<int> nfes;
  std::vector<GammaSchedule> gammas;
  std::vector<std::uint64_t> seeds;

  SamplerConfig sampler;  // nfe/gamma/seed fields are overridden per cell
  int cgls_iters = 30;
  ScheduleKind noise_schedule_kind = ScheduleKind::cosine;
  int total_steps = 1000;

  MismatchSettings mismatch;
  std::vector<int> resolutions{128, 256, 512};
  int profile_row = -1;  // -1: scale 25/128 with resolution

  DatasetConfig dataset;
  bool write_images = true;
  int snapshot_stride = 0;

  std::uint64_t config_hash() const;
  std::string resolved_json() const;  // canonical dump, also used for hashing
};

/// Parses and validates a config file, applying per-experiment defaults.
/// Overrides (negative/empty = keep file value) come from the CLI flags.
ExperimentConfig load_config(const std::filesystem::path& path,
                             long long seed_override = -1,
                             const std::string& out_override = {},
                             int threads_override = -1,
                             int snapshot_override = -1);

/// Built-in defaults when no config file is given.
ExperimentConfig default_config(ExperimentKind kind);

/// Ground-truth image for a test domain at the given grid, in phantom units.
ImageGrid domain_truth(Domain d, const GridSpec& grid);

int run_sweep(const ExperimentConfig& cfg);
int run_schedule_grid(const ExperimentConfig& cfg);
int run_gap(const ExperimentConfig& cfg);
int run_gen_dataset(const ExperimentConfig& cfg);
int run_reconstruct(const ExperimentConfig& cfg);

/// Dispatches on cfg.experiment; returns the process exit code (0 or 3).
int run_experiment(const ExperimentConfig& cfg);

}  // namespace ctlab
