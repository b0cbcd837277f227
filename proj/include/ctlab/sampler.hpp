#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <utility>
#include <vector>

#include "ctlab/geometry.hpp"
#include "ctlab/image.hpp"
#include "ctlab/prior.hpp"
#include "ctlab/rng.hpp"
#include "ctlab/schedules.hpp"
#include "ctlab/solvers.hpp"

namespace ctlab {

enum class DataConsistencyForm { regularized, unregularized, gradient_surrogate };

struct SamplerConfig {
  int nfe = 1000;
  int m_steps = 5;
  double eta = 0.85;
  double sigma_y = 1e-7;  // measurement-noise level, recorded alongside results
  GammaSchedule gamma_schedule = GammaSchedule::constant(1.0);
  std::uint64_t seed = 0;
  DataConsistencyForm form = DataConsistencyForm::regularized;
  int snapshot_stride = 0;  // keep every k-th denoised iterate; 0 disables
};

struct TrajectoryStep {
  int step = 0;   // position in the plan, 0-based
  int t = 0;      // timestep index
  double gamma = 0.0;
  double residual = 0.0;  // ||y - A x_hat'|| after data consistency
  std::optional<ImageGrid> snapshot;
};

struct Trajectory {
  std::vector<TrajectoryStep> steps;

  void write_csv(const std::filesystem::path& path) const;
};

/// Denoised estimate from the predicted noise:
///   x_hat = (x_t - sqrt(1 - ab_t) * eps(x_t)) / sqrt(ab_t).
ImageGrid tweedie(const ImageGrid& x_t, int t, const Denoiser& denoiser,
                  const NoiseSchedule& schedule);

/// Reverse update from t to t_prev < t given the (possibly data-corrected)
/// denoised estimate. The noise direction is re-derived from (x_t, x_hat),
/// sigma_t = eta * sqrt((1-ab_p)/(1-ab_t)) * sqrt(1 - ab_t/ab_p), and a fresh
/// standard normal draw is consumed only when sigma_t > 0, so eta = 0 chains
/// never touch the random source.
ImageGrid ddim_step(const ImageGrid& x_hat, const ImageGrid& x_t, int t, int t_prev,
                    double eta, const NoiseSchedule& schedule, Rng& rng);

/// One explicit gradient step on 1/2 ||y - A x||^2 evaluated at x_hat:
/// returns x_hat - gamma_t * A^T (A x_hat - y).
ImageGrid dps_gradient_step(const ImageGrid& x_hat, const Sinogram& y,
                            const FanBeamGeometry& g, double gamma_t);

/// Full reconstruction loop: x_T ~ N(0, I), then for each plan step
/// denoise (tweedie), apply data consistency (per cfg.form), and re-noise
/// with the DDIM update. The returned image is the final data-corrected
/// denoised estimate; no noise is injected after the last step.
std::pair<ImageGrid, Trajectory> dds_reconstruct(const Sinogram& y,
                                                 const FanBeamGeometry& g,
                                                 const GridSpec& grid,
                                                 const Denoiser& denoiser,
                                                 const NoiseSchedule& schedule,
                                                 const SamplerConfig& cfg);

/// Same loop with a caller-provided random source (draw-count audits).
std::pair<ImageGrid, Trajectory> dds_reconstruct(const Sinogram& y,
                                                 const FanBeamGeometry& g,
                                                 const GridSpec& grid,
                                                 const Denoiser& denoiser,
                                                 const NoiseSchedule& schedule,
                                                 const SamplerConfig& cfg, Rng& rng);

}  // namespace ctlab
