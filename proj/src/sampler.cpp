#include "ctlab/sampler.hpp"

#include <cmath>
#include <fstream>

#include "ctlab/io.hpp"

namespace ctlab {

void Trajectory::write_csv(const std::filesystem::path& path) const {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot open for writing: " + path.string());
  f << "step,t,gamma,residual\n";
  for (const auto& s : steps)
    f << s.step << ',' << s.t << ',' << format_double(s.gamma) << ','
      << format_double(s.residual) << '\n';
}

ImageGrid tweedie(const ImageGrid& x_t, int t, const Denoiser& denoiser,
                  const NoiseSchedule& schedule) {
  const double ab = schedule.alpha_bar_at(t);
  if (!(ab > 0)) throw std::invalid_argument("tweedie: alpha_bar must be positive");
  const ImageGrid eps = denoiser.predict_noise(x_t, t, schedule);
  ImageGrid out = x_t;
  out.values = (x_t.values - std::sqrt(1.0 - ab) * eps.values) / std::sqrt(ab);
  return out;
}

ImageGrid ddim_step(const ImageGrid& x_hat, const ImageGrid& x_t, int t, int t_prev,
                    double eta, const NoiseSchedule& schedule, Rng& rng) {
  if (t_prev >= t) throw std::invalid_argument("ddim_step: need t_prev < t");
  if (eta < 0 || eta > 1) throw std::invalid_argument("ddim_step: eta must be in [0, 1]");
  require_same_shape(x_hat, x_t, "ddim_step");

  const double ab_t = schedule.alpha_bar_at(t);
  const double ab_p = schedule.alpha_bar_at(t_prev);

  // Noise direction implied by the (corrected) denoised estimate.
  ImageGrid eps = x_t;
  eps.values = (x_t.values - std::sqrt(ab_t) * x_hat.values) / std::sqrt(1.0 - ab_t);

  const double sigma_t =
      eta * std::sqrt((1.0 - ab_p) / (1.0 - ab_t)) * std::sqrt(1.0 - ab_t / ab_p);
  const double dir = std::sqrt(std::max(0.0, 1.0 - ab_p - sigma_t * sigma_t));

  ImageGrid out = x_hat;
  out.values = std::sqrt(ab_p) * x_hat.values + dir * eps.values;
  if (sigma_t > 0.0) {
    for (Eigen::Index i = 0; i < out.values.size(); ++i)
      out.values.data()[i] += sigma_t * rng.normal();
  }
  return out;
}

ImageGrid dps_gradient_step(const ImageGrid& x_hat, const Sinogram& y,
                            const FanBeamGeometry& g, double gamma_t) {
  const Sinogram ax = forward_project(x_hat, g);
  Sinogram resid = ax;
  resid.values = ax.values - y.values;
  const ImageGrid grad =
      back_project(resid, g, GridSpec{x_hat.side_pixels, x_hat.pixel_size_mm});
  ImageGrid out = x_hat;
  out.values = x_hat.values - gamma_t * grad.values;
  return out;
}

std::pair<ImageGrid, Trajectory> dds_reconstruct(const Sinogram& y,
                                                 const FanBeamGeometry& g,
                                                 const GridSpec& grid,
                                                 const Denoiser& denoiser,
                                                 const NoiseSchedule& schedule,
                                                 const SamplerConfig& cfg) {
  Rng rng(cfg.seed);
  return dds_reconstruct(y, g, grid, denoiser, schedule, cfg, rng);
}

std::pair<ImageGrid, Trajectory> dds_reconstruct(const Sinogram& y,
                                                 const FanBeamGeometry& g,
                                                 const GridSpec& grid,
                                                 const Denoiser& denoiser,
                                                 const NoiseSchedule& schedule,
                                                 const SamplerConfig& cfg, Rng& rng) {
  if (cfg.nfe < 1 || cfg.m_steps < 1)
    throw std::invalid_argument("dds_reconstruct: nfe and m_steps must be >= 1");
  if (cfg.eta < 0 || cfg.eta > 1)
    throw std::invalid_argument("dds_reconstruct: eta must be in [0, 1]");
  if (y.geometry_fingerprint != g.fingerprint())
    throw std::runtime_error("dds_reconstruct: sinogram geometry fingerprint does not match");

  const TimestepPlan plan = make_timesteps(schedule.total_steps, cfg.nfe);

  ImageGrid x = grid.make_zero();
  for (Eigen::Index i = 0; i < x.values.size(); ++i) x.values.data()[i] = rng.normal();

  Trajectory traj;
  traj.steps.reserve(plan.steps.size());
  ImageGrid result = x;

  for (int i = 0; i < plan.nfe(); ++i) {
    const int t = plan.steps[i];
    const double gamma_t = gamma_at(cfg.gamma_schedule, t, schedule.total_steps);

    ImageGrid x_hat = tweedie(x, t, denoiser, schedule);
    ImageGrid corrected;
    try {
      switch (cfg.form) {
        case DataConsistencyForm::regularized:
          corrected = dds_data_consistency(x_hat, y, g, gamma_t, cfg.m_steps);
          break;
        case DataConsistencyForm::unregularized:
          corrected = dds_data_consistency(x_hat, y, g, std::nullopt, cfg.m_steps);
          break;
        case DataConsistencyForm::gradient_surrogate:
          corrected = dps_gradient_step(x_hat, y, g, gamma_t);
          break;
      }
    } catch (const std::exception& e) {
      throw std::runtime_error("dds_reconstruct: step " + std::to_string(i) + " (t=" +
                               std::to_string(t) + "): " + e.what());
    }

    TrajectoryStep rec;
    rec.step = i;
    rec.t = t;
    rec.gamma = gamma_t;
    const Sinogram ax = forward_project(corrected, g);
    rec.residual = (y.values - ax.values).norm();
    if (cfg.snapshot_stride > 0 && i % cfg.snapshot_stride == 0) rec.snapshot = corrected;
    traj.steps.push_back(std::move(rec));

    if (i + 1 < plan.nfe()) {
      x = ddim_step(corrected, x, t, plan.steps[i + 1], cfg.eta, schedule, rng);
    } else {
      result = std::move(corrected);
    }
  }
  return {std::move(result), std::move(traj)};
}

}  // namespace ctlab
