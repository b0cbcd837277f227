#pragma once

#include <memory>
#include <string>

#include "ctlab/image.hpp"
#include "ctlab/schedules.hpp"

namespace ctlab {

/// Noise-prediction interface: given the noisy iterate x_t at timestep t,
/// return the predicted noise realization. Implementations must preserve the
/// image shape, return finite values for finite inputs, and be deterministic
/// in (x_t, t).
class Denoiser {
 public:
  virtual ~Denoiser() = default;
  virtual ImageGrid predict_noise(const ImageGrid& x_t, int t,
                                  const NoiseSchedule& schedule) const = 0;
};

/// Predicts zero noise everywhere; the degenerate prior for reduction tests.
class ZeroDenoiser final : public Denoiser {
 public:
  ImageGrid predict_noise(const ImageGrid& x_t, int t,
                          const NoiseSchedule& schedule) const override;
};

struct GaussianPriorParams {
  ImageGrid mean_image;
  double variance_tau2 = 1.0;
};

/// Exact noise prediction for an isotropic Gaussian prior x0 ~ N(mu, tau^2 I)
/// under x_t = sqrt(ab) x0 + sqrt(1 - ab) eps. The implied denoised estimate
/// is the closed-form conditional mean
///   m(x_t) = (tau^2 sqrt(ab) x_t + (1 - ab) mu) / (ab tau^2 + 1 - ab),
/// which makes this the verification oracle for the whole sampling chain.
class GaussianDenoiser final : public Denoiser {
 public:
  explicit GaussianDenoiser(GaussianPriorParams params);

  ImageGrid predict_noise(const ImageGrid& x_t, int t,
                          const NoiseSchedule& schedule) const override;

  /// The conditional mean m(x_t) at noise level alpha_bar.
  ImageGrid conditional_mean(const ImageGrid& x_t, double alpha_bar) const;

 private:
  GaussianPriorParams params_;
};

/// Heuristic stand-in prior for end-to-end runs without a trained model. The
/// denoised estimate is a shrunk Gaussian blur,
///   x_hat = (tau^2 sqrt(ab) / (ab tau^2 + 1 - ab)) * G_sigma(t) * x_t,
/// with blur width sigma(t) = sigma_max * sqrt((1 - ab) / ab) pixels (capped
/// at the image side). The width tracks the noise level, so smoothing is
/// near total at high noise and fades to the identity as t -> 0; the scalar
/// gain is the Wiener factor for a prior of amplitude tau and keeps the
/// estimate bounded on the noise-dominated early steps. sigma_max = 0
/// reduces to the zero denoiser.
class SmoothingDenoiser final : public Denoiser {
 public:
  explicit SmoothingDenoiser(double sigma_max_px = 4.0, double tau = 1.0,
                             double sigma_floor_px = 1.0);

  ImageGrid predict_noise(const ImageGrid& x_t, int t,
                          const NoiseSchedule& schedule) const override;

 private:
  double sigma_max_px_;
  double tau_;
  double sigma_floor_px_;
};

/// File-protocol hook for externally produced denoisers. Per call the sampler
/// writes x_t to <dir>/x_t.cti and {t, alpha_bar, total_steps} to
/// <dir>/meta.json, runs
///   <executable> <x_t path> <meta path> <epsilon output path>
/// and reads the predicted noise back from the output .cti file. Non-zero
/// exit codes, timeouts and malformed outputs are hard errors.
class ExternalDenoiser final : public Denoiser {
 public:
  explicit ExternalDenoiser(std::string executable, double timeout_seconds = 60.0);

  ImageGrid predict_noise(const ImageGrid& x_t, int t,
                          const NoiseSchedule& schedule) const override;

 private:
  std::string executable_;
  double timeout_seconds_;
  std::string work_dir_;
};

}  // namespace ctlab
