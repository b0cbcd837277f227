#pragma once

#include <Eigen/Dense>

#include <cstdint>

#include "ctlab/image.hpp"
#include "ctlab/rng.hpp"

namespace ctlab {

/// 2D fan-beam system: a point source rotating at radius sod_mm around the
/// origin, a flat detector of n_channels centered on the ray through the
/// origin at distance sdd_mm from the source. One ray per detector channel.
///
/// At view angle theta the source sits at sod * (cos t, sin t); the detector
/// tangent is (-sin t, cos t) and channel c is offset by
/// (c - (n_channels - 1) / 2) * det_pixel_mm along it.
struct FanBeamGeometry {
  double sod_mm = 0.0;
  double sdd_mm = 0.0;
  double det_pixel_mm = 0.0;
  int n_channels = 0;
  Eigen::VectorXd angles_rad;

  int n_views() const { return static_cast<int>(angles_rad.size()); }
  int n_rays() const { return n_views() * n_channels; }
  double magnification() const { return sdd_mm / sod_mm; }
  std::uint64_t fingerprint() const;
};

/// Bench scanner defaults.
struct ScannerPreset {
  double sod_mm = 234.92;
  double sdd_mm = 400.0;
  double det_pixel_mm = 0.2992;
  int n_channels = 478;
};

enum class AngularSpan { half, full };  // [0, 180) or [0, 360), endpoint-exclusive

struct Sinogram {
  int n_views = 0;
  int n_channels = 0;
  RowMatrix values;  // n_views x n_channels, line integrals in mm * attenuation
  std::uint64_t geometry_fingerprint = 0;
};

/// Deviations injected between the measurement and the model used for
/// reconstruction. Angular offset and center-of-rotation shift are geometric;
/// gain ripple, beam hardening and Poisson noise act on the sinogram values.
struct MismatchConfig {
  double angular_offset_deg = 0.0;
  double cor_shift_channels = 0.0;
  double gain_drift_amp = 0.0;
  double photon_count_i0 = 0.0;     // 0 disables Poisson noise
  double beam_hardening_beta = 0.0; // p -> p - beta * p^2

  bool is_identity() const {
    return angular_offset_deg == 0.0 && cor_shift_channels == 0.0 &&
           gain_drift_amp == 0.0 && photon_count_i0 == 0.0 &&
           beam_hardening_beta == 0.0;
  }
};

FanBeamGeometry make_geometry(int n_views, AngularSpan span,
                              const ScannerPreset& preset = ScannerPreset{});

/// Pixel pitch such that the grid spans the detector footprint scaled back
/// to the rotation axis: det_pixel * n_channels * (sod / sdd) / side.
GridSpec default_grid_spec(const FanBeamGeometry& g, int side_pixels);

/// Line-integral projection with exact ray/pixel intersection lengths
/// (Siddon traversal). Linear in the image; rays that miss the grid
/// contribute zero.
Sinogram forward_project(const ImageGrid& x, const FanBeamGeometry& g);

/// Exact transpose of forward_project as a linear map onto the given grid.
/// Throws if the sinogram's geometry fingerprint does not match g.
ImageGrid back_project(const Sinogram& s, const FanBeamGeometry& g, const GridSpec& grid);

/// Explicit system matrix (rays x pixels) for small grids; the test oracle
/// for the matched projector pair. Entry (r, p) is the intersection length
/// of ray r with pixel p. pixel_size_mm <= 0 selects the default rule.
Eigen::MatrixXd as_dense_matrix(const FanBeamGeometry& g, int side_pixels,
                                double pixel_size_mm = 0.0);

/// Geometry the measurement was "really" acquired with: view angles shifted
/// by the configured offset. Projecting through this and reconstructing with
/// the nominal geometry realizes the angular part of the mismatch.
FanBeamGeometry perturbed_geometry(const FanBeamGeometry& g, const MismatchConfig& cfg);

/// Applies the value-domain mismatch stages to a sinogram, in order:
/// center-of-rotation shift (fractional channel translation, linear
/// interpolation, zero fill), per-channel gain ripple 1 + amp*sin(2*pi*c/16),
/// beam hardening p - beta*p^2, then Poisson noise counts ~ Poisson(I0*e^-p)
/// with counts clamped to >= 1 (skipped when photon_count_i0 is 0). The
/// result carries the nominal geometry's fingerprint so that reconstruction
/// binds to the unshifted model.
Sinogram apply_mismatch(const Sinogram& s, const FanBeamGeometry& g,
                        const MismatchConfig& cfg, Rng& rng);

}  // namespace ctlab
