#pragma once

#include <string>
#include <vector>

#include "ctlab/image.hpp"
#include "ctlab/rng.hpp"

namespace ctlab {

/// One ellipse of a parametric phantom. Geometry is expressed in the
/// normalized [-1, 1] image square: semi-axes as fractions of the image
/// half-width, centers as fractions of the half-width, rotation in degrees
/// counter-clockwise, normalized to [0, 360). Intensity is an additive
/// attenuation delta; overlapping ellipses sum.
struct EllipseSpec {
  double intensity = 0.0;
  double semi_axis_a = 1.0;
  double semi_axis_b = 1.0;
  double center_x = 0.0;
  double center_y = 0.0;
  double rotation_phi_deg = 0.0;
};

enum class PhantomLabel { standard, experimental, sampled };

const char* to_string(PhantomLabel label);

struct EllipseSet {
  std::vector<EllipseSpec> ellipses;
  PhantomLabel label = PhantomLabel::sampled;
};

/// Per-parameter jitter applied by perturb(), plus the add/drop and mixing
/// probabilities used when sampling datasets.
struct PerturbationConfig {
  double sigma_intensity = 0.0;   // relative to |intensity|
  double sigma_axes = 0.0;        // relative to the semi-axis
  double sigma_center = 0.0;      // relative to the full coordinate span (2.0)
  double sigma_phi_deg = 0.0;     // absolute, degrees
  double p_add_drop = 0.0;        // probability of each of: drop one, add one
  double mix_pi = 0.0;            // P(center on the experimental set)
};

struct DatasetSample {
  EllipseSet set;
  bool exp_branch = false;  // Z: centered on the experimental set
  std::uint64_t sample_seed = 0;
};

double normalize_angle_deg(double phi);

/// The canonical 10-ellipse Shepp-Logan parameter set. The values are the
/// single source of truth for every phantom in this project; see the
/// "Phantom tables" section of the README for the table and its layout.
EllipseSet standard_shepp_logan();

/// Surrogate for the laser-cut bench phantom: same ellipse layout as the
/// standard set, two designated air ellipses at intensity 0, remaining
/// interior contrasts compressed to 30% with the three small bottom
/// ellipses flipped to read as holes (dips below the surrounding material).
EllipseSet experimental_shepp_logan();

/// Jitters every parameter of every ellipse: p = p0 + s_p * eps with
/// eps ~ N(0, sigma_p^2). Scales s_p: |p0| for intensity and axes, the full
/// coordinate span (2.0) for centers, 1 for rotation. Then, independently
/// with probability p_add_drop each: drops one uniformly chosen ellipse
/// (only when at least two remain), and appends a freshly perturbed copy of
/// a uniformly chosen ellipse.
EllipseSet perturb(const EllipseSet& base, const PerturbationConfig& cfg, Rng& rng);

/// Draws n phantoms. Each sample i uses the child stream rng.child(i): first
/// Z ~ Bernoulli(mix_pi) picks the center set (exp_center if Z), then
/// perturb() is applied. Deterministic given (seed, n, cfg) and independent
/// of evaluation order.
std::vector<DatasetSample> sample_dataset(int n, const EllipseSet& std_center,
                                          const EllipseSet& exp_center,
                                          const PerturbationConfig& cfg,
                                          const Rng& rng);

/// Additive pixel-center rasterization onto [-1, 1]^2, row 0 at the bottom.
/// No anti-aliasing: a pixel takes the sum of intensities of the ellipses
/// whose interior contains its center.
ImageGrid rasterize(const EllipseSet& set, int grid_side, double pixel_size_mm);

/// Convenience overload in normalized units (pixel size 2 / side).
ImageGrid rasterize(const EllipseSet& set, int grid_side);

}  // namespace ctlab
