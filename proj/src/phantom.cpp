#include "ctlab/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace ctlab {

namespace {

constexpr double kMinSemiAxis = 1e-6;

// Contrast compression applied when deriving the experimental surrogate
// from the standard table.
constexpr double kExperimentalContrastFactor = 0.3;

void validate(const PerturbationConfig& cfg) {
  if (cfg.sigma_intensity < 0 || cfg.sigma_axes < 0 || cfg.sigma_center < 0 ||
      cfg.sigma_phi_deg < 0)
    throw std::invalid_argument("PerturbationConfig: sigmas must be >= 0");
  if (cfg.p_add_drop < 0 || cfg.p_add_drop > 1)
    throw std::invalid_argument("PerturbationConfig: p_add_drop must be in [0, 1]");
  if (cfg.mix_pi < 0 || cfg.mix_pi > 1)
    throw std::invalid_argument("PerturbationConfig: mix_pi must be in [0, 1]");
}

// Draw order is fixed (intensity, a, b, x, y, phi) so that sampling is
// reproducible across builds.
EllipseSpec perturb_one(const EllipseSpec& e, const PerturbationConfig& cfg, Rng& rng) {
  EllipseSpec out = e;
  out.intensity = e.intensity + std::abs(e.intensity) * cfg.sigma_intensity * rng.normal();
  out.semi_axis_a =
      std::max(kMinSemiAxis, e.semi_axis_a + std::abs(e.semi_axis_a) * cfg.sigma_axes * rng.normal());
  out.semi_axis_b =
      std::max(kMinSemiAxis, e.semi_axis_b + std::abs(e.semi_axis_b) * cfg.sigma_axes * rng.normal());
  out.center_x = e.center_x + 2.0 * cfg.sigma_center * rng.normal();
  out.center_y = e.center_y + 2.0 * cfg.sigma_center * rng.normal();
  out.rotation_phi_deg = normalize_angle_deg(e.rotation_phi_deg + cfg.sigma_phi_deg * rng.normal());
  return out;
}

}  // namespace

const char* to_string(PhantomLabel label) {
  switch (label) {
    case PhantomLabel::standard: return "standard";
    case PhantomLabel::experimental: return "experimental";
    case PhantomLabel::sampled: return "sampled";
  }
  return "unknown";
}

double normalize_angle_deg(double phi) {
  double r = std::fmod(phi, 360.0);
  if (r < 0) r += 360.0;
  return r;
}

EllipseSet standard_shepp_logan() {
  // (intensity, a, b, x0, y0, phi_deg), outer ellipse first; interior
  // ellipses carry signed deltas on top of it.
  static const double table[10][6] = {
      {2.00, 0.6900, 0.9200, 0.0, 0.0, 0.0},
      {-0.98, 0.6624, 0.8740, 0.0, -0.0184, 0.0},
      {-0.02, 0.1100, 0.3100, 0.22, 0.0, -18.0},
      {-0.02, 0.1600, 0.4100, -0.22, 0.0, 18.0},
      {0.01, 0.2100, 0.2500, 0.0, 0.35, 0.0},
      {0.01, 0.0460, 0.0460, 0.0, 0.10, 0.0},
      {0.01, 0.0460, 0.0460, 0.0, -0.10, 0.0},
      {0.01, 0.0460, 0.0230, -0.08, -0.605, 0.0},
      {0.01, 0.0230, 0.0230, 0.0, -0.605, 0.0},
      {0.01, 0.0230, 0.0460, 0.06, -0.605, 0.0},
  };
  EllipseSet set;
  set.label = PhantomLabel::standard;
  set.ellipses.reserve(10);
  for (const auto& row : table) {
    set.ellipses.push_back({row[0], row[1], row[2], row[3], row[4],
                            normalize_angle_deg(row[5])});
  }
  return set;
}

EllipseSet experimental_shepp_logan() {
  EllipseSet set = standard_shepp_logan();
  set.label = PhantomLabel::experimental;
  for (std::size_t i = 0; i < set.ellipses.size(); ++i) {
    double& a = set.ellipses[i].intensity;
    if (i == 5 || i == 6) {
      // The two mid circles are the air-filled regions of the bench piece.
      a = 0.0;
    } else if (i >= 7) {
      // The three small bottom ellipses are cut-outs and read as dips.
      a = -kExperimentalContrastFactor * std::abs(a);
    } else {
      a *= kExperimentalContrastFactor;
    }
  }
  return set;
}

EllipseSet perturb(const EllipseSet& base, const PerturbationConfig& cfg, Rng& rng) {
  validate(cfg);
  if (base.ellipses.empty())
    throw std::invalid_argument("perturb: base set is empty");

  EllipseSet out;
  out.label = PhantomLabel::sampled;
  out.ellipses.reserve(base.ellipses.size() + 1);
  for (const auto& e : base.ellipses) out.ellipses.push_back(perturb_one(e, cfg, rng));

  // Drop first, then add; the added copy is drawn from the surviving set and
  // receives one extra perturbation pass.
  if (cfg.p_add_drop > 0) {
    if (rng.bernoulli(cfg.p_add_drop) && out.ellipses.size() >= 2) {
      const auto idx = rng.uniform_index(out.ellipses.size());
      out.ellipses.erase(out.ellipses.begin() + static_cast<std::ptrdiff_t>(idx));
    }
    if (rng.bernoulli(cfg.p_add_drop)) {
      const auto idx = rng.uniform_index(out.ellipses.size());
      out.ellipses.push_back(perturb_one(out.ellipses[idx], cfg, rng));
    }
  }
  return out;
}

std::vector<DatasetSample> sample_dataset(int n, const EllipseSet& std_center,
                                          const EllipseSet& exp_center,
                                          const PerturbationConfig& cfg,
                                          const Rng& rng) {
  validate(cfg);
  if (n < 1) throw std::invalid_argument("sample_dataset: n must be >= 1");

  std::vector<DatasetSample> samples;
  samples.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    Rng child = rng.child(static_cast<std::uint64_t>(i));
    DatasetSample s;
    s.sample_seed = child.seed();
    s.exp_branch = child.bernoulli(cfg.mix_pi);
    const EllipseSet& center = s.exp_branch ? exp_center : std_center;
    s.set = perturb(center, cfg, child);
    samples.push_back(std::move(s));
  }
  return samples;
}

ImageGrid rasterize(const EllipseSet& set, int grid_side, double pixel_size_mm) {
  if (grid_side < 2) throw std::invalid_argument("rasterize: grid_side must be >= 2");
  if (set.ellipses.empty()) throw std::invalid_argument("rasterize: empty ellipse set");

  ImageGrid img(grid_side, pixel_size_mm);
  const double step = 2.0 / grid_side;
  for (const auto& e : set.ellipses) {
    if (e.intensity == 0.0) continue;
    const double phi = e.rotation_phi_deg * M_PI / 180.0;
    const double c = std::cos(phi), s = std::sin(phi);
    const double inv_a2 = 1.0 / (e.semi_axis_a * e.semi_axis_a);
    const double inv_b2 = 1.0 / (e.semi_axis_b * e.semi_axis_b);
    for (int r = 0; r < grid_side; ++r) {
      const double y = -1.0 + (r + 0.5) * step;
      const double dy = y - e.center_y;
      for (int col = 0; col < grid_side; ++col) {
        const double x = -1.0 + (col + 0.5) * step;
        const double dx = x - e.center_x;
        // Rotate into the ellipse frame (undo a CCW rotation by phi).
        const double u = dx * c + dy * s;
        const double v = -dx * s + dy * c;
        if (u * u * inv_a2 + v * v * inv_b2 <= 1.0) img.values(r, col) += e.intensity;
      }
    }
  }
  return img;
}

ImageGrid rasterize(const EllipseSet& set, int grid_side) {
  return rasterize(set, grid_side, 2.0 / grid_side);
}

}  // namespace ctlab
