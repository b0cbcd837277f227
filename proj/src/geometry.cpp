#include "ctlab/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace ctlab {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

std::uint64_t fnv1a(const void* data, std::size_t len, std::uint64_t h) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < len; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ull;
  }
  return h;
}

struct GridFrame {
  int n;
  double h;
  double origin;  // min corner of the square grid, both axes
};

GridFrame frame_of(int side, double pixel_mm) {
  return GridFrame{side, pixel_mm, -0.5 * side * pixel_mm};
}

struct Ray {
  double sx, sy;  // source
  double dx, dy;  // source -> detector channel center
};

Ray ray_for(const FanBeamGeometry& g, int view, int channel) {
  const double t = g.angles_rad[view];
  const double ct = std::cos(t), st = std::sin(t);
  const double sx = g.sod_mm * ct, sy = g.sod_mm * st;
  const double off = (channel - 0.5 * (g.n_channels - 1)) * g.det_pixel_mm;
  const double px = (g.sod_mm - g.sdd_mm) * ct - off * st;
  const double py = (g.sod_mm - g.sdd_mm) * st + off * ct;
  return Ray{sx, sy, px - sx, py - sy};
}

// Walks the ray through the pixel grid and reports the exact intersection
// length with every pixel it crosses: visit(row, col, length_mm). Crossing
// parameters are recomputed from the plane positions at each step, so the
// reported chords are reproducible to the last bit no matter which operator
// (forward, adjoint, dense) consumes them.
template <class Visit>
void traverse_ray(const Ray& ray, const GridFrame& f, Visit&& visit) {
  const double lo = f.origin;
  const double hi = f.origin + f.n * f.h;
  const double len_total = std::hypot(ray.dx, ray.dy);
  if (len_total == 0.0) return;

  // Clip [0,1] against the grid slabs.
  double a0 = 0.0, a1 = 1.0;
  if (ray.dx != 0.0) {
    const double u = (lo - ray.sx) / ray.dx;
    const double v = (hi - ray.sx) / ray.dx;
    a0 = std::max(a0, std::min(u, v));
    a1 = std::min(a1, std::max(u, v));
  } else if (ray.sx <= lo || ray.sx >= hi) {
    return;
  }
  if (ray.dy != 0.0) {
    const double u = (lo - ray.sy) / ray.dy;
    const double v = (hi - ray.sy) / ray.dy;
    a0 = std::max(a0, std::min(u, v));
    a1 = std::min(a1, std::max(u, v));
  } else if (ray.sy <= lo || ray.sy >= hi) {
    return;
  }
  if (a0 >= a1) return;

  int col = std::clamp(
      static_cast<int>(std::floor((ray.sx + a0 * ray.dx - lo) / f.h)), 0, f.n - 1);
  int row = std::clamp(
      static_cast<int>(std::floor((ray.sy + a0 * ray.dy - lo) / f.h)), 0, f.n - 1);
  const int step_col = ray.dx > 0 ? 1 : -1;
  const int step_row = ray.dy > 0 ? 1 : -1;

  double a = a0;
  const int max_steps = 2 * f.n + 8;
  for (int k = 0; k < max_steps; ++k) {
    // Parameter at which the ray leaves the current cell in each axis.
    const double ax =
        ray.dx > 0   ? (lo + (col + 1) * f.h - ray.sx) / ray.dx
        : ray.dx < 0 ? (lo + col * f.h - ray.sx) / ray.dx
                     : kInf;
    const double ay =
        ray.dy > 0   ? (lo + (row + 1) * f.h - ray.sy) / ray.dy
        : ray.dy < 0 ? (lo + row * f.h - ray.sy) / ray.dy
                     : kInf;
    const double a_next = std::min(std::min(ax, ay), a1);
    if (a_next > a) visit(row, col, (a_next - a) * len_total);
    if (a_next >= a1) return;
    if (ax <= a_next) col += step_col;
    if (ay <= a_next) row += step_row;
    if (col < 0 || col >= f.n || row < 0 || row >= f.n) return;
    a = a_next;
  }
}

void validate_geometry(const FanBeamGeometry& g) {
  if (!(g.sod_mm > 0) || !(g.sod_mm < g.sdd_mm))
    throw std::invalid_argument("FanBeamGeometry: need 0 < sod_mm < sdd_mm");
  if (g.n_channels < 1)
    throw std::invalid_argument("FanBeamGeometry: n_channels must be >= 1");
  if (!(g.det_pixel_mm > 0))
    throw std::invalid_argument("FanBeamGeometry: det_pixel_mm must be > 0");
  for (int i = 1; i < g.n_views(); ++i)
    if (!(g.angles_rad[i] > g.angles_rad[i - 1]))
      throw std::invalid_argument("FanBeamGeometry: angles must be strictly increasing");
}

}  // namespace

std::uint64_t FanBeamGeometry::fingerprint() const {
  std::uint64_t h = 0xcbf29ce484222325ull;
  h = fnv1a(&sod_mm, sizeof(double), h);
  h = fnv1a(&sdd_mm, sizeof(double), h);
  h = fnv1a(&det_pixel_mm, sizeof(double), h);
  h = fnv1a(&n_channels, sizeof(int), h);
  if (angles_rad.size() > 0)
    h = fnv1a(angles_rad.data(), sizeof(double) * angles_rad.size(), h);
  return h;
}

FanBeamGeometry make_geometry(int n_views, AngularSpan span, const ScannerPreset& preset) {
  if (n_views < 1) throw std::invalid_argument("make_geometry: n_views must be >= 1");
  FanBeamGeometry g;
  g.sod_mm = preset.sod_mm;
  g.sdd_mm = preset.sdd_mm;
  g.det_pixel_mm = preset.det_pixel_mm;
  g.n_channels = preset.n_channels;
  g.angles_rad.resize(n_views);
  if (span == AngularSpan::half) {
    // Sparse reconstruction span: endpoint-exclusive, step 180 / n.
    for (int i = 0; i < n_views; ++i) g.angles_rad[i] = M_PI * i / n_views;
  } else {
    // Full scan protocol: the last view closes the circle at 360, so n views
    // step 360 / (n - 1); 901 views give exactly 0.4 degrees.
    for (int i = 0; i < n_views; ++i)
      g.angles_rad[i] = n_views == 1 ? 0.0 : 2.0 * M_PI * i / (n_views - 1);
  }
  validate_geometry(g);
  return g;
}

GridSpec default_grid_spec(const FanBeamGeometry& g, int side_pixels) {
  const double footprint = g.det_pixel_mm * g.n_channels / g.magnification();
  return GridSpec{side_pixels, footprint / side_pixels};
}

Sinogram forward_project(const ImageGrid& x, const FanBeamGeometry& g) {
  validate_geometry(g);
  Sinogram s;
  s.n_views = g.n_views();
  s.n_channels = g.n_channels;
  s.values = RowMatrix::Zero(s.n_views, s.n_channels);
  s.geometry_fingerprint = g.fingerprint();

  const GridFrame f = frame_of(x.side_pixels, x.pixel_size_mm);
  for (int v = 0; v < s.n_views; ++v) {
    for (int c = 0; c < s.n_channels; ++c) {
      double acc = 0.0;
      traverse_ray(ray_for(g, v, c), f, [&](int row, int col, double len) {
        acc += len * x.values(row, col);
      });
      s.values(v, c) = acc;
    }
  }
  return s;
}

ImageGrid back_project(const Sinogram& s, const FanBeamGeometry& g, const GridSpec& grid) {
  validate_geometry(g);
  if (s.geometry_fingerprint != g.fingerprint())
    throw std::runtime_error("back_project: sinogram geometry fingerprint does not match");
  if (s.n_views != g.n_views() || s.n_channels != g.n_channels)
    throw std::invalid_argument("back_project: sinogram shape does not match geometry");

  ImageGrid img = grid.make_zero();
  const GridFrame f = frame_of(img.side_pixels, img.pixel_size_mm);
  for (int v = 0; v < s.n_views; ++v) {
    for (int c = 0; c < s.n_channels; ++c) {
      const double w = s.values(v, c);
      if (w == 0.0) continue;
      traverse_ray(ray_for(g, v, c), f, [&](int row, int col, double len) {
        img.values(row, col) += len * w;
      });
    }
  }
  return img;
}

Eigen::MatrixXd as_dense_matrix(const FanBeamGeometry& g, int side_pixels,
                                double pixel_size_mm) {
  validate_geometry(g);
  if (side_pixels < 1 || side_pixels > 32)
    throw std::invalid_argument("as_dense_matrix: side_pixels must be in [1, 32]");
  const long rays = g.n_rays();
  const long pixels = static_cast<long>(side_pixels) * side_pixels;
  if (rays * pixels > 10'000'000L)
    throw std::invalid_argument("as_dense_matrix: rays * pixels exceeds 1e7");

  if (pixel_size_mm <= 0.0) pixel_size_mm = default_grid_spec(g, side_pixels).pixel_size_mm;
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(rays, pixels);
  const GridFrame f = frame_of(side_pixels, pixel_size_mm);
  for (int v = 0; v < g.n_views(); ++v) {
    for (int c = 0; c < g.n_channels; ++c) {
      const long r = static_cast<long>(v) * g.n_channels + c;
      traverse_ray(ray_for(g, v, c), f, [&](int row, int col, double len) {
        m(r, static_cast<long>(row) * side_pixels + col) += len;
      });
    }
  }
  return m;
}

FanBeamGeometry perturbed_geometry(const FanBeamGeometry& g, const MismatchConfig& cfg) {
  FanBeamGeometry out = g;
  out.angles_rad.array() += cfg.angular_offset_deg * M_PI / 180.0;
  return out;
}

Sinogram apply_mismatch(const Sinogram& s, const FanBeamGeometry& g,
                        const MismatchConfig& cfg, Rng& rng) {
  if (cfg.photon_count_i0 < 0 || cfg.gain_drift_amp < 0)
    throw std::invalid_argument("MismatchConfig: photon_count_i0 and gain_drift_amp must be >= 0");

  Sinogram out = s;
  out.geometry_fingerprint = g.fingerprint();

  if (cfg.cor_shift_channels != 0.0) {
    // Positive shift moves content toward higher channel indices.
    RowMatrix shifted = RowMatrix::Zero(s.n_views, s.n_channels);
    for (int c = 0; c < s.n_channels; ++c) {
      const double src = c - cfg.cor_shift_channels;
      const int c0 = static_cast<int>(std::floor(src));
      const double w = src - c0;
      for (int v = 0; v < s.n_views; ++v) {
        double val = 0.0;
        if (c0 >= 0 && c0 < s.n_channels) val += (1.0 - w) * out.values(v, c0);
        if (c0 + 1 >= 0 && c0 + 1 < s.n_channels) val += w * out.values(v, c0 + 1);
        shifted(v, c) = val;
      }
    }
    out.values = std::move(shifted);
  }

  if (cfg.gain_drift_amp != 0.0) {
    for (int c = 0; c < s.n_channels; ++c) {
      const double gain = 1.0 + cfg.gain_drift_amp * std::sin(2.0 * M_PI * c / 16.0);
      out.values.col(c) *= gain;
    }
  }

  if (cfg.beam_hardening_beta != 0.0) {
    out.values = out.values.array() - cfg.beam_hardening_beta * out.values.array().square();
  }

  if (cfg.photon_count_i0 > 0.0) {
    // Row-major draw order (view-major, channel inner) for reproducibility.
    for (int v = 0; v < s.n_views; ++v) {
      for (int c = 0; c < s.n_channels; ++c) {
        const double lambda = cfg.photon_count_i0 * std::exp(-out.values(v, c));
        const double counts = std::max<long long>(1, rng.poisson(lambda));
        out.values(v, c) = -std::log(counts / cfg.photon_count_i0);
      }
    }
  }
  return out;
}

}  // namespace ctlab
