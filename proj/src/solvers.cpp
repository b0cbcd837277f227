#include "ctlab/solvers.hpp"

namespace ctlab {

namespace {

Eigen::Map<const Eigen::VectorXd> flat(const RowMatrix& m) {
  return {m.data(), m.size()};
}

ImageGrid image_from_flat(const Eigen::VectorXd& v, const GridSpec& grid) {
  ImageGrid img = grid.make_zero();
  Eigen::Map<Eigen::VectorXd>(img.values.data(), img.values.size()) = v;
  return img;
}

}  // namespace

ImageGrid cgls(const Sinogram& y, const FanBeamGeometry& g, const GridSpec& grid, int iters) {
  if (iters < 1) throw std::invalid_argument("cgls: iters must be >= 1");

  // x = 0, d = y, r = A^T d, p = r
  ImageGrid x = grid.make_zero();
  Sinogram d = y;
  ImageGrid r = back_project(d, g, grid);
  RowMatrix p = r.values;
  double rs = r.values.squaredNorm();

  ImageGrid pimg = grid.make_zero();
  for (int k = 0; k < iters; ++k) {
    if (rs == 0.0) break;  // already at a least-squares solution
    pimg.values = p;
    Sinogram t = forward_project(pimg, g);
    const double t_ss = t.values.squaredNorm();
    if (!std::isfinite(t_ss) || t_ss == 0.0)
      throw std::runtime_error("cgls: degenerate search direction at iteration " +
                               std::to_string(k + 1));
    const double alpha = rs / t_ss;
    x.values += alpha * p;
    d.values -= alpha * t.values;
    r = back_project(d, g, grid);
    const double rs_new = r.values.squaredNorm();
    if (!std::isfinite(rs_new))
      throw std::runtime_error("cgls: non-finite residual at iteration " + std::to_string(k + 1));
    p = r.values + (rs_new / rs) * p;
    rs = rs_new;
  }
  return x;
}

ImageGrid dds_data_consistency(const ImageGrid& x_hat, const Sinogram& y,
                               const FanBeamGeometry& g,
                               std::optional<double> gamma, int m_steps,
                               CgReport* report) {
  if (m_steps < 1) throw std::invalid_argument("dds_data_consistency: m_steps must be >= 1");
  if (gamma && *gamma < 0)
    throw std::invalid_argument("dds_data_consistency: gamma must be >= 0");

  const GridSpec grid{x_hat.side_pixels, x_hat.pixel_size_mm};
  const Eigen::VectorXd x0 = flat(x_hat.values);

  const auto normal_op = [&](const Eigen::VectorXd& v) -> Eigen::VectorXd {
    const Sinogram av = forward_project(image_from_flat(v, grid), g);
    const ImageGrid atav = back_project(av, g, grid);
    return flat(atav.values);
  };
  const Eigen::VectorXd aty = flat(back_project(y, g, grid).values);

  Eigen::VectorXd solution;
  CgReport rep;
  if (gamma) {
    const double gma = *gamma;
    const auto op = [&](const Eigen::VectorXd& v) -> Eigen::VectorXd {
      if (gma == 0.0) return v;
      return gma * normal_op(v) + v;
    };
    const Eigen::VectorXd b = x0 + gma * aty;
    std::tie(solution, rep) = cg(op, b, x0, m_steps, 0.0);
  } else {
    std::tie(solution, rep) = cg(normal_op, aty, x0, m_steps, 0.0);
  }
  if (report) *report = rep;
  return image_from_flat(solution, grid);
}

}  // namespace ctlab
