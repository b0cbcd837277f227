#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>

#include "ctlab/geometry.hpp"
#include "ctlab/image.hpp"

namespace ctlab {

struct CgReport {
  int iterations_run = 0;
  double final_relative_residual = 0.0;
  bool converged = false;
};

using CgCallback = std::function<void(int iter, const Eigen::VectorXd& x, double rel_residual)>;

/// Conjugate gradient on a symmetric positive definite map. Stops after
/// max_iters or once ||b - A x|| / ||b|| <= tol (absolute residual when b is
/// zero). Throws on non-finite values, naming the iteration.
template <class Op>
std::pair<Eigen::VectorXd, CgReport> cg(Op&& apply, const Eigen::VectorXd& b,
                                        const Eigen::VectorXd& x0, int max_iters,
                                        double tol, const CgCallback& callback = {}) {
  if (b.size() != x0.size()) throw std::invalid_argument("cg: b and x0 shapes differ");
  if (max_iters < 0) throw std::invalid_argument("cg: max_iters must be >= 0");

  const double b_norm = b.norm();
  const double denom = b_norm > 0.0 ? b_norm : 1.0;

  Eigen::VectorXd x = x0;
  Eigen::VectorXd r = b - apply(x);
  Eigen::VectorXd p = r;
  double rs = r.squaredNorm();

  CgReport report;
  report.final_relative_residual = std::sqrt(rs) / denom;
  report.converged = report.final_relative_residual <= tol;
  if (callback) callback(0, x, report.final_relative_residual);

  for (int k = 0; k < max_iters && !report.converged; ++k) {
    const Eigen::VectorXd ap = apply(p);
    const double p_ap = p.dot(ap);
    if (!std::isfinite(p_ap) || p_ap == 0.0)
      throw std::runtime_error("cg: non-finite or degenerate curvature at iteration " +
                               std::to_string(k + 1));
    const double alpha = rs / p_ap;
    x += alpha * p;
    r -= alpha * ap;
    const double rs_new = r.squaredNorm();
    if (!std::isfinite(rs_new))
      throw std::runtime_error("cg: non-finite residual at iteration " + std::to_string(k + 1));
    p = r + (rs_new / rs) * p;
    rs = rs_new;

    report.iterations_run = k + 1;
    report.final_relative_residual = std::sqrt(rs) / denom;
    report.converged = report.final_relative_residual <= tol;
    if (callback) callback(k + 1, x, report.final_relative_residual);
  }
  return {std::move(x), report};
}

/// CGLS baseline: conjugate gradient on the normal equations A^T A x = A^T y
/// in factored form, starting from zero. Runs exactly `iters` steps unless
/// the residual vanishes; there is no early-stopping tolerance.
ImageGrid cgls(const Sinogram& y, const FanBeamGeometry& g, const GridSpec& grid, int iters);

/// Proximal data-consistency update. With gamma set, runs m_steps of CG on
///   (gamma A^T A + I) x = x_hat + gamma A^T y
/// initialized at x_hat (the minimizer of
/// gamma/2 ||y - Ax||^2 + 1/2 ||x - x_hat||^2 as m_steps grows). Without
/// gamma, runs m_steps of CG on A^T A x = A^T y initialized at x_hat.
ImageGrid dds_data_consistency(const ImageGrid& x_hat, const Sinogram& y,
                               const FanBeamGeometry& g,
                               std::optional<double> gamma, int m_steps,
                               CgReport* report = nullptr);

}  // namespace ctlab
