#include "ctlab/metrics.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace ctlab {

namespace {

constexpr int kWindow = 11;
constexpr double kWindowSigma = 1.5;
constexpr double kK1 = 0.01;
constexpr double kK2 = 0.03;

double auto_range(const ImageGrid& ref) {
  return ref.values.maxCoeff() - ref.values.minCoeff();
}

}  // namespace

double psnr(const ImageGrid& x, const ImageGrid& ref, std::optional<double> data_range) {
  require_same_shape(x, ref, "psnr");
  const double mse = (x.values - ref.values).squaredNorm() / x.values.size();
  if (mse == 0.0) return std::numeric_limits<double>::infinity();
  const double range = data_range ? *data_range : auto_range(ref);
  return 10.0 * std::log10(range * range / mse);
}

double ssim(const ImageGrid& x, const ImageGrid& ref, std::optional<double> data_range) {
  require_same_shape(x, ref, "ssim");
  const int n = x.side_pixels;
  if (n < kWindow) throw std::invalid_argument("ssim: image smaller than the window");
  if (x.values == ref.values) return 1.0;

  Eigen::VectorXd kernel(kWindow);
  for (int k = 0; k < kWindow; ++k) {
    const double d = k - (kWindow - 1) / 2.0;
    kernel[k] = std::exp(-0.5 * d * d / (kWindowSigma * kWindowSigma));
  }
  kernel /= kernel.sum();

  // Separable valid-mode convolution: rows, then columns.
  const auto convolve = [&kernel, n](const RowMatrix& m) {
    const int out = n - kWindow + 1;
    RowMatrix rows(n, out);
    for (int r = 0; r < n; ++r)
      for (int c = 0; c < out; ++c)
        rows(r, c) = kernel.dot(m.row(r).segment(c, kWindow));
    RowMatrix res(out, out);
    for (int c = 0; c < out; ++c)
      for (int r = 0; r < out; ++r)
        res(r, c) = kernel.dot(rows.col(c).segment(r, kWindow));
    return res;
  };

  const double range = data_range ? *data_range : auto_range(ref);
  const double c1 = (kK1 * range) * (kK1 * range);
  const double c2 = (kK2 * range) * (kK2 * range);

  const RowMatrix mu_x = convolve(x.values);
  const RowMatrix mu_y = convolve(ref.values);
  const RowMatrix xx = convolve(x.values.cwiseProduct(x.values));
  const RowMatrix yy = convolve(ref.values.cwiseProduct(ref.values));
  const RowMatrix xy = convolve(x.values.cwiseProduct(ref.values));

  const auto var_x = (xx - mu_x.cwiseProduct(mu_x)).eval();
  const auto var_y = (yy - mu_y.cwiseProduct(mu_y)).eval();
  const auto cov = (xy - mu_x.cwiseProduct(mu_y)).eval();

  double acc = 0.0;
  for (Eigen::Index i = 0; i < mu_x.size(); ++i) {
    const double num = (2.0 * mu_x.data()[i] * mu_y.data()[i] + c1) * (2.0 * cov.data()[i] + c2);
    const double den = (mu_x.data()[i] * mu_x.data()[i] + mu_y.data()[i] * mu_y.data()[i] + c1) *
                       (var_x.data()[i] + var_y.data()[i] + c2);
    acc += num / den;
  }
  return acc / mu_x.size();
}

Eigen::VectorXd line_profile(const ImageGrid& x, int row) {
  if (row < 0 || row >= x.side_pixels)
    throw std::out_of_range("line_profile: row out of bounds");
  return x.values.row(row).transpose();
}

MetricReport ensemble(const std::vector<MetricReport>& reports) {
  if (reports.empty()) throw std::invalid_argument("ensemble: empty report list");
  MetricReport out;
  out.n_seeds = static_cast<int>(reports.size());
  double psnr_sum = 0.0, ssim_sum = 0.0;
  for (const auto& r : reports) {
    psnr_sum += r.psnr_db;
    ssim_sum += r.ssim;
  }
  out.psnr_db = psnr_sum / out.n_seeds;
  out.ssim = ssim_sum / out.n_seeds;
  double sq = 0.0;
  for (const auto& r : reports) sq += (r.psnr_db - out.psnr_db) * (r.psnr_db - out.psnr_db);
  out.std_psnr_db = std::sqrt(sq / out.n_seeds);
  return out;
}

}  // namespace ctlab
