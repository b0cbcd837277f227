#pragma once

#include <Eigen/Dense>

#include <optional>
#include <vector>

#include "ctlab/image.hpp"

namespace ctlab {

struct MetricReport {
  double psnr_db = 0.0;
  double ssim = 0.0;
  int n_seeds = 1;
  double std_psnr_db = 0.0;
};

/// 10 log10(range^2 / MSE). The range defaults to max(ref) - min(ref);
/// identical images report +infinity (serialized as "inf").
double psnr(const ImageGrid& x, const ImageGrid& ref,
            std::optional<double> data_range = std::nullopt);

/// Mean local SSIM over valid (fully interior) windows, Gaussian window
/// sigma 1.5 size 11, k1 = 0.01, k2 = 0.03. The range defaults as in psnr().
double ssim(const ImageGrid& x, const ImageGrid& ref,
            std::optional<double> data_range = std::nullopt);

/// Row values left to right (row 0 is the bottom row).
Eigen::VectorXd line_profile(const ImageGrid& x, int row);

/// Mean and population standard deviation across per-seed reports.
MetricReport ensemble(const std::vector<MetricReport>& reports);

}  // namespace ctlab
