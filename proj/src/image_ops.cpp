#include "ctlab/image_ops.hpp"

#include <cmath>
#include <vector>

namespace ctlab {

RowMatrix gaussian_blur(const RowMatrix& img, double sigma_px) {
  if (sigma_px <= 0.0) return img;
  const int radius = static_cast<int>(std::ceil(3.0 * sigma_px));
  if (radius < 1) return img;

  std::vector<double> kernel(2 * radius + 1);
  for (int k = -radius; k <= radius; ++k)
    kernel[k + radius] = std::exp(-0.5 * k * k / (sigma_px * sigma_px));

  const auto rows = img.rows();
  const auto cols = img.cols();

  RowMatrix tmp(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) {
      double acc = 0.0, wsum = 0.0;
      const int lo = static_cast<int>(std::max<Eigen::Index>(0, c - radius));
      const int hi = static_cast<int>(std::min<Eigen::Index>(cols - 1, c + radius));
      for (int cc = lo; cc <= hi; ++cc) {
        const double w = kernel[cc - c + radius];
        acc += w * img(r, cc);
        wsum += w;
      }
      tmp(r, c) = acc / wsum;
    }
  }

  RowMatrix out(rows, cols);
  for (Eigen::Index c = 0; c < cols; ++c) {
    for (Eigen::Index r = 0; r < rows; ++r) {
      double acc = 0.0, wsum = 0.0;
      const int lo = static_cast<int>(std::max<Eigen::Index>(0, r - radius));
      const int hi = static_cast<int>(std::min<Eigen::Index>(rows - 1, r + radius));
      for (int rr = lo; rr <= hi; ++rr) {
        const double w = kernel[rr - r + radius];
        acc += w * img(rr, c);
        wsum += w;
      }
      out(r, c) = acc / wsum;
    }
  }
  return out;
}

}  // namespace ctlab
