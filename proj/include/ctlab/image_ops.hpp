#pragma once

#include "ctlab/image.hpp"

namespace ctlab {

/// Separable Gaussian blur with kernel radius ceil(3 sigma). Truncated
/// weights are renormalized per output pixel, so constants are preserved
/// exactly at the borders. sigma_px <= 0 returns the input unchanged.
RowMatrix gaussian_blur(const RowMatrix& img, double sigma_px);

}  // namespace ctlab
