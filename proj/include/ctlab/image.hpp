#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <stdexcept>

namespace ctlab {

/// Dense row-major matrix; row-major so that flattened storage matches the
/// on-disk and wire conventions used throughout.
using RowMatrix =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Square reconstruction grid with a physical pixel pitch.
///
/// Coordinate convention: pixel (row r, col c) has its center at
///   x = -1 + (2c + 1) / side,  y = -1 + (2r + 1) / side
/// in normalized units, i.e. row 0 is the bottom row. Physically the grid
/// spans side_pixels * pixel_size_mm, centered on the rotation axis.
struct ImageGrid {
  int side_pixels = 0;
  double pixel_size_mm = 1.0;
  RowMatrix values;  // side_pixels x side_pixels

  ImageGrid() = default;
  ImageGrid(int side, double pixel_mm)
      : side_pixels(side),
        pixel_size_mm(pixel_mm),
        values(RowMatrix::Zero(side, side)) {
    if (side < 2) throw std::invalid_argument("ImageGrid: side_pixels must be >= 2");
    if (!(pixel_mm > 0)) throw std::invalid_argument("ImageGrid: pixel_size_mm must be > 0");
  }

  double physical_width_mm() const { return side_pixels * pixel_size_mm; }
};

/// Grid shape without the data; what a reconstruction needs to know.
struct GridSpec {
  int side_pixels = 0;
  double pixel_size_mm = 1.0;

  ImageGrid make_zero() const { return ImageGrid(side_pixels, pixel_size_mm); }
};

inline void require_same_shape(const ImageGrid& a, const ImageGrid& b, const char* what) {
  if (a.side_pixels != b.side_pixels)
    throw std::invalid_argument(std::string(what) + ": image sides differ");
}

}  // namespace ctlab
