#pragma once

#include <filesystem>
#include <string>

#include "ctlab/geometry.hpp"
#include "ctlab/image.hpp"

namespace ctlab {

/// Portable float image, magic "CTIMG1". 16-byte header: 6 magic bytes, 2
/// zero pad bytes, uint32 side, float32 pixel size (mm); then side^2 float32
/// values, little-endian, row-major.
void write_image(const std::filesystem::path& path, const ImageGrid& img);
ImageGrid read_image(const std::filesystem::path& path);

/// Portable float sinogram, magic "CTSIN1". 24-byte header: 6 magic bytes, 2
/// zero pad bytes, uint32 n_views, uint32 n_channels, uint64 geometry
/// fingerprint; then n_views * n_channels float32 values, row-major.
void write_sinogram(const std::filesystem::path& path, const Sinogram& s);
Sinogram read_sinogram(const std::filesystem::path& path);

/// 8-bit grayscale PNG, values mapped linearly from [min, max] of the image
/// (top row of the file is the top of the image, i.e. the highest y row).
void write_png_gray(const std::filesystem::path& path, const ImageGrid& img);

/// Shortest float form that is stable across runs; used for every CSV cell.
std::string format_double(double v);

}  // namespace ctlab
