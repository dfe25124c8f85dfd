#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "fei/types.hpp"

namespace fei::io {

/// Arrays (images, sinograms) are stored as NumPy .npy v1.0 files:
/// little-endian float64 ('<f8'), C order, 2-D shape in the header.
void save_array(const std::filesystem::path& path, const Array2D& a);
Array2D load_array(const std::filesystem::path& path);

/// Reads an 8/16-bit grayscale (or RGB, converted by luma) PNG or a
/// binary/ASCII PGM. Values are returned in their native integer scale.
Image read_grayscale(const std::filesystem::path& path);

/// Writes an 8-bit grayscale PNG, clipping `img` to [lo, hi].
void write_png(const std::filesystem::path& path, const Image& img, double lo = 0.0, double hi = 1.0);

/// Writes an 8-bit RGB PNG from interleaved rows (width * 3 bytes per row).
void write_png_rgb(const std::filesystem::path& path, int width, int height,
                   const std::vector<std::uint8_t>& rgb);

}  // namespace fei::io
