#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "hqgan/tensor.hpp"

namespace hqgan {

/// 8-bit RGB, interleaved rows.
struct RgbImage {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<std::uint8_t> pixels;  // 3 * width * height
};

/// Lossless PNG (8-bit RGB, non-interlaced).
void write_png(const RgbImage& image, const std::filesystem::path& path);
RgbImage read_png(const std::filesystem::path& path);

/// Tiles [N,3,S,S] tensors in [-1,+1] into a grid image, row-major, black
/// padding for missing tiles. -1 maps to byte 0 and +1 to byte 255.
RgbImage tile_grid(const Tensor& images, std::size_t grid_cols);

}  // namespace hqgan
