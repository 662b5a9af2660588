#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "snet/tensor.hpp"

namespace snet {

// 8-bit interleaved RGB, row-major.
struct ImageRGB {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<std::uint8_t> pixels;  // height * width * 3

  ImageRGB() = default;
  ImageRGB(std::size_t h, std::size_t w, std::uint8_t fill = 0)
      : height(h), width(w), pixels(h * w * 3, fill) {}

  std::uint8_t& at(std::size_t y, std::size_t x, std::size_t ch) { return pixels[(y * width + x) * 3 + ch]; }
  std::uint8_t at(std::size_t y, std::size_t x, std::size_t ch) const {
    return pixels[(y * width + x) * 3 + ch];
  }
  bool empty() const { return height == 0 || width == 0; }
  bool operator==(const ImageRGB&) const = default;
};

enum class ImageFormat { kPpm };

// Binary P6 with maxval 255. Throws IoError when the file cannot be opened,
// MalformedFileError on a bad header or truncated payload, and
// UnsupportedFormatError for other netpbm variants or extensions.
ImageRGB read_image(const std::filesystem::path& path);
void write_image(const std::filesystem::path& path, const ImageRGB& image,
                 ImageFormat format = ImageFormat::kPpm);

// True when the file starts with a parseable P6 header.
bool looks_like_ppm(const std::filesystem::path& path);

// (1, 3, h, w) tensor with values scaled to [0, 1].
Tensor to_tensor(const ImageRGB& image);
// Writes images into batch slot `slot` of an (n, 3, h, w) tensor.
void store_tensor(const ImageRGB& image, Tensor& batch, std::size_t slot);
// Clamps to [0, 1] and rounds to 8 bits; reads batch slot `slot`.
ImageRGB from_tensor(const Tensor& t, std::size_t slot = 0);

}  // namespace snet
