#pragma once

// JPEG degradation simulator: the lossy half of baseline JPEG (color
// transform, chroma subsampling, 8x8 DCT, quantization) without entropy
// coding, which is lossless and does not affect the decoded pixels.

#include <array>
#include <string_view>

#include "snet/image.hpp"

namespace snet::codec {

class QualityFactor {
 public:
  // Throws ConfigError unless 1 <= q <= 100.
  explicit QualityFactor(int q);
  int value() const { return q_; }

 private:
  int q_;
};

using Block = std::array<float, 64>;
using QuantTable = std::array<int, 64>;  // row-major, natural (not zigzag) order

struct QuantTables {
  QuantTable luma{};
  QuantTable chroma{};
};

enum class Subsampling { k444, k420 };

Subsampling parse_subsampling(std::string_view text);
std::string_view to_string(Subsampling s);

// ITU-T T.81 Annex K example tables.
const QuantTable& annex_k_luma();
const QuantTable& annex_k_chroma();

// IJG quality scaling: scale = q < 50 ? 5000 / q : 200 - 2q, entries become
// clamp((base * scale + 50) / 100, 1, 255) with integer division.
QuantTables scale_tables(const QuantTable& base_luma, const QuantTable& base_chroma, QualityFactor qf);
QuantTables scale_tables(QualityFactor qf);

// Orthonormal 2-D type-II DCT of an 8x8 block and its inverse.
Block dct8(const Block& block);
Block idct8(const Block& coeffs);

// BT.601 full-range (JFIF) color transforms on 8-bit images. Channels of the
// YCbCr image are stored in the R, G, B slots as Y, Cb, Cr; results are
// rounded and clamped to [0, 255].
ImageRGB rgb_to_ycbcr(const ImageRGB& rgb);
ImageRGB ycbcr_to_rgb(const ImageRGB& ycc);

// Full encode/decode round trip at the given quality. Sizes that are not a
// multiple of the block size are edge-replicated before blocking and cropped
// afterwards. Throws ShapeError on a zero-area image.
ImageRGB degrade(const ImageRGB& image, QualityFactor qf, Subsampling subsampling = Subsampling::k420);

}  // namespace snet::codec
