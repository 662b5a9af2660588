#include "snet/codec.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>
#include <vector>

namespace snet::codec {
namespace {

constexpr QuantTable kLuma = {
    16, 11, 10, 16, 24,  40,  51,  61,   //
    12, 12, 14, 19, 26,  58,  60,  55,   //
    14, 13, 16, 24, 40,  57,  69,  56,   //
    14, 17, 22, 29, 51,  87,  80,  62,   //
    18, 22, 37, 56, 68,  109, 103, 77,   //
    24, 35, 55, 64, 81,  104, 113, 92,   //
    49, 64, 78, 87, 103, 121, 120, 101,  //
    72, 92, 95, 98, 112, 100, 103, 99,
};

constexpr QuantTable kChroma = {
    17, 18, 24, 47, 99, 99, 99, 99,  //
    18, 21, 26, 66, 99, 99, 99, 99,  //
    24, 26, 56, 99, 99, 99, 99, 99,  //
    47, 66, 99, 99, 99, 99, 99, 99,  //
    99, 99, 99, 99, 99, 99, 99, 99,  //
    99, 99, 99, 99, 99, 99, 99, 99,  //
    99, 99, 99, 99, 99, 99, 99, 99,  //
    99, 99, 99, 99, 99, 99, 99, 99,
};

// basis[u][i] = c(u) cos((2i + 1) u pi / 16), c(0) = sqrt(1/8), c(u>0) = sqrt(2/8).
const std::array<std::array<double, 8>, 8>& dct_basis() {
  static const auto basis = [] {
    std::array<std::array<double, 8>, 8> b{};
    for (int u = 0; u < 8; ++u) {
      const double cu = u == 0 ? std::sqrt(1.0 / 8.0) : std::sqrt(2.0 / 8.0);
      for (int i = 0; i < 8; ++i) {
        b[u][i] = cu * std::cos((2.0 * i + 1.0) * u * std::numbers::pi / 16.0);
      }
    }
    return b;
  }();
  return basis;
}

std::uint8_t to_u8(double v) { return static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L)); }

// Single-channel 8-bit plane.
struct Plane {
  std::size_t h = 0, w = 0;
  std::vector<std::uint8_t> v;
  std::uint8_t& at(std::size_t y, std::size_t x) { return v[y * w + x]; }
  std::uint8_t at(std::size_t y, std::size_t x) const { return v[y * w + x]; }
};

ImageRGB pad_replicate(const ImageRGB& img, std::size_t ph, std::size_t pw) {
  ImageRGB out(ph, pw);
  for (std::size_t y = 0; y < ph; ++y) {
    const std::size_t sy = std::min(y, img.height - 1);
    for (std::size_t x = 0; x < pw; ++x) {
      const std::size_t sx = std::min(x, img.width - 1);
      for (std::size_t c = 0; c < 3; ++c) out.at(y, x, c) = img.at(sy, sx, c);
    }
  }
  return out;
}

Plane channel(const ImageRGB& img, std::size_t c) {
  Plane p{img.height, img.width, std::vector<std::uint8_t>(img.height * img.width)};
  for (std::size_t i = 0; i < p.v.size(); ++i) p.v[i] = img.pixels[i * 3 + c];
  return p;
}

// 2x2 box average with round-half-up.
Plane downsample2(const Plane& p) {
  Plane out{p.h / 2, p.w / 2, std::vector<std::uint8_t>((p.h / 2) * (p.w / 2))};
  for (std::size_t y = 0; y < out.h; ++y) {
    for (std::size_t x = 0; x < out.w; ++x) {
      const int s = p.at(2 * y, 2 * x) + p.at(2 * y, 2 * x + 1) + p.at(2 * y + 1, 2 * x) +
                    p.at(2 * y + 1, 2 * x + 1);
      out.at(y, x) = static_cast<std::uint8_t>((s + 2) / 4);
    }
  }
  return out;
}

// Triangle-filter 2x upsampling: each output sample weighs its nearest input
// 9/16, the horizontal and vertical neighbours 3/16 each and the diagonal
// 1/16, with edge replication.
Plane upsample2(const Plane& p) {
  Plane out{p.h * 2, p.w * 2, std::vector<std::uint8_t>(p.h * 2 * p.w * 2)};
  const auto clamp_idx = [](std::ptrdiff_t i, std::size_t n) {
    return static_cast<std::size_t>(std::clamp<std::ptrdiff_t>(i, 0, static_cast<std::ptrdiff_t>(n) - 1));
  };
  for (std::size_t y = 0; y < out.h; ++y) {
    const std::size_t cy = y / 2;
    const std::size_t ny = clamp_idx(static_cast<std::ptrdiff_t>(cy) + (y % 2 == 0 ? -1 : 1), p.h);
    for (std::size_t x = 0; x < out.w; ++x) {
      const std::size_t cx = x / 2;
      const std::size_t nx = clamp_idx(static_cast<std::ptrdiff_t>(cx) + (x % 2 == 0 ? -1 : 1), p.w);
      const int s = 9 * p.at(cy, cx) + 3 * p.at(cy, nx) + 3 * p.at(ny, cx) + p.at(ny, nx);
      out.at(y, x) = static_cast<std::uint8_t>((s + 8) / 16);
    }
  }
  return out;
}

void quantize_plane(Plane& p, const QuantTable& table) {
  for (std::size_t by = 0; by < p.h; by += 8) {
    for (std::size_t bx = 0; bx < p.w; bx += 8) {
      Block block{};
      for (std::size_t i = 0; i < 8; ++i) {
        for (std::size_t j = 0; j < 8; ++j) {
          block[i * 8 + j] = static_cast<float>(p.at(by + i, bx + j)) - 128.0f;
        }
      }
      Block coeffs = dct8(block);
      for (std::size_t k = 0; k < 64; ++k) {
        const float q = static_cast<float>(table[k]);
        coeffs[k] = std::nearbyint(coeffs[k] / q) * q;
      }
      const Block rec = idct8(coeffs);
      for (std::size_t i = 0; i < 8; ++i) {
        for (std::size_t j = 0; j < 8; ++j) {
          p.at(by + i, bx + j) = to_u8(static_cast<double>(rec[i * 8 + j]) + 128.0);
        }
      }
    }
  }
}

}  // namespace

QualityFactor::QualityFactor(int q) : q_(q) {
  if (q < 1 || q > 100) {
    throw ConfigError("JPEG quality factor must be in [1, 100], got " + std::to_string(q));
  }
}

Subsampling parse_subsampling(std::string_view text) {
  if (text == "444" || text == "4:4:4") return Subsampling::k444;
  if (text == "420" || text == "4:2:0") return Subsampling::k420;
  throw ConfigError("unknown chroma subsampling '" + std::string(text) + "' (expected 444 or 420)");
}

std::string_view to_string(Subsampling s) { return s == Subsampling::k444 ? "444" : "420"; }

const QuantTable& annex_k_luma() { return kLuma; }
const QuantTable& annex_k_chroma() { return kChroma; }

QuantTables scale_tables(const QuantTable& base_luma, const QuantTable& base_chroma, QualityFactor qf) {
  const int q = qf.value();
  const long scale = q < 50 ? 5000 / q : 200 - 2 * q;
  const auto scale_one = [scale](const QuantTable& base) {
    QuantTable out{};
    for (std::size_t i = 0; i < 64; ++i) {
      const long v = (static_cast<long>(base[i]) * scale + 50) / 100;
      out[i] = static_cast<int>(std::clamp(v, 1L, 255L));
    }
    return out;
  };
  return QuantTables{scale_one(base_luma), scale_one(base_chroma)};
}

QuantTables scale_tables(QualityFactor qf) { return scale_tables(kLuma, kChroma, qf); }

Block dct8(const Block& block) {
  const auto& b = dct_basis();
  std::array<double, 64> tmp{};
  // rows: tmp[i][v] = sum_j x[i][j] b[v][j]
  for (int i = 0; i < 8; ++i) {
    for (int v = 0; v < 8; ++v) {
      double s = 0.0;
      for (int j = 0; j < 8; ++j) s += static_cast<double>(block[i * 8 + j]) * b[v][j];
      tmp[i * 8 + v] = s;
    }
  }
  Block out{};
  for (int u = 0; u < 8; ++u) {
    for (int v = 0; v < 8; ++v) {
      double s = 0.0;
      for (int i = 0; i < 8; ++i) s += b[u][i] * tmp[i * 8 + v];
      out[u * 8 + v] = static_cast<float>(s);
    }
  }
  return out;
}

Block idct8(const Block& coeffs) {
  const auto& b = dct_basis();
  std::array<double, 64> tmp{};
  // columns: tmp[i][v] = sum_u b[u][i] X[u][v]
  for (int i = 0; i < 8; ++i) {
    for (int v = 0; v < 8; ++v) {
      double s = 0.0;
      for (int u = 0; u < 8; ++u) s += b[u][i] * static_cast<double>(coeffs[u * 8 + v]);
      tmp[i * 8 + v] = s;
    }
  }
  Block out{};
  for (int i = 0; i < 8; ++i) {
    for (int j = 0; j < 8; ++j) {
      double s = 0.0;
      for (int v = 0; v < 8; ++v) s += tmp[i * 8 + v] * b[v][j];
      out[i * 8 + j] = static_cast<float>(s);
    }
  }
  return out;
}

ImageRGB rgb_to_ycbcr(const ImageRGB& rgb) {
  ImageRGB out(rgb.height, rgb.width);
  for (std::size_t i = 0; i < rgb.height * rgb.width; ++i) {
    const double r = rgb.pixels[i * 3], g = rgb.pixels[i * 3 + 1], b = rgb.pixels[i * 3 + 2];
    out.pixels[i * 3] = to_u8(0.299 * r + 0.587 * g + 0.114 * b);
    out.pixels[i * 3 + 1] = to_u8(128.0 - 0.168736 * r - 0.331264 * g + 0.5 * b);
    out.pixels[i * 3 + 2] = to_u8(128.0 + 0.5 * r - 0.418688 * g - 0.081312 * b);
  }
  return out;
}

ImageRGB ycbcr_to_rgb(const ImageRGB& ycc) {
  ImageRGB out(ycc.height, ycc.width);
  for (std::size_t i = 0; i < ycc.height * ycc.width; ++i) {
    const double y = ycc.pixels[i * 3];
    const double cb = static_cast<double>(ycc.pixels[i * 3 + 1]) - 128.0;
    const double cr = static_cast<double>(ycc.pixels[i * 3 + 2]) - 128.0;
    out.pixels[i * 3] = to_u8(y + 1.402 * cr);
    out.pixels[i * 3 + 1] = to_u8(y - 0.344136 * cb - 0.714136 * cr);
    out.pixels[i * 3 + 2] = to_u8(y + 1.772 * cb);
  }
  return out;
}

ImageRGB degrade(const ImageRGB& image, QualityFactor qf, Subsampling subsampling) {
  if (image.empty()) throw ShapeError("cannot degrade a zero-area image");
  const std::size_t unit = subsampling == Subsampling::k420 ? 16 : 8;
  const std::size_t ph = (image.height + unit - 1) / unit * unit;
  const std::size_t pw = (image.width + unit - 1) / unit * unit;
  const ImageRGB ycc = rgb_to_ycbcr(pad_replicate(image, ph, pw));
  const QuantTables tables = scale_tables(qf);

  Plane y = channel(ycc, 0);
  Plane cb = channel(ycc, 1);
  Plane cr = channel(ycc, 2);
  quantize_plane(y, tables.luma);
  if (subsampling == Subsampling::k420) {
    cb = downsample2(cb);
    cr = downsample2(cr);
  }
  quantize_plane(cb, tables.chroma);
  quantize_plane(cr, tables.chroma);
  if (subsampling == Subsampling::k420) {
    cb = upsample2(cb);
    cr = upsample2(cr);
  }

  ImageRGB decoded_ycc(ph, pw);
  for (std::size_t i = 0; i < ph * pw; ++i) {
    decoded_ycc.pixels[i * 3] = y.v[i];
    decoded_ycc.pixels[i * 3 + 1] = cb.v[i];
    decoded_ycc.pixels[i * 3 + 2] = cr.v[i];
  }
  const ImageRGB rgb = ycbcr_to_rgb(decoded_ycc);
  ImageRGB out(image.height, image.width);
  for (std::size_t r = 0; r < image.height; ++r) {
    std::copy_n(rgb.pixels.begin() + static_cast<std::ptrdiff_t>(r * pw * 3), image.width * 3,
                out.pixels.begin() + static_cast<std::ptrdiff_t>(r * image.width * 3));
  }
  return out;
}

}  // namespace snet::codec
