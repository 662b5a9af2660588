#include <cmath>
#include <fstream>

#include "doctest.h"
#include "snet/codec.hpp"
#include "snet/data.hpp"
#include "snet/metrics.hpp"
#include "test_util.hpp"

using namespace snet;
using namespace snet::codec;
using snet::testing::random_image;

namespace {

std::vector<ImageRGB> natural_images() {
  std::vector<ImageRGB> out;
  for (const auto& p : data::scan_dataset(snet::testing::data_dir() / "natural" / "test").images) {
    out.push_back(read_image(p));
  }
  return out;
}

void write_bytes(const std::filesystem::path& p, const std::string& bytes) {
  std::ofstream f(p, std::ios::binary);
  f << bytes;
}

}  // namespace

TEST_CASE("quality factor range") {
  CHECK_THROWS_AS(QualityFactor(0), ConfigError);
  CHECK_THROWS_AS(QualityFactor(101), ConfigError);
  CHECK(QualityFactor(1).value() == 1);
  CHECK(QualityFactor(100).value() == 100);
}

TEST_CASE("table scaling follows the IJG law") {
  const QuantTables q50 = scale_tables(QualityFactor(50));
  CHECK(q50.luma == annex_k_luma());
  CHECK(q50.chroma == annex_k_chroma());
  const QuantTables q100 = scale_tables(QualityFactor(100));
  for (int v : q100.luma) CHECK(v == 1);
  for (int v : q100.chroma) CHECK(v == 1);
  CHECK(annex_k_luma()[0] == 16);
  CHECK(scale_tables(QualityFactor(10)).luma[0] == 80);
  CHECK(scale_tables(QualityFactor(1)).luma[0] == 255);  // 16 * 5000 clamps
  CHECK(scale_tables(QualityFactor(75)).luma[0] == 8);   // (16*50 + 50) / 100

  for (int q = 1; q < 100; ++q) {
    const QuantTables lo = scale_tables(QualityFactor(q)), hi = scale_tables(QualityFactor(q + 1));
    for (std::size_t i = 0; i < 64; ++i) {
      CHECK(lo.luma[i] >= hi.luma[i]);
      CHECK(lo.chroma[i] >= hi.chroma[i]);
      CHECK(lo.luma[i] >= 1);
      CHECK(lo.luma[i] <= 255);
    }
  }
}

TEST_CASE("orthonormal 8x8 DCT") {
  Block zero{};
  for (float v : dct8(zero)) CHECK(v == 0.0f);

  Block flat;
  flat.fill(8.0f);
  const Block c = dct8(flat);
  CHECK(c[0] == doctest::Approx(64.0f));
  for (std::size_t i = 1; i < 64; ++i) CHECK(std::abs(c[i]) < 1e-4f);

  std::mt19937_64 rng(3);
  std::uniform_real_distribution<float> u(-128.0f, 127.0f);
  for (int trial = 0; trial < 50; ++trial) {
    Block b;
    for (float& v : b) v = u(rng);
    const Block f = dct8(b);
    const Block r = idct8(f);
    double n0 = 0.0, n1 = 0.0;
    for (std::size_t i = 0; i < 64; ++i) {
      CHECK(std::abs(r[i] - b[i]) < 1e-4f);
      n0 += double(b[i]) * b[i];
      n1 += double(f[i]) * f[i];
    }
    CHECK(std::sqrt(n1) == doctest::Approx(std::sqrt(n0)).epsilon(1e-6));
  }
}

TEST_CASE("full-range YCbCr transform") {
  ImageRGB px(1, 2);
  px.at(0, 0, 0) = px.at(0, 0, 1) = px.at(0, 0, 2) = 255;
  const ImageRGB ycc = rgb_to_ycbcr(px);
  CHECK(int(ycc.at(0, 0, 0)) == 255);
  CHECK(int(ycc.at(0, 0, 1)) == 128);
  CHECK(int(ycc.at(0, 0, 2)) == 128);
  CHECK(int(ycc.at(0, 1, 0)) == 0);
  CHECK(int(ycc.at(0, 1, 1)) == 128);
  CHECK(int(ycc.at(0, 1, 2)) == 128);

  const ImageRGB img = random_image(64, 64, 5);
  const ImageRGB back = ycbcr_to_rgb(rgb_to_ycbcr(img));
  int worst = 0;
  for (std::size_t i = 0; i < img.pixels.size(); ++i) worst = std::max(worst, std::abs(int(img.pixels[i]) - back.pixels[i]));
  CHECK(worst <= 1);
}

TEST_CASE("PPM read/write") {
  const auto dir = snet::testing::scratch_dir("ppm");
  for (auto [h, w] : {std::pair{1u, 1u}, {3u, 7u}, {64u, 33u}}) {
    const ImageRGB img = random_image(h, w, h * 31 + w);
    write_image(dir / "a.ppm", img);
    CHECK(read_image(dir / "a.ppm") == img);
  }
  write_bytes(dir / "comment.ppm", std::string("P6\n# made by hand\n2 1\n255\n") + std::string("\x01\x02\x03\x04\x05\x06", 6));
  const ImageRGB c = read_image(dir / "comment.ppm");
  CHECK(c.width == 2);
  CHECK(int(c.at(0, 1, 2)) == 6);

  write_bytes(dir / "trunc.ppm", "P6\n4 4\n255\n\x01\x02");
  CHECK_THROWS_AS(read_image(dir / "trunc.ppm"), MalformedFileError);
  write_bytes(dir / "header.ppm", "P6\n4\n");
  CHECK_THROWS_AS(read_image(dir / "header.ppm"), MalformedFileError);
  write_bytes(dir / "ascii.ppm", "P3\n1 1\n255\n0 0 0\n");
  CHECK_THROWS_AS(read_image(dir / "ascii.ppm"), UnsupportedFormatError);
  write_bytes(dir / "deep.ppm", "P6\n1 1\n65535\n\0\0\0\0\0\0");
  CHECK_THROWS_AS(read_image(dir / "deep.ppm"), UnsupportedFormatError);
  CHECK_THROWS_AS(read_image(dir / "missing.ppm"), IoError);
  CHECK_THROWS_AS(write_image(dir / "no_such_dir" / "x.ppm", random_image(2, 2, 1)), IoError);
  CHECK(looks_like_ppm(dir / "comment.ppm"));
  CHECK_FALSE(looks_like_ppm(dir / "ascii.ppm"));
}

TEST_CASE("degrade keeps size for any dimensions and rejects empty images") {
  for (auto [h, w] : {std::pair{1u, 1u}, {8u, 8u}, {13u, 21u}, {17u, 16u}, {31u, 9u}}) {
    const ImageRGB img = random_image(h, w, h + w);
    for (auto s : {Subsampling::k444, Subsampling::k420}) {
      const ImageRGB out = degrade(img, QualityFactor(30), s);
      CHECK(out.height == h);
      CHECK(out.width == w);
      CHECK(degrade(img, QualityFactor(30), s) == out);  // deterministic
    }
  }
  CHECK_THROWS_AS(degrade(ImageRGB(0, 5), QualityFactor(50)), ShapeError);
}

TEST_CASE("flat gray images: only the DC term is quantized") {
  for (int q : {1, 10, 20, 40, 50, 75, 90, 100}) {
    const int q_dc = scale_tables(QualityFactor(q)).luma[0];
    // |error in DC| <= q_dc / 2 and a flat block's pixels are DC / 8.
    const double bound = q_dc / 16.0 + 0.5;
    for (int level = 0; level < 256; level += 5) {
      const ImageRGB img(16, 24, static_cast<std::uint8_t>(level));
      for (auto s : {Subsampling::k444, Subsampling::k420}) {
        const ImageRGB out = degrade(img, QualityFactor(q), s);
        int worst = 0;
        for (std::size_t i = 0; i < out.pixels.size(); ++i) worst = std::max(worst, std::abs(int(out.pixels[i]) - level));
        INFO("qf ", q, " level ", level);
        CHECK(worst <= bound);
        if (q >= 50) CHECK(worst <= 1);
      }
    }
    // Mid-gray has a zero level-shifted DC and survives exactly.
    const ImageRGB mid(16, 16, 128);
    CHECK(degrade(mid, QualityFactor(q)) == mid);
  }
}

TEST_CASE("natural images: near-lossless at qf 100 and monotone in quality") {
  const auto images = natural_images();
  REQUIRE(images.size() >= 5);
  for (const ImageRGB& img : images) {
    const double p100 = eval::psnr_y(degrade(img, QualityFactor(100), Subsampling::k444), img);
    CHECK(p100 > 50.0);
    const double p10 = eval::psnr_y(degrade(img, QualityFactor(10)), img);
    const double p20 = eval::psnr_y(degrade(img, QualityFactor(20)), img);
    const double p40 = eval::psnr_y(degrade(img, QualityFactor(40)), img);
    CHECK(p10 < p20);
    CHECK(p20 < p40);
    const double p100_420 = eval::psnr_y(degrade(img, QualityFactor(100)), img);
    for (int q = 1; q < 100; q += 7) CHECK(eval::psnr_y(degrade(img, QualityFactor(q)), img) <= p100_420);
  }
}
