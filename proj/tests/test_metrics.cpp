#include <cmath>

#include "doctest.h"
#include "snet/metrics.hpp"
#include "test_util.hpp"

using namespace snet;
using namespace snet::eval;
using snet::testing::random_image;

namespace {

Plane make_plane(std::size_t h, std::size_t w, auto fn) {
  Plane p{h, w, std::vector<double>(h * w)};
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x) p.values[y * w + x] = fn(y, x);
  return p;
}

Plane random_plane(std::size_t h, std::size_t w, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> u(0, 255);
  return make_plane(h, w, [&](auto, auto) { return double(u(rng)); });
}

// Straightforward per-window SSIM with independently built Gaussian weights.
double ssim_oracle(const Plane& a, const Plane& b) {
  double g[11], gs = 0.0;
  for (int i = 0; i < 11; ++i) gs += g[i] = std::exp(-double((i - 5) * (i - 5)) / (2.0 * 1.5 * 1.5));
  const double c1 = std::pow(0.01 * 255, 2), c2 = std::pow(0.03 * 255, 2);
  double total = 0.0;
  std::size_t count = 0;
  for (std::size_t y = 0; y + 11 <= a.height; ++y) {
    for (std::size_t x = 0; x + 11 <= a.width; ++x) {
      double ma = 0, mb = 0, saa = 0, sbb = 0, sab = 0;
      for (int i = 0; i < 11; ++i) {
        for (int j = 0; j < 11; ++j) {
          const double w = g[i] * g[j] / (gs * gs);
          const double va = a.at(y + i, x + j), vb = b.at(y + i, x + j);
          ma += w * va, mb += w * vb, saa += w * va * va, sbb += w * vb * vb, sab += w * va * vb;
        }
      }
      const double vaa = saa - ma * ma, vbb = sbb - mb * mb, cab = sab - ma * mb;
      total += ((2 * ma * mb + c1) * (2 * cab + c2)) / ((ma * ma + mb * mb + c1) * (vaa + vbb + c2));
      ++count;
    }
  }
  return total / double(count);
}

}  // namespace

TEST_CASE("luma conventions") {
  ImageRGB img(1, 3);
  img.at(0, 0, 0) = img.at(0, 0, 1) = img.at(0, 0, 2) = 255;
  img.at(0, 2, 0) = 255;  // pure red
  const Plane s = luma(img, LumaConvention::kStudio);
  CHECK(s.at(0, 0) == 235.0);
  CHECK(s.at(0, 1) == 16.0);
  CHECK(s.at(0, 2) == 81.0);  // 16 + 65.481 = 81.481
  const Plane f = luma(img, LumaConvention::kFullRange);
  CHECK(f.at(0, 0) == 255.0);
  CHECK(f.at(0, 1) == 0.0);
  CHECK(f.at(0, 2) == 76.0);  // 0.299 * 255 = 76.245

  const Tensor t = to_tensor(img);
  const Plane ts = luma(t, 0, LumaConvention::kStudio);
  CHECK(ts.at(0, 2) == doctest::Approx(81.481));
  CHECK(parse_luma_convention("full") == LumaConvention::kFullRange);
  CHECK_THROWS_AS(parse_luma_convention("hdr"), ConfigError);
}

TEST_CASE("psnr") {
  const Plane a = random_plane(20, 30, 1);
  CHECK(psnr(a, a) == kInfinitePsnr);
  const Plane shifted = make_plane(20, 30, [&](auto y, auto x) { return a.at(y, x) + 1.0; });
  CHECK(psnr(a, shifted) == doctest::Approx(20.0 * std::log10(255.0)));
  CHECK(psnr(a, shifted) == doctest::Approx(48.1308).epsilon(1e-5));
  const Plane checker = make_plane(8, 8, [](auto y, auto x) { return (x + y) % 2 ? 255.0 : 0.0; });
  const Plane inverse = make_plane(8, 8, [](auto y, auto x) { return (x + y) % 2 ? 0.0 : 255.0; });
  CHECK(psnr(checker, inverse) == doctest::Approx(0.0));
  const Plane b = random_plane(20, 30, 2);
  CHECK(psnr(a, b) == psnr(b, a));
  CHECK_THROWS_AS(psnr(a, random_plane(20, 31, 3)), ShapeError);
}

TEST_CASE("ssim window") {
  const auto w = ssim_window();
  REQUIRE(w.size() == 121);
  double sum = 0.0;
  for (double v : w) sum += v;
  CHECK(sum == doctest::Approx(1.0));
  CHECK(w[60] == doctest::Approx(0.0707).epsilon(1e-2));  // centre weight
  CHECK(w[0] == doctest::Approx(w[120]));
  CHECK(w[5] == doctest::Approx(w[55]));
}

TEST_CASE("ssim") {
  const Plane a = random_plane(24, 31, 4);
  CHECK(ssim(a, a) == doctest::Approx(1.0));
  const Plane flat = make_plane(16, 16, [](auto, auto) { return 77.0; });
  CHECK(ssim(flat, flat) == doctest::Approx(1.0));
  std::mt19937_64 rng(5);
  std::normal_distribution<double> noise(0.0, 20.0);
  const Plane noisy = make_plane(24, 31, [&](auto y, auto x) { return a.at(y, x) + noise(rng); });
  CHECK(ssim(a, noisy) < 1.0);
  CHECK(ssim(a, noisy) == doctest::Approx(ssim(noisy, a)));
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const Plane x = random_plane(17 + seed, 23, 100 + seed);
    const Plane y = make_plane(x.height, x.width, [&](auto r, auto c) { return 0.7 * x.at(r, c) + 30.0 + noise(rng); });
    CHECK(std::abs(ssim(x, y) - ssim_oracle(x, y)) < 1e-6);
  }
  CHECK_THROWS_AS(ssim(random_plane(10, 30, 1), random_plane(10, 30, 2)), ShapeError);
  CHECK_THROWS_AS(ssim(random_plane(30, 10, 1), random_plane(30, 10, 2)), ShapeError);
  CHECK_THROWS_AS(ssim(a, random_plane(24, 30, 1)), ShapeError);
}

TEST_CASE("evaluate reports the baseline and every head") {
  model::SNetConfig cfg;
  cfg.channels = 4;
  cfg.units = 2;
  const auto m = model::init_params(cfg, 3);
  const std::vector<ImageRGB> images = {random_image(24, 40, 1), random_image(33, 17, 2)};
  EvalOptions opts;
  opts.qf = 30;
  const MetricReport r = evaluate(m, images, opts, "rand");
  CHECK(r.dataset == "rand");
  CHECK(r.qf == 30);
  CHECK(r.image_count == 2);
  CHECK(r.baseline.head == -1);
  REQUIRE(r.heads.size() == 2);
  CHECK(r.heads[0].head == 1);
  CHECK(r.heads[1].head == 2);

  double expect = 0.0;
  for (const auto& img : images) expect += psnr_y(img, codec::degrade(img, codec::QualityFactor(30)));
  CHECK(r.baseline.mean_psnr == doctest::Approx(expect / 2.0));

  const MetricReport again = evaluate(m, images, opts, "rand");
  CHECK(again.heads[1].mean_psnr == r.heads[1].mean_psnr);
  CHECK(again.heads[1].mean_ssim == r.heads[1].mean_ssim);

  opts.heads = {2};
  CHECK(evaluate(m, images, opts).heads.size() == 1);
  CHECK(r.to_csv().find("jpeg") != std::string::npos);
  CHECK_FALSE(r.to_table().empty());
}

TEST_CASE("baseline quality increases with qf on natural images") {
  model::SNetConfig cfg;
  cfg.channels = 2;
  cfg.units = 1;
  const auto m = model::init_params(cfg, 1);
  EvalOptions opts;
  double last = 0.0, last_ssim = 0.0;
  for (int qf : {10, 40, 90}) {
    opts.qf = qf;
    const auto r = evaluate(m, snet::testing::data_dir() / "natural" / "test", opts);
    CHECK(r.image_count == 8);
    CHECK(r.baseline.mean_psnr > last);
    CHECK(r.baseline.mean_ssim > last_ssim);
    last = r.baseline.mean_psnr;
    last_ssim = r.baseline.mean_ssim;
  }
  CHECK_THROWS_AS(evaluate(m, snet::testing::scratch_dir("eval_empty"), opts), EmptyDatasetError);
}

TEST_CASE("throughput report") {
  model::SNetConfig cfg;
  cfg.channels = 4;
  cfg.units = 3;
  const auto m = model::init_params(cfg, 3);
  const int heads[] = {1, 3};
  const auto r = bench_throughput(m, 32, 24, heads, 1, 2);
  CHECK(r.height == 32);
  CHECK(r.iterations == 2);
  REQUIRE(r.heads.size() == 2);
  for (const auto& h : r.heads) {
    CHECK(h.seconds > 0.0);
    CHECK(h.mcps == doctest::Approx(32.0 * 24 * 3 * 2 / (1e6 * h.seconds)));
  }
  CHECK(r.to_csv().find("mcps") != std::string::npos);
}
