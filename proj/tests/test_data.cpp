#include <algorithm>
#include <fstream>
#include <map>
#include <set>

#include "doctest.h"
#include "snet/codec.hpp"
#include "snet/data.hpp"
#include "test_util.hpp"

using namespace snet;
using namespace snet::data;
using snet::testing::random_image;
using snet::testing::scratch_dir;

namespace {

std::vector<PatchCoord> grid(std::size_t h, std::size_t w, std::uint64_t seed) {
  SamplerConfig cfg;
  std::mt19937_64 rng(seed);
  return patch_grid(h, w, cfg, rng);
}

}  // namespace

TEST_CASE("scan_dataset") {
  const auto dir = scratch_dir("scan");
  CHECK_THROWS_AS(scan_dataset(dir), EmptyDatasetError);
  CHECK_THROWS_AS(scan_dataset(dir / "nope"), MissingDirectoryError);

  write_image(dir / "b.ppm", random_image(8, 8, 1));
  write_image(dir / "a.ppm", random_image(8, 8, 2));
  write_image(dir / "c.ppm", random_image(8, 8, 3));
  std::ofstream(dir / "notes.txt") << "not an image";
  std::ofstream(dir / "fake.ppm") << "P3\n1 1\n255\n0 0 0\n";
  std::filesystem::create_directory(dir / "sub");
  write_image(dir / "sub" / "d.ppm", random_image(8, 8, 4));

  const auto listing = scan_dataset(dir);
  REQUIRE(listing.images.size() == 3);
  CHECK(listing.images[0].filename() == "a.ppm");
  CHECK(listing.images[1].filename() == "b.ppm");
  CHECK(listing.images[2].filename() == "c.ppm");
  CHECK(listing.skipped == 2);

  const auto only_junk = scratch_dir("scan_junk");
  std::ofstream(only_junk / "x.txt") << "x";
  CHECK_THROWS_AS(scan_dataset(only_junk), EmptyDatasetError);
}

TEST_CASE("sampler config validation") {
  SamplerConfig c;
  CHECK_NOTHROW(c.validate());
  c.step_min = 70;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = SamplerConfig{};
  c.patch = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = SamplerConfig{};
  c.step_min = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("patch grid counts and bounds") {
  CHECK(grid(48, 48, 1) == std::vector<PatchCoord>{{0, 0}});
  CHECK_THROWS_AS(grid(47, 100, 1), ShapeError);
  CHECK_THROWS_AS(grid(100, 47, 1), ShapeError);

  // Per axis: all steps at 62 give 17 offsets, all at 37 give ceil(952/37)+1 = 27.
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto g = grid(1000, 1000, seed);
    CHECK(g.size() >= 17u * 17u);
    CHECK(g.size() <= 27u * 27u);
    for (const auto& p : g) {
      CHECK(p.y + 48 <= 1000);
      CHECK(p.x + 48 <= 1000);
    }
  }
  // The scan reaches the far edges.
  const auto g = grid(300, 500, 3);
  CHECK(std::any_of(g.begin(), g.end(), [](auto p) { return p.x == 452; }));
  CHECK(std::any_of(g.begin(), g.end(), [](auto p) { return p.y == 252; }));
  CHECK(g.front() == PatchCoord{0, 0});
  CHECK(grid(300, 500, 3) == g);
}

TEST_CASE("step distribution is uniform over [37, 62]") {
  std::map<std::size_t, int> hist;
  double sum = 0.0;
  int n = 0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto g = grid(48, 10000, seed);
    for (std::size_t i = 1; i + 1 < g.size(); ++i) {  // the last offset is clamped
      const std::size_t step = g[i].x - g[i - 1].x;
      ++hist[step];
      sum += static_cast<double>(step);
      ++n;
    }
  }
  CHECK(hist.size() == 26);
  CHECK(hist.begin()->first == 37);
  CHECK(hist.rbegin()->first == 62);
  const double sd = std::sqrt((26.0 * 26.0 - 1.0) / 12.0);
  CHECK(std::abs(sum / n - 49.5) < 3.0 * sd / std::sqrt(static_cast<double>(n)));
}

TEST_CASE("extracted patches are co-located and deterministic") {
  const ImageRGB orig = random_image(130, 170, 5);
  const ImageRGB deg = codec::degrade(orig, codec::QualityFactor(20));
  SamplerConfig cfg;
  cfg.seed = 11;
  const auto pairs = extract_patches(orig, deg, cfg);
  REQUIRE_FALSE(pairs.empty());
  for (const auto& p : pairs) {
    CHECK(p.input.height == 48);
    CHECK(p.target.width == 48);
    CHECK(p.target == crop(orig, p.origin, 48));
    CHECK(p.input == crop(deg, p.origin, 48));
  }
  const auto again = extract_patches(orig, deg, cfg);
  REQUIRE(again.size() == pairs.size());
  for (std::size_t i = 0; i < pairs.size(); ++i) CHECK(again[i].origin == pairs[i].origin);

  CHECK_THROWS_AS(extract_patches(orig, random_image(130, 171, 1), cfg), ShapeError);
  CHECK_THROWS_AS(extract_patches(random_image(40, 40, 1), random_image(40, 40, 2), cfg), ShapeError);
}

TEST_CASE("batches") {
  const ImageRGB orig = random_image(200, 200, 6);
  const ImageRGB deg = codec::degrade(orig, codec::QualityFactor(40));
  SamplerConfig cfg;
  const auto pairs = extract_patches(orig, deg, cfg);
  REQUIRE(pairs.size() >= 16);
  const Batch b = make_batch(std::span(pairs).first(16));
  CHECK(b.input.shape() == Shape{16, 3, 48, 48});
  CHECK(b.target.shape() == Shape{16, 3, 48, 48});
  for (float v : b.input.data()) CHECK((v >= 0.0f && v <= 1.0f));
  CHECK(b.target.at(3, 1, 5, 7) == doctest::Approx(pairs[3].target.at(5, 7, 1) / 255.0f));
  CHECK(b.input.at(3, 1, 5, 7) == doctest::Approx(pairs[3].input.at(5, 7, 1) / 255.0f));

  // Reference-based batches match the direct ones.
  std::vector<PatchRef> refs;
  for (std::size_t i = 0; i < 16; ++i) refs.push_back({0, pairs[i].origin});
  const ImageRGB origs[] = {orig}, degs[] = {deg};
  const Batch r = make_batch(std::span<const PatchRef>(refs), origs, degs, 48);
  CHECK(std::equal(r.input.data().begin(), r.input.data().end(), b.input.data().begin()));
  CHECK(std::equal(r.target.data().begin(), r.target.data().end(), b.target.data().begin()));
}

TEST_CASE("patch pool shuffles deterministically and signals epoch end") {
  std::vector<PatchRef> refs;
  for (std::uint32_t i = 0; i < 37; ++i) refs.push_back({i % 3, {i, i * 2}});
  PatchPool a(refs, 9), b(refs, 9), c(refs, 10);
  CHECK(std::equal(a.refs().begin(), a.refs().end(), b.refs().begin()));
  CHECK_FALSE(std::equal(a.refs().begin(), a.refs().end(), c.refs().begin()));

  std::vector<PatchRef> sorted(a.refs().begin(), a.refs().end());
  std::sort(sorted.begin(), sorted.end(), [](auto l, auto r) { return l.origin.y < r.origin.y; });
  CHECK(sorted == refs);

  int batches = 0;
  while (auto batch = a.next(16)) {
    CHECK(batch->size() == 16);
    ++batches;
  }
  CHECK(batches == 2);
  CHECK(a.cursor() == 32);
  CHECK_FALSE(a.next(16).has_value());

  b.seek(16);
  const auto second = b.next(16);
  REQUIRE(second.has_value());
  CHECK(second->front() == a.refs()[16]);
  CHECK_THROWS(b.seek(38));
}
