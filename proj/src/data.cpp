#include "snet/data.hpp"

#include <algorithm>
#include <string>

namespace snet::data {
namespace {

// Offsets along one axis; `draw` yields the step after each position.
template <typename Draw>
std::vector<std::size_t> axis_offsets(std::size_t extent, std::size_t patch, Draw&& draw) {
  std::vector<std::size_t> out;
  std::size_t pos = 0;
  while (true) {
    out.push_back(pos);
    if (pos + patch >= extent) break;
    std::size_t next = pos + draw();
    if (next + patch > extent) next = extent - patch;
    pos = next;
  }
  return out;
}

}  // namespace

DatasetListing scan_dataset(const std::filesystem::path& dir) {
  std::error_code ec;
  if (!std::filesystem::is_directory(dir, ec)) {
    throw MissingDirectoryError("dataset directory does not exist: " + dir.string());
  }
  DatasetListing listing;
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(dir, ec)) {
    if (entry.is_regular_file()) files.push_back(entry.path());
  }
  if (ec) throw IoError("cannot list " + dir.string() + ": " + ec.message());
  std::sort(files.begin(), files.end());
  for (const auto& f : files) {
    if (looks_like_ppm(f)) {
      listing.images.push_back(f);
    } else {
      ++listing.skipped;
    }
  }
  if (listing.images.empty()) {
    throw EmptyDatasetError("no usable images in " + dir.string() + " (" + std::to_string(listing.skipped) +
                            " files skipped)");
  }
  return listing;
}

void SamplerConfig::validate() const {
  if (patch == 0) throw ConfigError("patch size must be positive");
  if (step_min == 0 || step_min > step_max) {
    throw ConfigError("patch step range must satisfy 1 <= step_min <= step_max");
  }
}

std::vector<PatchCoord> patch_grid(std::size_t height, std::size_t width, const SamplerConfig& cfg,
                                   std::mt19937_64& rng) {
  cfg.validate();
  if (height < cfg.patch || width < cfg.patch) {
    throw ShapeError("image " + std::to_string(height) + "x" + std::to_string(width) + " is smaller than a " +
                     std::to_string(cfg.patch) + "-pixel patch");
  }
  std::uniform_int_distribution<std::size_t> step(cfg.step_min, cfg.step_max);
  const auto draw = [&] { return step(rng); };
  std::vector<PatchCoord> coords;
  for (std::size_t y : axis_offsets(height, cfg.patch, draw)) {
    for (std::size_t x : axis_offsets(width, cfg.patch, draw)) coords.push_back({y, x});
  }
  return coords;
}

ImageRGB crop(const ImageRGB& image, PatchCoord origin, std::size_t size) {
  if (origin.y + size > image.height || origin.x + size > image.width) {
    throw ShapeError("crop exceeds image bounds");
  }
  ImageRGB out(size, size);
  for (std::size_t r = 0; r < size; ++r) {
    const auto* src = image.pixels.data() + ((origin.y + r) * image.width + origin.x) * 3;
    std::copy_n(src, size * 3, out.pixels.data() + r * size * 3);
  }
  return out;
}

std::vector<PatchPair> extract_patches(const ImageRGB& original, const ImageRGB& degraded,
                                       const SamplerConfig& cfg) {
  if (original.height != degraded.height || original.width != degraded.width) {
    throw ShapeError("original and degraded images differ in size");
  }
  std::mt19937_64 rng(cfg.seed);
  std::vector<PatchPair> pairs;
  for (PatchCoord c : patch_grid(original.height, original.width, cfg, rng)) {
    pairs.push_back({crop(degraded, c, cfg.patch), crop(original, c, cfg.patch), c});
  }
  return pairs;
}

Batch make_batch(std::span<const PatchPair> pairs) {
  if (pairs.empty()) throw ShapeError("cannot batch zero patches");
  const std::size_t h = pairs[0].input.height, w = pairs[0].input.width;
  Batch b{Tensor(Shape{pairs.size(), 3, h, w}), Tensor(Shape{pairs.size(), 3, h, w})};
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    store_tensor(pairs[i].input, b.input, i);
    store_tensor(pairs[i].target, b.target, i);
  }
  return b;
}

PatchPool::PatchPool(std::vector<PatchRef> refs, std::uint64_t shuffle_seed) : refs_(std::move(refs)) {
  std::mt19937_64 rng(shuffle_seed);
  std::shuffle(refs_.begin(), refs_.end(), rng);
}

std::optional<std::span<const PatchRef>> PatchPool::next(std::size_t batch_size) {
  if (batch_size == 0) throw ConfigError("batch size must be positive");
  if (refs_.size() - cursor_ < batch_size) return std::nullopt;
  std::span<const PatchRef> out(refs_.data() + cursor_, batch_size);
  cursor_ += batch_size;
  return out;
}

void PatchPool::seek(std::size_t cursor) {
  if (cursor > refs_.size()) throw ConfigError("patch pool cursor beyond end");
  cursor_ = cursor;
}

Batch make_batch(std::span<const PatchRef> refs, std::span<const ImageRGB> originals,
                 std::span<const ImageRGB> degraded, std::size_t patch) {
  if (refs.empty()) throw ShapeError("cannot batch zero patches");
  Batch b{Tensor(Shape{refs.size(), 3, patch, patch}), Tensor(Shape{refs.size(), 3, patch, patch})};
  for (std::size_t i = 0; i < refs.size(); ++i) {
    const PatchRef& r = refs[i];
    store_tensor(crop(degraded[r.image], r.origin, patch), b.input, i);
    store_tensor(crop(originals[r.image], r.origin, patch), b.target, i);
  }
  return b;
}

}  // namespace snet::data
