#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <span>
#include <vector>

#include "snet/image.hpp"
#include "snet/tensor.hpp"

namespace snet::data {

struct DatasetListing {
  std::vector<std::filesystem::path> images;  // lexicographic order
  std::size_t skipped = 0;                    // files that are not readable PPMs
};

// Lists the PPM images directly inside `dir`. Throws MissingDirectoryError
// or EmptyDatasetError.
DatasetListing scan_dataset(const std::filesystem::path& dir);

struct SamplerConfig {
  std::size_t patch = 48;
  std::size_t step_min = 37;
  std::size_t step_max = 62;
  std::uint64_t seed = 0;

  void validate() const;  // throws ConfigError
};

struct PatchCoord {
  std::size_t y = 0;
  std::size_t x = 0;
  bool operator==(const PatchCoord&) const = default;
};

struct PatchPair {
  ImageRGB input;   // from the degraded image
  ImageRGB target;  // from the original
  PatchCoord origin;
};

// Raster scan: after each row (and after each patch within a row) the next
// offset advances by an independently drawn step in [step_min, step_max]; an
// offset that would overrun the image is clamped to the last fitting
// position, which ends the row (or the scan).
std::vector<PatchCoord> patch_grid(std::size_t height, std::size_t width, const SamplerConfig& cfg,
                                   std::mt19937_64& rng);

// Co-located patches from a degraded/original pair, using cfg.seed.
// Throws ShapeError if the images differ in size or are smaller than a patch.
std::vector<PatchPair> extract_patches(const ImageRGB& original, const ImageRGB& degraded,
                                       const SamplerConfig& cfg);

ImageRGB crop(const ImageRGB& image, PatchCoord origin, std::size_t size);

struct Batch {
  Tensor input;   // (B, 3, patch, patch), values in [0, 1]
  Tensor target;
};

Batch make_batch(std::span<const PatchPair> pairs);

// A patch known by image index and position; cropped only when batched.
struct PatchRef {
  std::uint32_t image = 0;
  PatchCoord origin;
  bool operator==(const PatchRef&) const = default;
};

// Shuffled pool of patch references handed out in fixed-size batches.
class PatchPool {
 public:
  PatchPool(std::vector<PatchRef> refs, std::uint64_t shuffle_seed);

  // Next batch_size refs, or nullopt when fewer remain (end of epoch).
  std::optional<std::span<const PatchRef>> next(std::size_t batch_size);

  std::size_t size() const { return refs_.size(); }
  std::size_t cursor() const { return cursor_; }
  void seek(std::size_t cursor);
  std::span<const PatchRef> refs() const { return refs_; }

 private:
  std::vector<PatchRef> refs_;
  std::size_t cursor_ = 0;
};

Batch make_batch(std::span<const PatchRef> refs, std::span<const ImageRGB> originals,
                 std::span<const ImageRGB> degraded, std::size_t patch);

}  // namespace snet::data
