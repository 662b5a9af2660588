#pragma once

#include <filesystem>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "snet/codec.hpp"
#include "snet/image.hpp"
#include "snet/model.hpp"

namespace snet::eval {

// kStudio: BT.601 studio swing, Y = 16 + (65.481 R + 128.553 G + 24.966 B) / 255,
// rounded to 8 bits. kFullRange: JFIF Y = 0.299 R + 0.587 G + 0.114 B, rounded.
enum class LumaConvention { kStudio, kFullRange };

LumaConvention parse_luma_convention(std::string_view text);
std::string_view to_string(LumaConvention c);

struct Plane {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<double> values;

  double at(std::size_t y, std::size_t x) const { return values[y * width + x]; }
};

Plane luma(const ImageRGB& image, LumaConvention convention = LumaConvention::kStudio);
// From batch slot `slot` of a [0, 1] tensor, clamped but not rounded.
Plane luma(const Tensor& image, std::size_t slot, LumaConvention convention = LumaConvention::kStudio);

inline constexpr double kInfinitePsnr = std::numeric_limits<double>::infinity();

// 10 log10(255^2 / MSE); kInfinitePsnr when the planes are equal.
double psnr(const Plane& a, const Plane& b);
double psnr_y(const ImageRGB& a, const ImageRGB& b, LumaConvention convention = LumaConvention::kStudio);

inline constexpr std::size_t kSsimWindow = 11;

// Mean SSIM over the valid region with an 11x11 Gaussian window (sigma 1.5),
// K1 = 0.01, K2 = 0.03, L = 255. Throws ShapeError below 11x11.
double ssim(const Plane& a, const Plane& b);
double ssim_y(const ImageRGB& a, const ImageRGB& b, LumaConvention convention = LumaConvention::kStudio);

// Normalized 11x11 Gaussian weights, row-major.
std::vector<double> ssim_window();

struct HeadMetrics {
  int head = 0;  // -1 for the JPEG baseline
  double mean_psnr = 0.0;
  double mean_ssim = 0.0;
  std::size_t infinite_psnr = 0;  // excluded from mean_psnr
};

struct MetricReport {
  std::string dataset;
  int qf = 0;
  std::size_t image_count = 0;
  HeadMetrics baseline;
  std::vector<HeadMetrics> heads;

  std::string to_csv() const;
  std::string to_table() const;
};

struct EvalOptions {
  int qf = 40;
  codec::Subsampling subsampling = codec::Subsampling::k420;
  std::vector<int> heads;  // empty: every head of the model
  LumaConvention luma = LumaConvention::kStudio;
  bool quantize_output = true;  // round restored images to 8 bits before measuring
};

MetricReport evaluate(const model::SNetModel& model, std::span<const ImageRGB> originals,
                      const EvalOptions& options, std::string dataset_id = {});
// Reads every PPM in `dir`; throws MissingDirectoryError / EmptyDatasetError.
MetricReport evaluate(const model::SNetModel& model, const std::filesystem::path& dir,
                      const EvalOptions& options);

struct HeadThroughput {
  int head = 0;
  double seconds = 0.0;  // total over measured iterations
  double mcps = 0.0;     // million color pixels per second
};

struct ThroughputReport {
  std::size_t height = 0;
  std::size_t width = 0;
  int warmup = 0;
  int iterations = 0;
  std::vector<HeadThroughput> heads;

  std::string to_csv() const;
  std::string to_table() const;
};

// Times `iterations` forward passes per head on a fixed random image after
// `warmup` untimed ones. MCP/s = height * width * 3 * iterations / (1e6 * seconds).
ThroughputReport bench_throughput(const model::SNetModel& model, std::size_t height, std::size_t width,
                                  std::span<const int> heads, int warmup = 1, int iterations = 3);

}  // namespace snet::eval
