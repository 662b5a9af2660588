#include "snet/metrics.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <random>
#include <sstream>

#include <fmt/format.h>

#include "snet/data.hpp"

namespace snet::eval {
namespace {

double luma_value(double r, double g, double b, LumaConvention c) {
  if (c == LumaConvention::kStudio) return 16.0 + (65.481 * r + 128.553 * g + 24.966 * b) / 255.0;
  return 0.299 * r + 0.587 * g + 0.114 * b;
}

void check_same_size(const Plane& a, const Plane& b) {
  if (a.height != b.height || a.width != b.width) {
    throw ShapeError(fmt::format("metric inputs differ in size: {}x{} vs {}x{}", a.height, a.width, b.height,
                                 b.width));
  }
}

// Valid-region correlation of a plane with the separable Gaussian.
std::vector<double> filter_valid(const std::vector<double>& src, std::size_t h, std::size_t w,
                                 const std::vector<double>& g) {
  const std::size_t k = g.size();
  const std::size_t oh = h - k + 1, ow = w - k + 1;
  std::vector<double> rows(h * ow);
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < ow; ++x) {
      double s = 0.0;
      for (std::size_t i = 0; i < k; ++i) s += g[i] * src[y * w + x + i];
      rows[y * ow + x] = s;
    }
  }
  std::vector<double> out(oh * ow);
  for (std::size_t y = 0; y < oh; ++y) {
    for (std::size_t x = 0; x < ow; ++x) {
      double s = 0.0;
      for (std::size_t i = 0; i < k; ++i) s += g[i] * rows[(y + i) * ow + x];
      out[y * ow + x] = s;
    }
  }
  return out;
}

std::vector<double> gaussian_1d() {
  std::vector<double> g(kSsimWindow);
  const double c = (kSsimWindow - 1) / 2.0;
  double total = 0.0;
  for (std::size_t i = 0; i < kSsimWindow; ++i) {
    const double d = static_cast<double>(i) - c;
    g[i] = std::exp(-d * d / (2.0 * 1.5 * 1.5));
    total += g[i];
  }
  for (double& v : g) v /= total;
  return g;
}

struct Accumulator {
  int head;
  double psnr_sum = 0.0;
  std::size_t psnr_count = 0;
  std::size_t infinite = 0;
  double ssim_sum = 0.0;

  void add(const Plane& restored, const Plane& original) {
    const double p = psnr(restored, original);
    if (std::isinf(p)) {
      ++infinite;
    } else {
      psnr_sum += p;
      ++psnr_count;
    }
    ssim_sum += ssim(restored, original);
  }

  HeadMetrics finish(std::size_t images) const {
    HeadMetrics m;
    m.head = head;
    m.mean_psnr = psnr_count ? psnr_sum / static_cast<double>(psnr_count) : kInfinitePsnr;
    m.mean_ssim = ssim_sum / static_cast<double>(images);
    m.infinite_psnr = infinite;
    return m;
  }
};

std::string head_label(int head) { return head < 0 ? std::string("jpeg") : std::to_string(head); }

}  // namespace

LumaConvention parse_luma_convention(std::string_view text) {
  if (text == "studio") return LumaConvention::kStudio;
  if (text == "full") return LumaConvention::kFullRange;
  throw ConfigError("unknown luma convention '" + std::string(text) + "' (expected studio or full)");
}

std::string_view to_string(LumaConvention c) { return c == LumaConvention::kStudio ? "studio" : "full"; }

Plane luma(const ImageRGB& image, LumaConvention convention) {
  Plane p{image.height, image.width, std::vector<double>(image.height * image.width)};
  for (std::size_t i = 0; i < p.values.size(); ++i) {
    const auto* px = image.pixels.data() + i * 3;
    p.values[i] = std::round(luma_value(px[0], px[1], px[2], convention));
  }
  return p;
}

Plane luma(const Tensor& image, std::size_t slot, LumaConvention convention) {
  const Shape s = image.shape();
  if (s.c != 3 || slot >= s.n) throw ShapeError("luma needs a 3-channel tensor slot, got " + s.to_string());
  Plane p{s.h, s.w, std::vector<double>(s.plane())};
  const float* r = image.plane(slot, 0);
  const float* g = image.plane(slot, 1);
  const float* b = image.plane(slot, 2);
  const auto v = [](float x) { return 255.0 * std::clamp(static_cast<double>(x), 0.0, 1.0); };
  for (std::size_t i = 0; i < p.values.size(); ++i) p.values[i] = luma_value(v(r[i]), v(g[i]), v(b[i]), convention);
  return p;
}

double psnr(const Plane& a, const Plane& b) {
  check_same_size(a, b);
  if (a.values.empty()) throw ShapeError("psnr of an empty plane");
  double se = 0.0;
  for (std::size_t i = 0; i < a.values.size(); ++i) {
    const double d = a.values[i] - b.values[i];
    se += d * d;
  }
  if (se == 0.0) return kInfinitePsnr;
  const double mse = se / static_cast<double>(a.values.size());
  return 10.0 * std::log10(255.0 * 255.0 / mse);
}

double psnr_y(const ImageRGB& a, const ImageRGB& b, LumaConvention convention) {
  return psnr(luma(a, convention), luma(b, convention));
}

std::vector<double> ssim_window() {
  const auto g = gaussian_1d();
  std::vector<double> w(kSsimWindow * kSsimWindow);
  for (std::size_t y = 0; y < kSsimWindow; ++y) {
    for (std::size_t x = 0; x < kSsimWindow; ++x) w[y * kSsimWindow + x] = g[y] * g[x];
  }
  return w;
}

double ssim(const Plane& a, const Plane& b) {
  check_same_size(a, b);
  if (a.height < kSsimWindow || a.width < kSsimWindow) {
    throw ShapeError(fmt::format("ssim needs at least {0}x{0} pixels, got {1}x{2}", kSsimWindow, a.height, a.width));
  }
  const std::size_t h = a.height, w = a.width, n = h * w;
  std::vector<double> aa(n), bb(n), ab(n);
  for (std::size_t i = 0; i < n; ++i) {
    aa[i] = a.values[i] * a.values[i];
    bb[i] = b.values[i] * b.values[i];
    ab[i] = a.values[i] * b.values[i];
  }
  const auto g = gaussian_1d();
  const auto mu_a = filter_valid(a.values, h, w, g);
  const auto mu_b = filter_valid(b.values, h, w, g);
  const auto e_aa = filter_valid(aa, h, w, g);
  const auto e_bb = filter_valid(bb, h, w, g);
  const auto e_ab = filter_valid(ab, h, w, g);

  constexpr double c1 = (0.01 * 255.0) * (0.01 * 255.0);
  constexpr double c2 = (0.03 * 255.0) * (0.03 * 255.0);
  double total = 0.0;
  for (std::size_t i = 0; i < mu_a.size(); ++i) {
    const double ma = mu_a[i], mb = mu_b[i];
    const double va = e_aa[i] - ma * ma, vb = e_bb[i] - mb * mb, cov = e_ab[i] - ma * mb;
    total += ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
  }
  return total / static_cast<double>(mu_a.size());
}

double ssim_y(const ImageRGB& a, const ImageRGB& b, LumaConvention convention) {
  return ssim(luma(a, convention), luma(b, convention));
}

MetricReport evaluate(const model::SNetModel& model, std::span<const ImageRGB> originals,
                      const EvalOptions& options, std::string dataset_id) {
  const codec::QualityFactor qf(options.qf);
  std::vector<int> heads = options.heads.empty() ? model.config.all_heads() : options.heads;
  std::sort(heads.begin(), heads.end());
  heads.erase(std::unique(heads.begin(), heads.end()), heads.end());
  if (originals.empty()) throw EmptyDatasetError("evaluation needs at least one image");

  Accumulator baseline{-1};
  std::vector<Accumulator> per_head;
  for (int h : heads) per_head.push_back({h});

  for (const ImageRGB& original : originals) {
    const ImageRGB degraded = codec::degrade(original, qf, options.subsampling);
    const Plane y_orig = luma(original, options.luma);
    baseline.add(luma(degraded, options.luma), y_orig);
    const auto outputs = model::infer_heads(model, to_tensor(degraded), heads);
    for (std::size_t i = 0; i < outputs.size(); ++i) {
      const Tensor& restored = outputs[i].image;
      per_head[i].add(options.quantize_output ? luma(from_tensor(restored), options.luma)
                                              : luma(restored, 0, options.luma),
                      y_orig);
    }
  }

  MetricReport report;
  report.dataset = std::move(dataset_id);
  report.qf = options.qf;
  report.image_count = originals.size();
  report.baseline = baseline.finish(originals.size());
  for (const auto& acc : per_head) report.heads.push_back(acc.finish(originals.size()));
  return report;
}

MetricReport evaluate(const model::SNetModel& model, const std::filesystem::path& dir,
                      const EvalOptions& options) {
  (void)codec::QualityFactor(options.qf);  // validate before reading files
  const auto listing = data::scan_dataset(dir);
  std::vector<ImageRGB> images;
  images.reserve(listing.images.size());
  for (const auto& p : listing.images) images.push_back(read_image(p));
  return evaluate(model, images, options, dir.string());
}

std::string MetricReport::to_csv() const {
  std::ostringstream os;
  os << "dataset,qf,images,head,psnr_db,ssim,infinite_psnr\n";
  const auto row = [&](const HeadMetrics& m) {
    os << fmt::format("{},{},{},{},{:.4f},{:.6f},{}\n", dataset, qf, image_count, head_label(m.head), m.mean_psnr,
                      m.mean_ssim, m.infinite_psnr);
  };
  row(baseline);
  for (const auto& m : heads) row(m);
  return os.str();
}

std::string MetricReport::to_table() const {
  std::ostringstream os;
  os << fmt::format("dataset {}  qf {}  images {}\n", dataset, qf, image_count);
  os << fmt::format("{:>6}  {:>10}  {:>8}\n", "head", "PSNR (dB)", "SSIM");
  const auto row = [&](const HeadMetrics& m) {
    os << fmt::format("{:>6}  {:>10.2f}  {:>8.4f}", head_label(m.head), m.mean_psnr, m.mean_ssim);
    if (m.infinite_psnr) os << fmt::format("  ({} identical images excluded from PSNR)", m.infinite_psnr);
    os << '\n';
  };
  row(baseline);
  for (const auto& m : heads) row(m);
  return os.str();
}

ThroughputReport bench_throughput(const model::SNetModel& model, std::size_t height, std::size_t width,
                                  std::span<const int> heads, int warmup, int iterations) {
  if (height == 0 || width == 0) throw ConfigError("benchmark image must have positive size");
  if (warmup < 0 || iterations < 1) throw ConfigError("benchmark needs warmup >= 0 and iterations >= 1");
  Tensor x(Shape{1, static_cast<std::size_t>(model.config.image_channels), height, width});
  std::mt19937_64 rng(0x5eed);
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  for (float& v : x.data()) v = u(rng);

  ThroughputReport report{height, width, warmup, iterations, {}};
  for (int head : heads) {
    for (int i = 0; i < warmup; ++i) model::infer_head(model, x, head);
    const auto t0 = std::chrono::steady_clock::now();
    for (int i = 0; i < iterations; ++i) model::infer_head(model, x, head);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const double color_pixels = static_cast<double>(height * width) * 3.0 * iterations;
    report.heads.push_back({head, secs, color_pixels / (1e6 * secs)});
  }
  return report;
}

std::string ThroughputReport::to_csv() const {
  std::ostringstream os;
  os << "height,width,warmup,iterations,head,seconds,mcps\n";
  for (const auto& h : heads) {
    os << fmt::format("{},{},{},{},{},{:.6f},{:.4f}\n", height, width, warmup, iterations, h.head, h.seconds, h.mcps);
  }
  return os.str();
}

std::string ThroughputReport::to_table() const {
  std::ostringstream os;
  os << fmt::format("image {}x{}  warmup {}  iterations {}\n", height, width, warmup, iterations);
  os << fmt::format("{:>6}  {:>12}  {:>10}\n", "head", "seconds", "MCP/s");
  for (const auto& h : heads) os << fmt::format("{:>6}  {:>12.4f}  {:>10.3f}\n", h.head, h.seconds, h.mcps);
  return os.str();
}

}  // namespace snet::eval
