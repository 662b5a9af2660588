// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fails.
// Criteria 5 and 6 train two reduced models from scratch (about an hour on one core).

#include <fmt/format.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "snet/codec.hpp"
#include "snet/data.hpp"
#include "snet/gradcheck.hpp"
#include "snet/metrics.hpp"
#include "snet/model.hpp"
#include "snet/train.hpp"

using namespace snet;

namespace {

const std::filesystem::path kData = SNET_TEST_DATA;

struct Verdict {
  bool pass = false;
  std::string detail;
};

std::filesystem::path work_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / "snet_acceptance" / name;
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

std::vector<ImageRGB> load_dir(const std::filesystem::path& dir) {
  std::vector<ImageRGB> out;
  for (const auto& p : data::scan_dataset(dir).images) out.push_back(read_image(p));
  return out;
}

bool near(double value, double expected, double tol) { return std::abs(value - expected) <= tol; }

Verdict parameter_accounting() {
  const double adv_totals[] = {2.29, 3.41, 4.54, 5.66, 6.78, 7.91, 9.04, 10.16};
  const double classic_totals[] = {1.72, 2.29, 2.85, 3.41, 3.97, 4.54, 5.10, 5.66};
  model::SNetConfig adv;
  model::SNetConfig cls;
  cls.unit_kind = model::UnitKind::kClassic;
  const auto a = model::count_params(adv);
  const auto c = model::count_params(cls);
  bool ok = a.encoder == 609536 && a.decoder == 609283 && a.per_unit == 1180160 && c.per_unit == 590080 &&
            c.encoder == 609536 && c.decoder == 609283;
  ok &= near(model::to_mega(a.encoder), 0.58, 0.01) && near(model::to_mega(a.decoder), 0.58, 0.01);
  ok &= near(model::to_mega(c.per_unit), 0.56, 0.01) && near(model::to_mega(a.per_unit), 1.12, 0.01);
  double worst = 0.0;
  for (int k = 0; k < 8; ++k) {
    worst = std::max(worst, std::abs(model::to_mega(a.cumulative[k]) - adv_totals[k]));
    worst = std::max(worst, std::abs(model::to_mega(c.cumulative[k]) - classic_totals[k]));
  }
  ok &= worst <= 0.01;
  // The allocated parameters agree with the accounting.
  ok &= model::SNetModel(adv).parameter_count() == static_cast<std::size_t>(a.total);
  return {ok, fmt::format("encoder {} decoder {} unit {}/{} (classic/advanced), advanced total {} = {:.4f}M, "
                          "worst cumulative deviation {:.4f}M",
                          a.encoder, a.decoder, c.per_unit, a.per_unit, a.total, model::to_mega(a.total), worst)};
}

Verdict gradient_correctness() {
  GradCheckOptions f;
  f.precision = Precision::kFloat32;
  const auto rf = gradcheck(f);
  GradCheckOptions d;
  d.precision = Precision::kFloat64;
  const auto rd = gradcheck(d);
  const bool ok = rf.passed && rd.passed && rf.tolerance <= 1e-2 && rd.tolerance <= 1e-4;
  return {ok, fmt::format("{} elements; float32 max rel err {:.2e} (< {:.0e}), float64 {:.2e} (< {:.0e})", rf.checked,
                          rf.max_rel_error, rf.tolerance, rd.max_rel_error, rd.tolerance)};
}

Verdict truncation_equivalence() {
  model::SNetConfig cfg;
  cfg.channels = 16;
  const auto m = model::init_params(cfg, 2024);
  Tensor x(Shape{1, 3, 24, 20});
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  for (float& v : x.data()) v = u(rng);
  auto full = m;
  Tape tape;
  const auto outs = model::forward_all(tape, full, tape.constant(x));
  int matched = 0;
  for (int k = 1; k <= 8; ++k) {
    model::SNetConfig sub = cfg;
    sub.units = k;
    model::SNetModel standalone(sub);
    auto dst = standalone.named_parameters();
    const auto src = m.named_parameters();
    for (std::size_t i = 0; i < dst.size(); ++i) {
      // Same canonical name order except that the decoder follows fewer units.
      for (const auto& s : src) {
        if (s.name == dst[i].name) *dst[i].tensor = *s.tensor;
      }
    }
    const Tensor y = model::infer_head(standalone, x, k);
    const Tensor& ref = tape.value(outs[k - 1].image);
    if (std::equal(y.data().begin(), y.data().end(), ref.data().begin(), ref.data().end())) ++matched;
  }
  return {matched == 8, fmt::format("{}/8 heads bit-identical to standalone k-unit models", matched)};
}

Verdict codec_sanity() {
  const auto images = load_dir(kData / "natural" / "test");
  double min_q100 = 1e9;
  int monotone = 0;
  std::string rows;
  for (const auto& img : images) {
    min_q100 = std::min(min_q100, eval::psnr_y(img, codec::degrade(img, codec::QualityFactor(100),
                                                                    codec::Subsampling::k444)));
    double p[3];
    int i = 0;
    for (int qf : {10, 20, 40}) p[i++] = eval::psnr_y(img, codec::degrade(img, codec::QualityFactor(qf)));
    if (p[0] < p[1] && p[1] < p[2]) ++monotone;
    rows += fmt::format(" {:.2f}/{:.2f}/{:.2f}", p[0], p[1], p[2]);
  }
  const bool ok = images.size() >= 5 && min_q100 > 50.0 && monotone == static_cast<int>(images.size());
  return {ok, fmt::format("{} images; min qf100 4:4:4 y-PSNR {:.2f} dB; qf 10/20/40 increasing on {}/{}:{}",
                          images.size(), min_q100, monotone, images.size(), rows)};
}

// Desk-scale setup shared by criteria 5 and 6.
train::RunConfig desk_config(model::LossMode mode, const std::string& out) {
  train::RunConfig c;
  c.architecture.channels = 32;
  c.architecture.units = 4;
  c.architecture.unit_kind = model::UnitKind::kAdvanced;
  c.architecture.loss_mode = mode;
  auto& t = c.training;
  t.qf = 20;
  t.batch_size = 8;
  t.total_updates = 3000;
  t.initial_lr = 3e-3;
  t.halve_every = 1000;
  t.lr_floor = 1e-5;
  t.seed = 20;
  t.train_dir = (kData / "natural" / "train").string();
  t.output_dir = work_dir(out).string();
  t.checkpoint_every = 1000;
  t.log_every = 250;
  return c;
}

struct DeskRun {
  eval::MetricReport report;
  double seconds = 0.0;
};

DeskRun desk_run(model::LossMode mode, const std::string& name) {
  const auto t0 = std::chrono::steady_clock::now();
  train::TrainOptions opts;
  opts.on_log = [&](const train::TrainLogRecord& r) {
    std::printf("  [%s] update %lld lr %.2e loss %.5f\n", name.c_str(), static_cast<long long>(r.update), r.lr,
                r.loss);
    std::fflush(stdout);
  };
  const auto result = train::run(desk_config(mode, name), opts);
  eval::EvalOptions eo;
  eo.qf = 20;
  const auto report = eval::evaluate(result.model, kData / "natural" / "test", eo);
  std::printf("%s", report.to_table().c_str());
  return {report, std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count()};
}

Verdict training_efficacy(const DeskRun& greedy) {
  const auto& r = greedy.report;
  double worst_gain = 1e9;
  std::string gains;
  for (const auto& h : r.heads) {
    worst_gain = std::min(worst_gain, h.mean_psnr - r.baseline.mean_psnr);
    gains += fmt::format(" h{} {:+.2f}", h.head, h.mean_psnr - r.baseline.mean_psnr);
  }
  const double h1 = r.heads.front().mean_psnr, h4 = r.heads.back().mean_psnr;
  const bool ok = r.image_count > 0 && worst_gain >= 0.3 && h4 >= h1 - 0.1;
  return {ok, fmt::format("jpeg {:.2f} dB; gains{}; head4 - head1 = {:+.2f} dB ({:.0f} s)", r.baseline.mean_psnr,
                          gains, h4 - h1, greedy.seconds)};
}

Verdict ablation(const DeskRun& greedy, const DeskRun& columnar) {
  const double g1 = greedy.report.heads.front().mean_psnr, c1 = columnar.report.heads.front().mean_psnr;
  const double g4 = greedy.report.heads.back().mean_psnr, c4 = columnar.report.heads.back().mean_psnr;
  return {g1 - c1 >= 0.2, fmt::format("head 1 greedy {:.2f} vs columnar {:.2f} dB ({:+.2f}); final head {:.2f} vs "
                                      "{:.2f} (not gated; columnar {:.0f} s)",
                                      g1, c1, g1 - c1, g4, c4, columnar.seconds)};
}

Verdict metric_correctness() {
  std::mt19937_64 rng(99);
  std::uniform_int_distribution<int> u(0, 254);
  eval::Plane a{40, 50, std::vector<double>(2000)};
  for (double& v : a.values) v = u(rng);
  eval::Plane b = a;
  for (double& v : b.values) v += 1.0;
  const double p = eval::psnr(a, b);

  ImageRGB img(40, 50);
  for (auto& v : img.pixels) v = static_cast<std::uint8_t>(u(rng));
  const double self = eval::ssim_y(img, img);

  // Direct per-window SSIM with its own Gaussian weights.
  const auto direct = [](const eval::Plane& x, const eval::Plane& y) {
    double g[11], gs = 0.0;
    for (int i = 0; i < 11; ++i) gs += g[i] = std::exp(-(i - 5.0) * (i - 5.0) / 4.5);
    const double c1 = 6.5025, c2 = 58.5225;
    double total = 0.0;
    std::size_t n = 0;
    for (std::size_t r = 0; r + 11 <= x.height; ++r) {
      for (std::size_t c = 0; c + 11 <= x.width; ++c) {
        double mx = 0, my = 0, sxx = 0, syy = 0, sxy = 0;
        for (int i = 0; i < 11; ++i) {
          for (int j = 0; j < 11; ++j) {
            const double w = g[i] * g[j] / (gs * gs), vx = x.at(r + i, c + j), vy = y.at(r + i, c + j);
            mx += w * vx, my += w * vy, sxx += w * vx * vx, syy += w * vy * vy, sxy += w * vx * vy;
          }
        }
        total += (2 * mx * my + c1) * (2 * (sxy - mx * my) + c2) /
                 ((mx * mx + my * my + c1) * (sxx - mx * mx + syy - my * my + c2));
        ++n;
      }
    }
    return total / static_cast<double>(n);
  };
  double worst = 0.0;
  for (int pair = 0; pair < 10; ++pair) {
    ImageRGB x(30 + pair, 35), y(30 + pair, 35);
    for (auto& v : x.pixels) v = static_cast<std::uint8_t>(u(rng));
    std::normal_distribution<double> noise(0.0, 10.0 + 5 * pair);
    for (std::size_t i = 0; i < y.pixels.size(); ++i) {
      y.pixels[i] = static_cast<std::uint8_t>(std::clamp(x.pixels[i] + noise(rng), 0.0, 255.0));
    }
    const double ours = eval::ssim_y(x, y);
    worst = std::max(worst, std::abs(ours - direct(eval::luma(x), eval::luma(y))));
  }
  const bool ok = near(p, 48.13, 0.01) && std::abs(self - 1.0) <= 1e-9 && worst < 1e-6;
  return {ok, fmt::format("off-by-one PSNR {:.4f} dB; ssim(a,a) - 1 = {:.1e}; max |ssim - direct| {:.1e} over 10 "
                          "pairs",
                          p, self - 1.0, worst)};
}

Verdict resumability() {
  auto base = desk_config(model::LossMode::kGreedy, "resume_full");
  base.architecture.channels = 8;
  base.architecture.units = 2;
  base.training.total_updates = 10;
  base.training.checkpoint_every = 5;
  base.training.log_every = 1;
  train::RunConfig part = base;
  part.training.output_dir = work_dir("resume_part").string();

  auto full = train::run(base).model;
  train::TrainOptions first;
  first.stop_after = 5;
  const auto half = train::run(part, first);
  train::TrainOptions second;
  second.resume_from = half.final_checkpoint;
  auto resumed = train::run(part, second).model;

  std::size_t differing = 0, total = 0;
  const auto pa = full.named_parameters(), pb = resumed.named_parameters();
  for (std::size_t i = 0; i < pa.size(); ++i) {
    const auto da = pa[i].tensor->data(), db = pb[i].tensor->data();
    for (std::size_t j = 0; j < da.size(); ++j) differing += da[j] != db[j], ++total;
  }
  return {differing == 0, fmt::format("{} of {} parameters differ after resuming at update 5 of 10", differing,
                                      total)};
}

Verdict throughput() {
  model::SNetConfig cfg;  // full-size advanced S-Net
  const auto m = model::init_params(cfg, 1);
  const int heads[] = {1, 2, 4, 8};
  const auto r = eval::bench_throughput(m, 64, 64, heads, 1, 3);
  bool ok = r.heads.size() == 4;
  std::string figs;
  for (std::size_t i = 0; i < r.heads.size(); ++i) {
    figs += fmt::format(" h{} {:.3f}", r.heads[i].head, r.heads[i].mcps);
    if (i > 0 && r.heads[i].mcps > r.heads[i - 1].mcps) ok = false;
  }
  return {ok, fmt::format("MCP/s at 64x64, 256 channels:{}", figs)};
}

}  // namespace

int main() {
  int failures = 0;
  const auto report = [&](int id, const char* name, const std::function<Verdict()>& check) {
    Verdict v;
    try {
      v = check();
    } catch (const std::exception& e) {
      v = {false, std::string("exception: ") + e.what()};
    }
    failures += !v.pass;
    std::printf("criterion %d %s: %s | %s\n", id, v.pass ? "PASS" : "FAIL", name, v.detail.c_str());
    std::fflush(stdout);
  };

  report(1, "parameter accounting", parameter_accounting);
  report(2, "gradient correctness", gradient_correctness);
  report(3, "truncation equivalence", truncation_equivalence);
  report(4, "codec sanity", codec_sanity);
  report(7, "metric correctness", metric_correctness);
  report(8, "determinism and resumability", resumability);
  report(9, "throughput vs depth", throughput);

  std::optional<DeskRun> greedy, columnar;
  std::string train_error;
  try {
    greedy = desk_run(model::LossMode::kGreedy, "greedy");
    columnar = desk_run(model::LossMode::kColumnar, "columnar");
  } catch (const std::exception& e) {
    train_error = e.what();
  }
  report(5, "desk-scale training efficacy", [&]() -> Verdict {
    if (!greedy) return {false, "training failed: " + train_error};
    return training_efficacy(*greedy);
  });
  report(6, "greedy vs columnar head 1", [&]() -> Verdict {
    if (!greedy || !columnar) return {false, "training failed: " + train_error};
    return ablation(*greedy, *columnar);
  });

  std::printf("%d criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
