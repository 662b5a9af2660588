// Command-line front end. Exit codes: 0 success, 1 unexpected failure,
// 2 invalid configuration or usage, 3 I/O or data problems, 4 a numeric
// check (gradcheck) exceeded its tolerance.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "CLI11.hpp"
#include "snet/codec.hpp"
#include "snet/gradcheck.hpp"
#include "snet/image.hpp"
#include "snet/metrics.hpp"
#include "snet/model.hpp"
#include "snet/train.hpp"

namespace {

using namespace snet;

enum Exit { kOk = 0, kOther = 1, kConfig = 2, kIo = 3, kNumeric = 4 };

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  if (!out || !(out << text)) throw IoError("cannot write " + path);
}

std::pair<std::size_t, std::size_t> parse_size(const std::string& text) {
  const auto x = text.find('x');
  try {
    if (x == std::string::npos) {
      const auto s = std::stoul(text);
      return {s, s};
    }
    return {std::stoul(text.substr(0, x)), std::stoul(text.substr(x + 1))};
  } catch (const std::exception&) {
    throw ConfigError("size must look like 256 or 256x128, got '" + text + "'");
  }
}

struct TrainFlags {
  std::string config;
  std::string resume;
  std::string from_checkpoint;
  std::string output_dir;
  std::string train_dir;
  std::optional<std::int64_t> total_updates;
  std::optional<double> lr;
  std::optional<std::uint64_t> seed;
  std::optional<int> batch_size;
  std::optional<int> qf;
  std::string loss;

  void add_to(CLI::App* cmd, bool finetune) {
    cmd->add_option("--config", config, "JSON run config")->required()->check(CLI::ExistingFile);
    cmd->add_option("--resume", resume, "checkpoint to resume from (needs its .opt file)");
    if (finetune) {
      cmd->add_option("--from-checkpoint", from_checkpoint, "pre-trained checkpoint")->required();
    }
    cmd->add_option("--output-dir", output_dir, "overrides training.output_dir");
    cmd->add_option("--train-dir", train_dir, "overrides training.train_dir");
    cmd->add_option("--total-updates", total_updates, "overrides training.total_updates");
    cmd->add_option("--lr", lr, "overrides training.lr.initial");
    cmd->add_option("--seed", seed, "overrides training.seed");
    cmd->add_option("--batch-size", batch_size, "overrides training.batch_size");
    cmd->add_option("--qf", qf, "overrides training.qf");
    cmd->add_option("--loss", loss, "greedy or columnar; overrides architecture.loss_mode");
  }

  train::RunConfig resolve() const {
    train::RunConfig rc = train::load_run_config(config);
    auto& t = rc.training;
    if (!output_dir.empty()) t.output_dir = output_dir;
    if (!train_dir.empty()) t.train_dir = train_dir;
    if (total_updates) t.total_updates = total_updates;
    if (lr) t.initial_lr = lr;
    if (seed) t.seed = *seed;
    if (batch_size) t.batch_size = *batch_size;
    if (qf) t.qf = *qf;
    if (!loss.empty()) rc.architecture.loss_mode = model::parse_loss_mode(loss);
    rc.validate();
    return rc;
  }
};

int run_training(const TrainFlags& flags, train::Mode mode) {
  const train::RunConfig rc = flags.resolve();
  train::TrainOptions opts;
  opts.mode = mode;
  if (!flags.resume.empty()) opts.resume_from = flags.resume;
  if (!flags.from_checkpoint.empty() && flags.resume.empty()) opts.init_from = flags.from_checkpoint;
  opts.on_log = [](const train::TrainLogRecord& r) {
    std::cout << fmt::format("update {:>7}  lr {:.3g}  loss {:.6f}  {:.1f}s\n", r.update, r.lr, r.loss,
                             r.wall_seconds)
              << std::flush;
  };
  const auto result = train::run(rc, opts);
  std::cout << fmt::format("finished {} updates; checkpoint {}\n", result.updates, result.final_checkpoint.string());
  return kOk;
}

std::string group_digits(std::int64_t n) {
  std::string digits = std::to_string(n), out;
  for (std::size_t i = 0; i < digits.size(); ++i) {
    if (i > 0 && (digits.size() - i) % 3 == 0) out += ',';
    out += digits[i];
  }
  return out;
}

std::vector<int> heads_or_all(const std::vector<int>& heads, const model::SNetConfig& cfg) {
  return heads.empty() ? cfg.all_heads() : heads;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"S-Net JPEG artifact reduction: train, truncate, evaluate"};
  app.require_subcommand(1);

  // degrade
  std::string in_path, out_path, subsampling = "420";
  int qf = 40;
  auto* degrade = app.add_subcommand("degrade", "JPEG-degrade an image at a quality factor");
  degrade->add_option("--in", in_path, "input PPM")->required();
  degrade->add_option("--out", out_path, "output PPM")->required();
  degrade->add_option("--qf", qf, "quality factor 1..100")->required();
  degrade->add_option("--subsampling", subsampling, "420 or 444");

  // train / finetune
  TrainFlags train_flags, finetune_flags;
  auto* train_cmd = app.add_subcommand("train", "train from a JSON config");
  train_flags.add_to(train_cmd, false);
  auto* finetune_cmd = app.add_subcommand("finetune", "fine-tune a checkpoint (defaults lr 1e-5, 4e4 updates)");
  finetune_flags.add_to(finetune_cmd, true);

  // infer
  std::string ckpt;
  int head = 0;
  auto* infer = app.add_subcommand("infer", "restore a degraded image with one head");
  infer->add_option("--checkpoint", ckpt, "model checkpoint")->required();
  infer->add_option("--in", in_path, "degraded PPM")->required();
  infer->add_option("--out", out_path, "restored PPM")->required();
  infer->add_option("--head", head, "head index; units after it are not executed")->required();

  // eval
  std::string dataset, csv_path, luma = "studio";
  std::vector<int> heads;
  bool no_quantize = false;
  auto* eval_cmd = app.add_subcommand("eval", "y-channel PSNR/SSIM per head against the JPEG baseline");
  eval_cmd->add_option("--checkpoint", ckpt, "model checkpoint")->required();
  eval_cmd->add_option("--dataset", dataset, "directory of PPM originals")->required();
  eval_cmd->add_option("--qf", qf, "quality factor");
  eval_cmd->add_option("--heads", heads, "heads to evaluate (default all)")->delimiter(',');
  eval_cmd->add_option("--subsampling", subsampling, "420 or 444");
  eval_cmd->add_option("--luma", luma, "studio or full");
  eval_cmd->add_flag("--no-quantize", no_quantize, "measure restored outputs before 8-bit rounding");
  eval_cmd->add_option("--csv", csv_path, "also write the report as CSV");

  // bench
  std::string size = "256";
  int warmup = 1, iterations = 3;
  std::string arch = "advanced";
  int units = 8, channels = 256, image_channels = 3;
  std::uint64_t seed = 1;
  auto* bench = app.add_subcommand("bench", "forward throughput (MCP/s) per head depth");
  bench->add_option("--checkpoint", ckpt, "model checkpoint (default: random init from --arch/--units/--channels)");
  bench->add_option("--arch", arch, "classic or advanced");
  bench->add_option("--units", units, "number of units");
  bench->add_option("--channels", channels, "feature channels");
  bench->add_option("--size", size, "image size HxW");
  bench->add_option("--heads", heads, "head depths (default all)")->delimiter(',');
  bench->add_option("--warmup", warmup, "untimed passes per head");
  bench->add_option("--iters", iterations, "timed passes per head");
  bench->add_option("--csv", csv_path, "also write the report as CSV");

  // count-params
  bool csv_stdout = false;
  auto* count = app.add_subcommand("count-params", "parameter counts per block and cumulative per head");
  count->add_option("--arch", arch, "classic or advanced");
  count->add_option("--units", units, "number of units");
  count->add_option("--channels", channels, "feature channels");
  count->add_option("--image-channels", image_channels, "image channels");
  count->add_flag("--csv", csv_stdout, "CSV instead of a table");

  // gradcheck
  std::string precision = "float";
  double tolerance = 0.0, eps = 0.0;
  std::size_t gc_size = 8;
  int gc_channels = 4, gc_units = 2;
  auto* gradcheck = app.add_subcommand("gradcheck", "compare reverse-mode gradients with finite differences");
  gradcheck->add_option("--arch", arch, "classic or advanced");
  gradcheck->add_option("--units", gc_units, "number of units");
  gradcheck->add_option("--channels", gc_channels, "feature channels");
  gradcheck->add_option("--size", gc_size, "input height and width");
  gradcheck->add_option("--precision", precision, "float or double")->check(CLI::IsMember({"float", "double"}));
  gradcheck->add_option("--tolerance", tolerance, "max relative error (default 1e-2 float, 1e-4 double)");
  gradcheck->add_option("--eps", eps, "finite-difference step");
  gradcheck->add_option("--seed", seed, "initialization and data seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kConfig;
  }

  try {
    if (*degrade) {
      const ImageRGB img = read_image(in_path);
      write_image(out_path, codec::degrade(img, codec::QualityFactor(qf), codec::parse_subsampling(subsampling)));
      return kOk;
    }
    if (*train_cmd) return run_training(train_flags, train::Mode::kTrain);
    if (*finetune_cmd) return run_training(finetune_flags, train::Mode::kFinetune);

    if (*infer) {
      const model::SNetModel m = model::load_checkpoint(ckpt);
      if (head < 0 || head > m.config.units) {
        throw ConfigError(fmt::format("head {} out of range [0, {}] for this checkpoint", head, m.config.units));
      }
      const ImageRGB img = read_image(in_path);
      write_image(out_path, from_tensor(model::infer_head(m, to_tensor(img), head)));
      return kOk;
    }

    if (*eval_cmd) {
      eval::EvalOptions opts;
      opts.qf = qf;
      opts.subsampling = codec::parse_subsampling(subsampling);
      opts.luma = eval::parse_luma_convention(luma);
      opts.quantize_output = !no_quantize;
      (void)codec::QualityFactor(qf);
      const model::SNetModel m = model::load_checkpoint(ckpt);
      opts.heads = heads_or_all(heads, m.config);
      const auto report = eval::evaluate(m, std::filesystem::path(dataset), opts);
      std::cout << report.to_table();
      if (!csv_path.empty()) write_text(csv_path, report.to_csv());
      return kOk;
    }

    if (*bench) {
      model::SNetModel m;
      if (!ckpt.empty()) {
        m = model::load_checkpoint(ckpt);
      } else {
        model::SNetConfig cfg;
        cfg.unit_kind = model::parse_unit_kind(arch);
        cfg.units = units;
        cfg.channels = channels;
        m = model::init_params(cfg, seed);
      }
      const auto [h, w] = parse_size(size);
      const auto report = eval::bench_throughput(m, h, w, heads_or_all(heads, m.config), warmup, iterations);
      std::cout << report.to_table();
      if (!csv_path.empty()) write_text(csv_path, report.to_csv());
      return kOk;
    }

    if (*count) {
      model::SNetConfig cfg;
      cfg.unit_kind = model::parse_unit_kind(arch);
      cfg.units = units;
      cfg.channels = channels;
      cfg.image_channels = image_channels;
      cfg.validate();
      const auto c = model::count_params(cfg);
      if (csv_stdout) {
        std::cout << "block,params,mega\n";
        std::cout << fmt::format("encoder,{},{:.4f}\n", c.encoder, model::to_mega(c.encoder));
        std::cout << fmt::format("decoder,{},{:.4f}\n", c.decoder, model::to_mega(c.decoder));
        std::cout << fmt::format("unit,{},{:.4f}\n", c.per_unit, model::to_mega(c.per_unit));
        for (std::size_t k = 0; k < c.cumulative.size(); ++k) {
          std::cout << fmt::format("head_{},{},{:.4f}\n", k + 1, c.cumulative[k], model::to_mega(c.cumulative[k]));
        }
      } else {
        std::cout << fmt::format("{} S-Net, {} units, {} channels\n", arch, units, channels);
        std::cout << fmt::format("{:<10} {:>12} {:>10}\n", "block", "params", "M (2^20)");
        const auto row = [](const std::string& name, std::int64_t n) {
          std::cout << fmt::format("{:<10} {:>12} {:>9.4f}M\n", name, group_digits(n), model::to_mega(n));
        };
        row("encoder", c.encoder);
        row("decoder", c.decoder);
        row("unit", c.per_unit);
        for (std::size_t k = 0; k < c.cumulative.size(); ++k) row(fmt::format("head {}", k + 1), c.cumulative[k]);
      }
      return kOk;
    }

    if (*gradcheck) {
      GradCheckOptions o;
      o.config.unit_kind = model::parse_unit_kind(arch);
      o.config.units = gc_units;
      o.config.channels = gc_channels;
      o.size = gc_size;
      o.precision = precision == "double" ? Precision::kFloat64 : Precision::kFloat32;
      o.tolerance = tolerance;
      o.eps = eps;
      o.seed = seed;
      const auto r = snet::gradcheck(o);
      std::cout << fmt::format(
          "checked {} gradient elements ({})\nmax relative error {:.3e} at {}[{}] (analytic {:.6e}, numeric "
          "{:.6e})\ntolerance {:.1e}: {}\n",
          r.checked, precision, r.max_rel_error, r.worst_param, r.worst_index, r.worst_analytic, r.worst_numeric,
          r.tolerance, r.passed ? "PASS" : "FAIL");
      return r.passed ? kOk : kNumeric;
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfig;
  } catch (const CheckpointConfigMismatch& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfig;
  } catch (const ShapeError& e) {
    std::cerr << "invalid input: " << e.what() << '\n';
    return kConfig;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kIo;
  } catch (const std::exception& e) {
    std::cerr << "unexpected error: " << e.what() << '\n';
    return kOther;
  }
  return kOther;
}
