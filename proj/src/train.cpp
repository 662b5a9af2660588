#include "snet/train.hpp"

#include <algorithm>
#include <chrono>
#include <fstream>
#include <set>
#include <sstream>

#include <fmt/format.h>

#include "json.hpp"
#include "snet/blobfile.hpp"
#include "snet/data.hpp"
#include "snet/metrics.hpp"
#include "snet/ops.hpp"

namespace snet::train {
namespace {

using json = nlohmann::json;

constexpr std::string_view kOptMagic = "SNETOPT1";
constexpr std::uint32_t kOptVersion = 1;

void reject_unknown(const json& section, std::string_view where, const std::set<std::string>& known) {
  if (!section.is_object()) throw ConfigError(fmt::format("config section '{}' must be an object", where));
  for (const auto& [key, value] : section.items()) {
    if (!known.contains(key)) throw ConfigError(fmt::format("unknown key '{}' in '{}'", key, where));
  }
}

template <typename V>
void read_if(const json& j, const char* key, V& out) {
  if (j.contains(key)) out = j.at(key).get<V>();
}

TrainingConfig parse_training(const json& j) {
  reject_unknown(j, "training",
                 {"qf", "subsampling", "lr", "total_updates", "batch_size", "seed", "train_dir", "val_dir",
                  "output_dir", "checkpoint_every", "keep_last", "log_every", "patch", "step_min", "step_max", "redraw_patches"});
  TrainingConfig t;
  read_if(j, "qf", t.qf);
  if (j.contains("subsampling")) t.subsampling = codec::parse_subsampling(j.at("subsampling").get<std::string>());
  if (j.contains("lr")) {
    const json& lr = j.at("lr");
    reject_unknown(lr, "training.lr", {"initial", "halve_every", "floor"});
    if (lr.contains("initial")) t.initial_lr = lr.at("initial").get<double>();
    read_if(lr, "halve_every", t.halve_every);
    read_if(lr, "floor", t.lr_floor);
  }
  if (j.contains("total_updates")) t.total_updates = j.at("total_updates").get<std::int64_t>();
  read_if(j, "batch_size", t.batch_size);
  read_if(j, "seed", t.seed);
  read_if(j, "train_dir", t.train_dir);
  read_if(j, "val_dir", t.val_dir);
  read_if(j, "output_dir", t.output_dir);
  read_if(j, "checkpoint_every", t.checkpoint_every);
  read_if(j, "keep_last", t.keep_last);
  read_if(j, "log_every", t.log_every);
  read_if(j, "patch", t.patch);
  read_if(j, "step_min", t.step_min);
  read_if(j, "step_max", t.step_max);
  read_if(j, "redraw_patches", t.redraw_patches);
  return t;
}

EvalSection parse_eval(const json& j) {
  reject_unknown(j, "eval", {"dataset", "qf", "heads"});
  EvalSection e;
  read_if(j, "dataset", e.dataset);
  read_if(j, "qf", e.qf);
  read_if(j, "heads", e.heads);
  return e;
}

data::SamplerConfig sampler_config(const TrainingConfig& t) {
  data::SamplerConfig s;
  s.patch = static_cast<std::size_t>(t.patch);
  s.step_min = static_cast<std::size_t>(t.step_min);
  s.step_max = static_cast<std::size_t>(t.step_max);
  return s;
}

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

struct Dataset {
  std::vector<ImageRGB> originals;
  std::vector<ImageRGB> degraded;
};

Dataset load_training_images(const TrainingConfig& t) {
  const auto listing = data::scan_dataset(t.train_dir);
  const codec::QualityFactor qf(t.qf);
  Dataset ds;
  for (const auto& path : listing.images) {
    ImageRGB img = read_image(path);
    if (img.height < static_cast<std::size_t>(t.patch) || img.width < static_cast<std::size_t>(t.patch)) continue;
    ds.degraded.push_back(codec::degrade(img, qf, t.subsampling));
    ds.originals.push_back(std::move(img));
  }
  if (ds.originals.empty()) {
    throw EmptyDatasetError(fmt::format("no image in {} is at least {}x{}", t.train_dir, t.patch, t.patch));
  }
  return ds;
}

data::PatchPool build_pool(const Dataset& ds, const TrainingConfig& t, std::int64_t epoch) {
  const data::SamplerConfig cfg = sampler_config(t);
  const auto e = static_cast<std::uint64_t>(epoch);
  std::mt19937_64 rng(derive_seed(t.seed, SeedStream::kSampler, t.redraw_patches ? e : 0));
  std::vector<data::PatchRef> refs;
  for (std::size_t i = 0; i < ds.originals.size(); ++i) {
    for (data::PatchCoord c : data::patch_grid(ds.originals[i].height, ds.originals[i].width, cfg, rng)) {
      refs.push_back({static_cast<std::uint32_t>(i), c});
    }
  }
  if (refs.size() < static_cast<std::size_t>(t.batch_size)) {
    throw EmptyDatasetError(fmt::format("training set yields {} patches, fewer than one batch of {}", refs.size(),
                                        t.batch_size));
  }
  return data::PatchPool(std::move(refs), derive_seed(t.seed, SeedStream::kShuffle, e));
}

struct Progress {
  std::int64_t update = 0;
  std::int64_t epoch = 0;
  std::size_t cursor = 0;
  double wall_seconds = 0.0;
  double best_val = -1.0;  // negative: none yet
};

void save_state(const std::filesystem::path& ckpt, const model::SNetModel& model, const optim::AdamState& adam,
                const Progress& p, const TrainingConfig& t) {
  model::save_checkpoint(ckpt, model);
  const json meta = {{"update", p.update},       {"epoch", p.epoch},   {"cursor", p.cursor},
                     {"adam_step", adam.step},   {"seed", t.seed},     {"batch_size", t.batch_size},
                     {"wall_seconds", p.wall_seconds}, {"best_val", p.best_val}};
  const auto named = model.named_parameters();
  std::vector<io::BlobView> blobs;
  for (std::size_t i = 0; i < named.size(); ++i) {
    blobs.push_back({"m." + named[i].name, adam.m[i]});
    blobs.push_back({"v." + named[i].name, adam.v[i]});
  }
  io::write_blob_file(optimizer_state_path(ckpt), kOptMagic, kOptVersion, meta.dump(), blobs);
}

Progress load_state(const std::filesystem::path& ckpt, model::SNetModel& model, optim::AdamState& adam,
                    const TrainingConfig& t) {
  const auto opt_path = optimizer_state_path(ckpt);
  io::BlobFile file = io::read_blob_file(opt_path, kOptMagic, kOptVersion);
  Progress p;
  try {
    const json meta = json::parse(file.header);
    p.update = meta.at("update").get<std::int64_t>();
    p.epoch = meta.at("epoch").get<std::int64_t>();
    p.cursor = meta.at("cursor").get<std::size_t>();
    p.wall_seconds = meta.at("wall_seconds").get<double>();
    p.best_val = meta.at("best_val").get<double>();
    adam.step = meta.at("adam_step").get<std::int64_t>();
    if (meta.at("seed").get<std::uint64_t>() != t.seed || meta.at("batch_size").get<int>() != t.batch_size) {
      throw ConfigError("resume config differs from the run that wrote " + opt_path.string() +
                        " (seed or batch_size changed)");
    }
  } catch (const json::exception& e) {
    throw CheckpointCorruptError("optimizer state header unreadable (" + std::string(e.what()) +
                                 "): " + opt_path.string());
  }
  const auto named = model.named_parameters();
  if (file.blobs.size() != 2 * named.size()) {
    throw CheckpointCorruptError("optimizer state does not match the model: " + opt_path.string());
  }
  for (std::size_t i = 0; i < named.size(); ++i) {
    io::Blob& m = file.blobs[2 * i];
    io::Blob& v = file.blobs[2 * i + 1];
    if (m.name != "m." + named[i].name || v.name != "v." + named[i].name ||
        m.values.size() != named[i].tensor->numel() || v.values.size() != named[i].tensor->numel()) {
      throw CheckpointCorruptError("optimizer state entry for '" + named[i].name + "' is missing or misshapen: " +
                                   opt_path.string());
    }
    adam.m[i] = std::move(m.values);
    adam.v[i] = std::move(v.values);
  }
  return p;
}

std::filesystem::path checkpoint_name(const std::filesystem::path& dir, std::int64_t update) {
  return dir / fmt::format("ckpt_{:08d}.snet", update);
}

// Keeps the newest `keep` ckpt_*.snet files (and their optimizer state).
void prune_checkpoints(const std::filesystem::path& dir, int keep) {
  std::vector<std::filesystem::path> found;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    const std::string name = entry.path().filename().string();
    if (name.starts_with("ckpt_") && name.ends_with(".snet")) found.push_back(entry.path());
  }
  std::sort(found.begin(), found.end());
  const std::size_t k = static_cast<std::size_t>(keep);
  for (std::size_t i = 0; i + k < found.size(); ++i) {
    std::filesystem::remove(found[i]);
    std::filesystem::remove(optimizer_state_path(found[i]));
  }
}

class CsvLog {
 public:
  CsvLog(const std::filesystem::path& path, const std::vector<int>& heads, std::int64_t resume_update) {
    std::vector<std::string> kept;
    if (resume_update > 0 && std::filesystem::exists(path)) {
      std::ifstream in(path);
      std::string line;
      std::getline(in, line);  // header
      while (std::getline(in, line)) {
        if (!line.empty() && std::stoll(line.substr(0, line.find(','))) <= resume_update) kept.push_back(line);
      }
    }
    out_.open(path, std::ios::trunc);
    if (!out_) throw IoError("cannot write training log " + path.string());
    out_ << "update,lr,loss";
    for (int h : heads) out_ << ",head_" << h;
    out_ << ",wall_s\n";
    for (const auto& l : kept) out_ << l << '\n';
    out_.flush();
  }

  void write(const TrainLogRecord& r) {
    out_ << fmt::format("{},{:.6g},{:.8g}", r.update, r.lr, r.loss);
    for (double h : r.head_losses) out_ << fmt::format(",{:.8g}", h);
    out_ << fmt::format(",{:.3f}\n", r.wall_seconds);
    out_.flush();
    if (!out_) throw IoError("training log write failed");
  }

 private:
  std::ofstream out_;
};

}  // namespace

void RunConfig::validate() const {
  architecture.validate();
  const TrainingConfig& t = training;
  (void)codec::QualityFactor(t.qf);
  (void)codec::QualityFactor(eval.qf);
  if (t.initial_lr && !(*t.initial_lr > 0.0)) throw ConfigError("training.lr.initial must be positive");
  if (!(t.lr_floor > 0.0)) throw ConfigError("training.lr.floor must be positive");
  if (t.halve_every < 1) throw ConfigError("training.lr.halve_every must be >= 1");
  if (t.total_updates && *t.total_updates < 0) throw ConfigError("training.total_updates must be >= 0");
  if (t.batch_size < 1) throw ConfigError("training.batch_size must be >= 1");
  if (t.checkpoint_every < 1) throw ConfigError("training.checkpoint_every must be >= 1");
  if (t.keep_last < 1) throw ConfigError("training.keep_last must be >= 1");
  if (t.log_every < 1) throw ConfigError("training.log_every must be >= 1");
  if (t.patch < 1 || t.step_min < 1 || t.step_min > t.step_max) {
    throw ConfigError("training.patch and step range must satisfy patch >= 1, 1 <= step_min <= step_max");
  }
  for (int h : eval.heads) {
    if (h < 0 || h > architecture.units) {
      throw ConfigError(fmt::format("eval head {} out of range [0, {}]", h, architecture.units));
    }
  }
}

RunConfig run_config_from_json(std::string_view text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  reject_unknown(j, "top level", {"architecture", "training", "eval"});
  RunConfig c;
  try {
    if (j.contains("architecture")) c.architecture = model::config_from_json(j.at("architecture").dump());
    if (j.contains("training")) c.training = parse_training(j.at("training"));
    if (j.contains("eval")) c.eval = parse_eval(j.at("eval"));
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config value has the wrong type: ") + e.what());
  }
  c.validate();
  return c;
}

std::string run_config_to_json(const RunConfig& c) {
  const TrainingConfig& t = c.training;
  json lr = {{"halve_every", t.halve_every}, {"floor", t.lr_floor}};
  if (t.initial_lr) lr["initial"] = *t.initial_lr;
  json training = {{"qf", t.qf},
                   {"subsampling", std::string(codec::to_string(t.subsampling))},
                   {"lr", lr},
                   {"batch_size", t.batch_size},
                   {"seed", t.seed},
                   {"train_dir", t.train_dir},
                   {"val_dir", t.val_dir},
                   {"output_dir", t.output_dir},
                   {"checkpoint_every", t.checkpoint_every},
                   {"keep_last", t.keep_last},
                   {"log_every", t.log_every},
                   {"patch", t.patch},
                   {"step_min", t.step_min},
                   {"step_max", t.step_max},
                   {"redraw_patches", t.redraw_patches}};
  if (t.total_updates) training["total_updates"] = *t.total_updates;
  const json out = {{"architecture", json::parse(model::config_to_json(c.architecture))},
                    {"training", training},
                    {"eval", {{"dataset", c.eval.dataset}, {"qf", c.eval.qf}, {"heads", c.eval.heads}}}};
  return out.dump(2);
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return run_config_from_json(ss.str());
}

optim::LrSchedule schedule_for(const TrainingConfig& t, Mode mode) {
  const bool ft = mode == Mode::kFinetune;
  optim::LrSchedule s;
  s.initial_lr = t.initial_lr.value_or(ft ? 1e-5 : 1e-4);
  s.total_updates = t.total_updates.value_or(ft ? 40000 : 200000);
  s.halve_every = t.halve_every;
  s.floor = t.lr_floor;
  return s;
}

std::uint64_t derive_seed(std::uint64_t root, SeedStream stream, std::uint64_t index) {
  return splitmix64(root ^ splitmix64(static_cast<std::uint64_t>(stream) * 0x100000001b3ULL + index));
}

std::filesystem::path optimizer_state_path(const std::filesystem::path& checkpoint) {
  std::filesystem::path p = checkpoint;
  p += ".opt";
  return p;
}

TrainResult run(const RunConfig& config, const TrainOptions& options) {
  config.validate();
  const TrainingConfig& t = config.training;
  if (options.resume_from && options.init_from) throw ConfigError("resume and fine-tune source are exclusive");
  if (options.mode == Mode::kFinetune && !options.init_from && !options.resume_from) {
    throw ConfigError("fine-tuning needs a source checkpoint");
  }
  const optim::LrSchedule schedule = schedule_for(t, options.mode);
  const std::int64_t end = std::min(schedule.total_updates, options.stop_after.value_or(schedule.total_updates));

  model::SNetModel model(config.architecture);
  if (options.resume_from) {
    model = model::load_checkpoint(*options.resume_from, config.architecture);
  } else if (options.init_from) {
    model = model::load_checkpoint(*options.init_from, config.architecture);
  } else {
    model = model::init_params(config.architecture, derive_seed(t.seed, SeedStream::kInit));
  }
  model.zero_grad();
  const std::vector<Tensor*> params = model.parameters();
  optim::AdamState adam = optim::AdamState::for_params(params);
  Progress progress;
  if (options.resume_from) progress = load_state(*options.resume_from, model, adam, t);

  const Dataset ds = load_training_images(t);
  std::vector<ImageRGB> val_images;
  if (!t.val_dir.empty()) {
    for (const auto& p : data::scan_dataset(t.val_dir).images) val_images.push_back(read_image(p));
  }

  const std::filesystem::path out_dir = t.output_dir;
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw IoError("cannot create output directory " + out_dir.string() + ": " + ec.message());

  const std::vector<int> heads = config.architecture.loss_heads();
  CsvLog csv(out_dir / "train_log.csv", heads, progress.update);
  data::PatchPool pool = build_pool(ds, t, progress.epoch);
  pool.seek(progress.cursor);

  TrainResult result{model::SNetModel(config.architecture), 0, {}, {}};
  const auto t0 = std::chrono::steady_clock::now();
  const double wall_base = progress.wall_seconds;
  const auto wall = [&] {
    return wall_base + std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  };

  const auto checkpoint = [&] {
    progress.cursor = pool.cursor();
    progress.wall_seconds = wall();
    if (!val_images.empty()) {
      eval::EvalOptions eo;
      eo.qf = t.qf;
      eo.subsampling = t.subsampling;
      eo.heads = {config.architecture.units};
      const double psnr = eval::evaluate(model, val_images, eo).heads.front().mean_psnr;
      if (psnr > progress.best_val) {
        progress.best_val = psnr;
        model::save_checkpoint(out_dir / "best.snet", model);
      }
    }
    const auto path = checkpoint_name(out_dir, progress.update);
    save_state(path, model, adam, progress, t);
    prune_checkpoints(out_dir, t.keep_last);
    return path;
  };

  while (progress.update < end) {
    auto refs = pool.next(static_cast<std::size_t>(t.batch_size));
    if (!refs) {
      ++progress.epoch;
      pool = build_pool(ds, t, progress.epoch);
      continue;
    }
    const data::Batch batch = data::make_batch(*refs, ds.originals, ds.degraded, static_cast<std::size_t>(t.patch));
    const double lr = optim::lr_at(schedule, progress.update);

    model.zero_grad();
    Tape tape;
    const VarId x = tape.constant(batch.input);
    const VarId y = tape.constant(batch.target);
    const auto outputs = model::forward_heads(tape, model, x, heads);
    const VarId loss = model::greedy_loss(tape, std::span<const model::HeadVar>(outputs), y,
                                          config.architecture.loss_mode);
    tape.backward(loss);
    optim::adam_step(params, adam, static_cast<float>(lr));
    ++progress.update;

    if (progress.update % t.log_every == 0 || progress.update == end) {
      TrainLogRecord rec{progress.update, lr, static_cast<double>(tape.scalar(loss)), {}, wall()};
      for (const auto& h : outputs) rec.head_losses.push_back(ops::mse(tape.value(h.image), batch.target));
      csv.write(rec);
      if (options.on_log) options.on_log(rec);
      result.log.push_back(std::move(rec));
    }
    if (progress.update % t.checkpoint_every == 0 && progress.update != end) checkpoint();
  }

  result.final_checkpoint = checkpoint();
  result.updates = progress.update;
  result.model = std::move(model);
  return result;
}

}  // namespace snet::train
