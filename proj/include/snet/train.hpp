#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "snet/codec.hpp"
#include "snet/model.hpp"
#include "snet/optim.hpp"

namespace snet::train {

struct TrainingConfig {
  int qf = 40;
  codec::Subsampling subsampling = codec::Subsampling::k420;
  // Unset values take the mode default: 1e-4 / 2e5 for training,
  // 1e-5 / 4e4 for fine-tuning.
  std::optional<double> initial_lr;
  std::optional<std::int64_t> total_updates;
  std::int64_t halve_every = 10000;
  double lr_floor = 1e-6;
  int batch_size = 16;
  std::uint64_t seed = 1;
  std::string train_dir;
  std::string val_dir;  // optional; selects the best checkpoint
  std::string output_dir = "runs/snet";
  std::int64_t checkpoint_every = 1000;
  int keep_last = 3;
  std::int64_t log_every = 100;
  int patch = 48;
  int step_min = 37;
  int step_max = 62;
  bool redraw_patches = true;  // false: every epoch reuses the epoch-0 patch grid
};

struct EvalSection {
  std::string dataset;
  int qf = 40;
  std::vector<int> heads;  // empty: all heads
};

struct RunConfig {
  model::SNetConfig architecture;
  TrainingConfig training;
  EvalSection eval;

  // Re-validates the architecture and every training/eval range.
  void validate() const;
};

// Sections "architecture", "training", "eval"; all optional, unknown keys
// rejected. Throws ConfigError.
RunConfig run_config_from_json(std::string_view text);
std::string run_config_to_json(const RunConfig& config);
RunConfig load_run_config(const std::filesystem::path& path);

enum class Mode { kTrain, kFinetune };

optim::LrSchedule schedule_for(const TrainingConfig& training, Mode mode);

// Independent 64-bit seed for (root, stream, index) via splitmix64.
enum class SeedStream : std::uint64_t { kInit = 1, kSampler = 2, kShuffle = 3 };
std::uint64_t derive_seed(std::uint64_t root, SeedStream stream, std::uint64_t index = 0);

struct TrainLogRecord {
  std::int64_t update = 0;  // number of completed updates
  double lr = 0.0;
  double loss = 0.0;
  std::vector<double> head_losses;  // per loss head
  double wall_seconds = 0.0;
};

struct TrainOptions {
  Mode mode = Mode::kTrain;
  std::optional<std::filesystem::path> resume_from;  // checkpoint with a sibling .opt file
  std::optional<std::filesystem::path> init_from;    // fine-tuning source
  std::optional<std::int64_t> stop_after;            // end early (still checkpoints)
  std::function<void(const TrainLogRecord&)> on_log;
};

struct TrainResult {
  model::SNetModel model;
  std::int64_t updates = 0;
  std::vector<TrainLogRecord> log;
  std::filesystem::path final_checkpoint;
};

// Sample -> degrade -> forward -> loss -> backward -> Adam, with periodic
// checkpoints (keep_last plus best validation) and a CSV log in output_dir.
TrainResult run(const RunConfig& config, const TrainOptions& options = {});

// Path of the optimizer state written next to a checkpoint.
std::filesystem::path optimizer_state_path(const std::filesystem::path& checkpoint);

}  // namespace snet::train
