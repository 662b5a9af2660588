#pragma once

// S-Net: a convolutional encoder, a chain of residual units, and one shared
// decoder that can be attached after any unit. Head k decodes the features
// after unit k; head 0 (optional) decodes the encoder output directly.

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "snet/autograd.hpp"
#include "snet/tensor.hpp"

namespace snet::model {

enum class UnitKind { kClassic, kAdvanced };
enum class LossMode { kGreedy, kColumnar };

UnitKind parse_unit_kind(std::string_view text);
LossMode parse_loss_mode(std::string_view text);
std::string_view to_string(UnitKind kind);
std::string_view to_string(LossMode mode);

inline constexpr std::size_t kUnitKernel = 3;

struct SNetConfig {
  int channels = 256;
  int units = 8;
  UnitKind unit_kind = UnitKind::kAdvanced;
  std::vector<int> encoder_kernels{5, 3};
  std::vector<int> decoder_kernels{3, 5};
  int image_channels = 3;
  LossMode loss_mode = LossMode::kGreedy;
  bool include_metric0 = false;

  // Throws ConfigError: units/channels < 1, even or non-positive kernels,
  // decoder kernels not the reverse of the encoder kernels.
  void validate() const;

  // Equal in everything that determines the parameter set.
  bool same_architecture(const SNetConfig& other) const;

  // Heads that receive a loss term during training, in increasing order.
  std::vector<int> loss_heads() const;
  // Every head forward_all produces, in increasing order.
  std::vector<int> all_heads() const;
};

// JSON object with the SNetConfig fields; unknown keys are rejected.
std::string config_to_json(const SNetConfig& config);
SNetConfig config_from_json(std::string_view json_text);

template <typename T>
struct BasicUnitParams {
  std::vector<BasicConvParams<T>> convs;  // 1 (classic) or 2 (advanced)
};

template <typename T>
struct NamedParam {
  std::string name;
  BasicTensor<T>* tensor;
};

template <typename T>
struct NamedConstParam {
  std::string name;
  const BasicTensor<T>* tensor;
};

template <typename T>
struct BasicSNetModel {
  SNetConfig config;
  std::vector<BasicConvParams<T>> encoder;
  std::vector<BasicUnitParams<T>> units;
  std::vector<BasicConvParams<T>> decoder;

  // Zero-initialized parameters for a validated config.
  explicit BasicSNetModel(SNetConfig cfg);
  BasicSNetModel() : BasicSNetModel(SNetConfig{}) {}

  // Canonical order: encoder.<i>.{w,b}, unit.<i>.conv.<j>.{w,b}, decoder.<i>.{w,b}.
  std::vector<NamedParam<T>> named_parameters();
  std::vector<NamedConstParam<T>> named_parameters() const;
  std::vector<BasicTensor<T>*> parameters();
  std::size_t parameter_count() const;
  void zero_grad();

  template <typename U>
  BasicSNetModel<U> cast() const;
};

using SNetModel = BasicSNetModel<float>;
using UnitParams = BasicUnitParams<float>;

// He-normal weights (std = sqrt(2 / (in * k * k))), zero biases.
SNetModel init_params(const SNetConfig& config, std::uint64_t seed);

// A model with the first `units` units and the same encoder/decoder.
SNetModel truncated(const SNetModel& model, int units);

// ----- recorded forward pass -----

struct HeadVar {
  int head;
  VarId image;
};

template <typename T>
VarId encode(BasicTape<T>& tape, BasicSNetModel<T>& model, VarId x);
template <typename T>
VarId unit_forward(BasicTape<T>& tape, BasicUnitParams<T>& unit, UnitKind kind, VarId f);
template <typename T>
VarId decode(BasicTape<T>& tape, BasicSNetModel<T>& model, VarId f);

// Decodes the requested heads (sorted, each in [0, units]); units beyond the
// deepest requested head are not executed.
template <typename T>
std::vector<HeadVar> forward_heads(BasicTape<T>& tape, BasicSNetModel<T>& model, VarId x,
                                   std::span<const int> heads);
template <typename T>
std::vector<HeadVar> forward_all(BasicTape<T>& tape, BasicSNetModel<T>& model, VarId x);

// Greedy: arithmetic mean of per-head MSE. Columnar: MSE of the last output.
template <typename T>
VarId greedy_loss(BasicTape<T>& tape, std::span<const HeadVar> outputs, VarId target, LossMode mode);

// ----- inference without a tape -----

template <typename T>
BasicTensor<T> encode(const BasicSNetModel<T>& model, const BasicTensor<T>& x);
template <typename T>
BasicTensor<T> unit_forward(const BasicUnitParams<T>& unit, UnitKind kind, const BasicTensor<T>& f);
template <typename T>
BasicTensor<T> decode(const BasicSNetModel<T>& model, const BasicTensor<T>& f);

struct HeadImage {
  int head;
  Tensor image;
};

std::vector<HeadImage> infer_heads(const SNetModel& model, const Tensor& x, std::span<const int> heads);
Tensor infer_head(const SNetModel& model, const Tensor& x, int head);

// ----- parameter accounting -----

struct ParamCounts {
  std::int64_t encoder = 0;
  std::int64_t decoder = 0;
  std::int64_t per_unit = 0;
  std::vector<std::int64_t> cumulative;  // cumulative[k-1]: encoder + decoder + k units
  std::int64_t total = 0;
};

ParamCounts count_params(const SNetConfig& config);
// Parameter count in units of 2^20.
double to_mega(std::int64_t count);

// ----- checkpoints -----

inline constexpr std::uint32_t kCheckpointVersion = 1;

// Layout (little-endian): "SNETCKPT", u32 version, u32 length + config JSON,
// u32 blob count, then per blob: u32 name length, name, u64 float count,
// float32 values. Blobs follow the canonical parameter order.
void save_checkpoint(const std::filesystem::path& path, const SNetModel& model);
// Uses the embedded config.
SNetModel load_checkpoint(const std::filesystem::path& path);
// Throws CheckpointConfigMismatch unless the file's architecture equals `expected`.
SNetModel load_checkpoint(const std::filesystem::path& path, const SNetConfig& expected);

}  // namespace snet::model
