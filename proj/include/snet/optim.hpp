#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "snet/tensor.hpp"

namespace snet::optim {

struct AdamHyper {
  float beta1 = 0.9f;
  float beta2 = 0.999f;
  float eps = 1e-8f;
};

// First/second moment buffers for each parameter, in registration order.
struct AdamState {
  AdamHyper hyper{};
  std::int64_t step = 0;
  std::vector<std::vector<float>> m;
  std::vector<std::vector<float>> v;

  // Zero moments shaped like params; resets the step counter.
  static AdamState for_params(std::span<Tensor* const> params, AdamHyper hyper = {});
};

// Applies one bias-corrected Adam update to every parameter using its grad
// buffer. Throws ConfigError when a parameter has no gradient or the state
// does not mirror the parameter shapes, and std::invalid_argument for lr <= 0.
void adam_step(std::span<Tensor* const> params, AdamState& state, float lr);

// lr(t) = initial * 2^-floor(t / halve_every), pinned at floor once it would
// drop below it.
struct LrSchedule {
  double initial_lr = 1e-4;
  std::int64_t halve_every = 10000;
  double floor = 1e-6;
  std::int64_t total_updates = 200000;
};

double lr_at(const LrSchedule& schedule, std::int64_t t);

}  // namespace snet::optim
