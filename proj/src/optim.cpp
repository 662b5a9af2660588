#include "snet/optim.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "snet/kernels.hpp"

namespace snet::optim {

AdamState AdamState::for_params(std::span<Tensor* const> params, AdamHyper hyper) {
  AdamState state;
  state.hyper = hyper;
  state.m.reserve(params.size());
  state.v.reserve(params.size());
  for (const Tensor* p : params) {
    state.m.emplace_back(p->numel(), 0.0f);
    state.v.emplace_back(p->numel(), 0.0f);
  }
  return state;
}

void adam_step(std::span<Tensor* const> params, AdamState& state, float lr) {
  if (!(lr > 0.0f)) throw std::invalid_argument("learning rate must be positive");
  if (state.m.size() != params.size() || state.v.size() != params.size()) {
    throw ConfigError("optimizer state tracks " + std::to_string(state.m.size()) +
                      " parameters, got " + std::to_string(params.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!params[i]->has_grad()) {
      throw ConfigError("parameter " + std::to_string(i) + " has no gradient");
    }
    if (state.m[i].size() != params[i]->numel() || state.v[i].size() != params[i]->numel()) {
      throw ConfigError("optimizer moments do not match parameter " + std::to_string(i));
    }
  }

  ++state.step;
  const double t = static_cast<double>(state.step);
  kernels::AdamCoeffs coeffs;
  coeffs.lr = lr;
  coeffs.beta1 = state.hyper.beta1;
  coeffs.beta2 = state.hyper.beta2;
  coeffs.eps = state.hyper.eps;
  coeffs.bias_correction1 = static_cast<float>(1.0 - std::pow(static_cast<double>(state.hyper.beta1), t));
  coeffs.bias_correction2 = static_cast<float>(1.0 - std::pow(static_cast<double>(state.hyper.beta2), t));

  const auto& k = kernels::active();
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor& p = *params[i];
    k.adam_update(p.raw(), p.grad().data(), state.m[i].data(), state.v[i].data(), p.numel(), coeffs);
  }
}

double lr_at(const LrSchedule& schedule, std::int64_t t) {
  if (t < 0) t = 0;
  if (schedule.halve_every <= 0) return std::max(schedule.initial_lr, schedule.floor);
  const std::int64_t halvings = t / schedule.halve_every;
  const double lr = halvings >= 1024 ? 0.0 : std::ldexp(schedule.initial_lr, -static_cast<int>(halvings));
  return lr < schedule.floor ? schedule.floor : lr;
}

}  // namespace snet::optim
