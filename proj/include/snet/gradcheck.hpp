#pragma once

#include <cstdint>
#include <string>

#include "snet/model.hpp"

namespace snet {

enum class Precision { kFloat32, kFloat64 };

struct GradCheckOptions {
  model::SNetConfig config = micro_config();
  std::size_t size = 8;
  std::size_t batch = 1;
  Precision precision = Precision::kFloat32;
  double eps = 0.0;        // 0: 1e-1 (float32) or 1e-3 (float64)
  double tolerance = 0.0;  // 0: 1e-2 (float32) or 1e-4 (float64)
  std::uint64_t seed = 7;

  static model::SNetConfig micro_config();
};

struct GradCheckResult {
  std::size_t checked = 0;
  double max_rel_error = 0.0;
  std::string worst_param;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  double tolerance = 0.0;
  double floor = 0.0;
  bool passed = false;
};

// |a - n| / max(|a|, |n|, floor). gradcheck uses
// floor = max(kRelErrorFloor, kRelativeFloor * max |n|) so that elements many
// orders of magnitude below the gradient scale are compared on that scale.
inline constexpr double kRelErrorFloor = 1e-12;
inline constexpr double kRelativeFloor = 1e-4;
double relative_error(double analytic, double numeric, double floor = kRelErrorFloor);

// Compares the tape gradient of the training loss with central finite
// differences for every parameter element of a randomly initialized model.
// ReLU activation patterns are frozen at the unperturbed point while probing,
// so every probe stays on the linear piece where the analytic gradient is
// defined. On that piece the loss is quadratic in any single parameter and
// central differences are exact up to rounding, which permits large steps.
GradCheckResult gradcheck(const GradCheckOptions& options);

}  // namespace snet
