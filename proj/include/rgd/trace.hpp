#pragma once

#include <cstddef>
#include <vector>

#include "rgd/tensor.hpp"

namespace rgd {

/// One row of an attack trajectory. Row 0 holds the initialized perturbation
/// before any update.
struct StepTrace {
  std::size_t step = 0;
  Tensor delta_hidden;   // unclipped accumulator
  Tensor delta_clipped;  // what is actually added to the input
  double loss = 0.0;     // loss at x + delta_clipped
  double grad_inf_norm = 0.0;
  double boundary_ratio = 0.0;
};

struct AttackResult {
  Tensor adversarial;    // x + final clipped perturbation
  Tensor delta_clipped;  // final clipped perturbation
  std::vector<StepTrace> trace;
  bool success = false;
};

}  // namespace rgd
