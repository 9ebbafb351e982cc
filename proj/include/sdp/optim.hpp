#pragma once

#include <span>
#include <vector>

#include "sdp/autodiff.hpp"

namespace sdp::ad {

struct AdamOptions {
  double learning_rate = 1e-3;
  double beta1 = 0.0;
  double beta2 = 0.95;
  // Guards the update when the second moment is zero.
  double epsilon = 1e-12;
  double l2 = 3e-9;
};

// First and second moment buffers, one pair per parameter, plus the number
// of completed steps (for bias correction).
struct AdamState {
  std::vector<Tensor> first_moment;
  std::vector<Tensor> second_moment;
  long step = 0;

  static AdamState for_params(std::span<const Tensor> params);
};

// One Adam update with bias correction. The L2 term is folded into the
// gradient before the moments are updated. Throws if any parameter lacks a
// gradient or the state does not match the parameter shapes.
void adam_step(std::span<Tensor> params, AdamState& state, const AdamOptions& options);

}  // namespace sdp::ad
