#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "srg/tensor.hpp"

namespace srg {

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// First/second moment buffers, one pair per parameter, in parameter order.
struct AdamState {
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;
  std::size_t step = 0;
};

/// One bias-corrected Adam update using each parameter's `grad`. Parameters
/// without a gradient are treated as having a zero gradient. Gradients are
/// left untouched; callers zero them between steps.
void adam_step(std::span<Tensor* const> params, AdamState& state, double lr, const AdamConfig& config = {});

/// Staircase exponential decay: base_lr * decay_base^floor(step / decay_every).
struct LrSchedule {
  double base_lr = 1e-4;
  double decay_base = 0.96;
  std::size_t decay_every = 10;

  double at(std::size_t step) const;
};

void zero_grads(std::span<Tensor* const> params);

/// Global L2 norm of all gradients; clips them in place to `max_norm` when positive.
double clip_grad_norm(std::span<Tensor* const> params, double max_norm);

}  // namespace srg
