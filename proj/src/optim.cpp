#include "srg/optim.hpp"

#include <cmath>

namespace srg {

void adam_step(std::span<Tensor* const> params, AdamState& state, double lr, const AdamConfig& config) {
  if (state.m.empty()) {
    for (const Tensor* p : params) {
      state.m.emplace_back(p->numel(), 0.0);
      state.v.emplace_back(p->numel(), 0.0);
    }
  }
  if (state.m.size() != params.size()) {
    throw DimensionError("adam_step", "parameter count", state.m.size(), params.size());
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(config.beta1, t);
  const double c2 = 1.0 - std::pow(config.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor& p = *params[i];
    auto& m = state.m[i];
    auto& v = state.v[i];
    if (m.size() != p.numel()) throw DimensionError("adam_step", "parameter " + std::to_string(i), m.size(), p.numel());
    if (p.has_grad() && p.grad.size() != p.numel()) {
      throw DimensionError("adam_step", "gradient " + std::to_string(i), p.numel(), p.grad.size());
    }
    for (std::size_t k = 0; k < p.numel(); ++k) {
      const double g = p.has_grad() ? p.grad[k] : 0.0;
      m[k] = config.beta1 * m[k] + (1.0 - config.beta1) * g;
      v[k] = config.beta2 * v[k] + (1.0 - config.beta2) * g * g;
      const double mhat = m[k] / c1;
      const double vhat = v[k] / c2;
      p.data[k] = static_cast<float>(p.data[k] - lr * mhat / (std::sqrt(vhat) + config.eps));
    }
  }
}

double LrSchedule::at(std::size_t step) const {
  const std::size_t every = decay_every == 0 ? 1 : decay_every;
  return base_lr * std::pow(decay_base, static_cast<double>(step / every));
}

void zero_grads(std::span<Tensor* const> params) {
  for (Tensor* p : params) p->zero_grad();
}

double clip_grad_norm(std::span<Tensor* const> params, double max_norm) {
  double total = 0.0;
  for (const Tensor* p : params)
    for (float g : p->grad) total += static_cast<double>(g) * g;
  const double norm = std::sqrt(total);
  if (max_norm > 0 && norm > max_norm) {
    const auto factor = static_cast<float>(max_norm / norm);
    for (Tensor* p : params)
      for (float& g : p->grad) g *= factor;
  }
  return norm;
}

}  // namespace srg
