#include "promptfocus/adamw.hpp"

#include <cmath>

#include "promptfocus/errors.hpp"

namespace pf {

AdamWState AdamWState::for_params(std::span<const nn::NamedTensor> params) {
  AdamWState s;
  for (const auto& p : params) {
    s.m.emplace_back(p.tensor.numel(), 0.0);
    s.v.emplace_back(p.tensor.numel(), 0.0);
  }
  return s;
}

void adamw_step(std::span<nn::NamedTensor> params, AdamWState& state, const AdamWConfig& cfg) {
  if (state.m.size() != params.size() || state.v.size() != params.size()) {
    throw StateError("optimizer state holds " + std::to_string(state.m.size()) +
                     " tensors, got " + std::to_string(params.size()) + " parameters");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (state.m[i].size() != params[i].tensor.numel() || state.v[i].size() != params[i].tensor.numel()) {
      throw StateError("optimizer state shape mismatch for '" + params[i].name + "'");
    }
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double bc1 = 1.0 - std::pow(cfg.beta1, t);
  const double bc2 = 1.0 - std::pow(cfg.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& tensor = params[i].tensor;
    const auto grad = tensor.grad();
    auto p = tensor.mutable_data();
    auto& m = state.m[i];
    auto& v = state.v[i];
    for (std::size_t j = 0; j < p.size(); ++j) {
      const double g = grad.empty() ? 0.0 : grad[j];
      p[j] -= cfg.lr * cfg.weight_decay * p[j];
      m[j] = cfg.beta1 * m[j] + (1.0 - cfg.beta1) * g;
      v[j] = cfg.beta2 * v[j] + (1.0 - cfg.beta2) * g * g;
      const double mhat = m[j] / bc1;
      const double vhat = v[j] / bc2;
      p[j] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
    }
  }
}

}  // namespace pf
