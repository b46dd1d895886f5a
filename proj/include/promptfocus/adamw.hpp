#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "promptfocus/nn.hpp"

namespace pf {

struct AdamWConfig {
  double lr = 1e-4;
  double weight_decay = 0.05;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// First/second moment buffers, one pair per parameter tensor, plus the step count.
struct AdamWState {
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;
  std::size_t step = 0;

  static AdamWState for_params(std::span<const nn::NamedTensor> params);
};

/// One AdamW update. Weight decay is decoupled: p -= lr·wd·p happens before
/// the bias-corrected Adam step. A parameter without a gradient is treated as
/// having a zero gradient.
void adamw_step(std::span<nn::NamedTensor> params, AdamWState& state, const AdamWConfig& cfg);

}  // namespace pf
