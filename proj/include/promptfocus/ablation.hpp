#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "promptfocus/config.hpp"

namespace pf {

enum class AblationAxis { TokenLength, TauF, TauC, MaxClasses, Component };

std::string to_string(AblationAxis a);
AblationAxis ablation_axis_from_string(const std::string& s);

/// Sets the knob `axis` to `value` on a copy of cfg. Components are
/// full, self_only, cross_only, no_prompts and frozen.
TrainConfig apply_ablation_value(TrainConfig cfg, AblationAxis axis, const std::string& value);

struct AblationRow {
  std::string value;
  std::vector<std::uint64_t> seeds;
  std::vector<double> app_miou;      // one per seed, final application-set mIoU
  std::vector<double> holdout_miou;
  double app_mean = 0.0;
  double app_std = 0.0;              // population std over seeds
  double holdout_mean = 0.0;
  double holdout_std = 0.0;
};

/// Trains every (value, seed) pair from `base`. Runs are independent and
/// are spread over threads; results do not depend on the thread count.
std::vector<AblationRow> run_ablation(const TrainConfig& base, AblationAxis axis,
                                      const std::vector<std::string>& values,
                                      const std::vector<std::uint64_t>& seeds);

std::string ablation_csv(const std::vector<AblationRow>& rows);

}  // namespace pf
