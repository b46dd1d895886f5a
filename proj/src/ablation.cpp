#include "promptfocus/ablation.hpp"

#include <cmath>
#include <cstdio>
#include <exception>

#include "promptfocus/errors.hpp"
#include "promptfocus/train.hpp"

namespace pf {

namespace {

double parse_number(const std::string& s) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != s.size()) throw ConfigError("ablation value '" + s + "' is not a number");
  return v;
}

std::size_t parse_count(const std::string& s) {
  const double v = parse_number(s);
  if (v < 1.0 || v != std::floor(v)) throw ConfigError("ablation value '" + s + "' is not a positive integer");
  return static_cast<std::size_t>(v);
}

void mean_std(const std::vector<double>& xs, double& mean, double& sd) {
  mean = 0.0;
  for (double x : xs) mean += x;
  mean /= static_cast<double>(xs.size());
  double var = 0.0;
  for (double x : xs) var += (x - mean) * (x - mean);
  sd = std::sqrt(var / static_cast<double>(xs.size()));
}

}  // namespace

std::string to_string(AblationAxis a) {
  switch (a) {
    case AblationAxis::TokenLength: return "token_length";
    case AblationAxis::TauF: return "tau_f";
    case AblationAxis::TauC: return "tau_c";
    case AblationAxis::MaxClasses: return "max_classes";
    case AblationAxis::Component: return "component";
  }
  return "?";
}

AblationAxis ablation_axis_from_string(const std::string& s) {
  for (auto a : {AblationAxis::TokenLength, AblationAxis::TauF, AblationAxis::TauC,
                 AblationAxis::MaxClasses, AblationAxis::Component}) {
    if (s == to_string(a)) return a;
  }
  throw ConfigError("unknown ablation axis '" + s +
                    "' (token_length, tau_f, tau_c, max_classes, component)");
}

TrainConfig apply_ablation_value(TrainConfig cfg, AblationAxis axis, const std::string& value) {
  switch (axis) {
    case AblationAxis::TokenLength:
      cfg.pff.tokens = parse_count(value);
      break;
    case AblationAxis::TauF:
      // The schedule starts at the swept value; the end moves up if needed.
      cfg.dcp.tau_f_min = parse_number(value);
      cfg.dcp.tau_f_max = std::max(cfg.dcp.tau_f_max, cfg.dcp.tau_f_min);
      break;
    case AblationAxis::TauC:
      cfg.dcp.tau_c_min = parse_number(value);
      cfg.dcp.tau_c_max = std::max(cfg.dcp.tau_c_max, cfg.dcp.tau_c_min);
      break;
    case AblationAxis::MaxClasses:
      cfg.dcp.max_classes = parse_count(value);
      break;
    case AblationAxis::Component:
      cfg.pff_enabled = true;
      cfg.prompts = "dcp";
      cfg.pff_options.stages = pff::Stages::Full;
      if (value == "full") {
      } else if (value == "self_only") {
        cfg.pff_options.stages = pff::Stages::SelfOnly;
      } else if (value == "cross_only") {
        cfg.pff_options.stages = pff::Stages::CrossOnly;
      } else if (value == "no_prompts") {
        cfg.prompts = "dummy";
      } else if (value == "frozen") {
        cfg.pff_enabled = false;
      } else {
        throw ConfigError("unknown component '" + value +
                          "' (full, self_only, cross_only, no_prompts, frozen)");
      }
      break;
  }
  cfg.validate();
  return cfg;
}

std::vector<AblationRow> run_ablation(const TrainConfig& base, AblationAxis axis,
                                      const std::vector<std::string>& values,
                                      const std::vector<std::uint64_t>& seeds) {
  if (values.empty()) throw ConfigError("ablation needs at least one value");
  if (seeds.empty()) throw ConfigError("ablation needs at least one seed");

  std::vector<TrainConfig> configs;
  for (const auto& v : values) {
    const TrainConfig swept = apply_ablation_value(base, axis, v);
    for (auto seed : seeds) {
      configs.push_back(swept);
      configs.back().seed = seed;
    }
  }

  const long runs = static_cast<long>(configs.size());
  std::vector<double> app(configs.size()), holdout(configs.size());
  std::vector<std::exception_ptr> errors(configs.size());
#pragma omp parallel for schedule(dynamic, 1)
  for (long i = 0; i < runs; ++i) {
    try {
      const TrainResult r = train(configs[i]);
      app[i] = r.final_app.miou;
      holdout[i] = r.final_holdout.miou;
    } catch (...) {
      errors[i] = std::current_exception();
    }
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }

  std::vector<AblationRow> rows;
  for (std::size_t v = 0; v < values.size(); ++v) {
    AblationRow row;
    row.value = values[v];
    row.seeds = seeds;
    for (std::size_t s = 0; s < seeds.size(); ++s) {
      row.app_miou.push_back(app[v * seeds.size() + s]);
      row.holdout_miou.push_back(holdout[v * seeds.size() + s]);
    }
    mean_std(row.app_miou, row.app_mean, row.app_std);
    mean_std(row.holdout_miou, row.holdout_mean, row.holdout_std);
    rows.push_back(std::move(row));
  }
  return rows;
}

std::string ablation_csv(const std::vector<AblationRow>& rows) {
  std::string out = "value,app_miou_mean,app_miou_std,holdout_miou_mean,holdout_miou_std,seeds\n";
  char buf[160];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, ",%.6f,%.6f,%.6f,%.6f,%zu\n", r.app_mean, r.app_std,
                  r.holdout_mean, r.holdout_std, r.seeds.size());
    out += r.value + buf;
  }
  return out;
}

}  // namespace pf
