#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "promptfocus/adamw.hpp"
#include "promptfocus/dcp.hpp"
#include "promptfocus/pff.hpp"

namespace pf {

/// Every knob of a training run. Serialized as flat JSON with dotted keys
/// ("train.lr", "dcp.tau_f_min", ...). The optimizer defaults are the
/// published fine-tuning settings; step counts and the toy task are desk scale.
struct TrainConfig {
  std::uint64_t seed = 0;

  AdamWConfig optimizer;          // train.lr, train.weight_decay, train.beta1/2, train.eps
  std::size_t steps = 300;
  std::size_t batch_size = 4;
  std::size_t eval_every = 100;
  std::size_t checkpoint_every = 100;

  dcp::DcpConfig dcp;

  bool pff_enabled = true;
  pff::PffDims pff;               // width comes from backbone.width
  pff::PffOptions pff_options;
  std::string prompts = "dcp";    // "dcp" or "dummy"

  std::size_t backbone_layers = 4;
  std::size_t backbone_width = 64;
  std::uint64_t backbone_seed = 7;

  std::string fixture;            // base path of the .embt/.json pair
  std::vector<std::string> classes;
  std::size_t raw_dim = 16;
  std::size_t grid = 8;
  std::size_t classes_per_scene = 3;
  std::uint64_t task_seed = 11;
  std::size_t train_scenes = 64;
  std::size_t holdout_scenes = 32;
  std::size_t app_scenes = 64;
  double ks_rotation = 0.0;
  double ks_noise = 0.3;
  double as_rotation = 0.5;
  double as_noise = 0.4;
  double embedding_noise = 0.02;

  TrainConfig();

  /// Sets one dotted key (or an unambiguous bare name such as "steps");
  /// throws ConfigError naming unknown keys or bad values.
  void set(const std::string& key, const nlohmann::json& value);
  /// Applies "key=value" where value is parsed as JSON, falling back to a string.
  void apply_override(const std::string& assignment);
  void validate() const;

  nlohmann::json to_flat_json() const;
  static TrainConfig from_flat_json(const nlohmann::json& j);
  static TrainConfig load(const std::filesystem::path& path);
  static std::vector<std::string> keys();
};

/// Committed 20-class street fixture shipped with the sources.
std::filesystem::path default_fixture_path();

}  // namespace pf
