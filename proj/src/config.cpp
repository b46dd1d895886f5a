#include "promptfocus/config.hpp"

#include <fstream>
#include <functional>

#include "promptfocus/errors.hpp"
#include "promptfocus/scene.hpp"

#ifndef PF_DATA_DIR
#define PF_DATA_DIR "data"
#endif

namespace pf {

namespace {

using nlohmann::json;

struct Field {
  const char* key;
  std::function<void(TrainConfig&, const json&)> set;
  std::function<json(const TrainConfig&)> get;
};

template <typename T>
T as(const json& v, const char* key) {
  try {
    if constexpr (std::is_same_v<T, std::size_t> || std::is_same_v<T, std::uint64_t>) {
      if (v.is_number_float() || (v.is_number_integer() && v.get<std::int64_t>() < 0)) {
        throw ConfigError(std::string("config key '") + key + "' needs a non-negative integer");
      }
    }
    if constexpr (std::is_same_v<T, double>) {
      if (!v.is_number()) throw ConfigError(std::string("config key '") + key + "' needs a number");
    }
    return v.get<T>();
  } catch (const json::exception&) {
    throw ConfigError(std::string("config key '") + key + "' has the wrong type: " + v.dump());
  }
}

#define PF_FIELD(KEY, MEMBER, TYPE)                                                   \
  Field {                                                                            \
    KEY, [](TrainConfig& c, const json& v) { c.MEMBER = as<TYPE>(v, KEY); },          \
        [](const TrainConfig& c) { return json(c.MEMBER); }                           \
  }

const std::vector<Field>& fields() {
  static const std::vector<Field> f = {
      PF_FIELD("seed", seed, std::uint64_t),
      PF_FIELD("train.lr", optimizer.lr, double),
      PF_FIELD("train.weight_decay", optimizer.weight_decay, double),
      PF_FIELD("train.beta1", optimizer.beta1, double),
      PF_FIELD("train.beta2", optimizer.beta2, double),
      PF_FIELD("train.eps", optimizer.eps, double),
      PF_FIELD("train.steps", steps, std::size_t),
      PF_FIELD("train.batch_size", batch_size, std::size_t),
      PF_FIELD("train.eval_every", eval_every, std::size_t),
      PF_FIELD("train.checkpoint_every", checkpoint_every, std::size_t),
      PF_FIELD("dcp.tau_f_min", dcp.tau_f_min, double),
      PF_FIELD("dcp.tau_f_max", dcp.tau_f_max, double),
      PF_FIELD("dcp.delta_tau_f", dcp.delta_tau_f, double),
      PF_FIELD("dcp.tau_c_min", dcp.tau_c_min, double),
      PF_FIELD("dcp.tau_c_max", dcp.tau_c_max, double),
      PF_FIELD("dcp.delta_tau_c", dcp.delta_tau_c, double),
      PF_FIELD("dcp.max_classes", dcp.max_classes, std::size_t),
      PF_FIELD("dcp.tau_c_scale", dcp.tau_c_scale, double),
      PF_FIELD("dcp.temperature", dcp.temperature, double),
      PF_FIELD("pff.enabled", pff_enabled, bool),
      PF_FIELD("pff.tokens", pff.tokens, std::size_t),
      PF_FIELD("pff.heads", pff.heads, std::size_t),
      PF_FIELD("pff.mlp_ratio", pff.mlp_ratio, std::size_t),
      PF_FIELD("pff.token_init_std", pff.token_init_std, double),
      Field{"pff.direction",
            [](TrainConfig& c, const json& v) {
              c.pff_options.direction =
                  pff::attention_direction_from_string(as<std::string>(v, "pff.direction"));
            },
            [](const TrainConfig& c) { return json(pff::to_string(c.pff_options.direction)); }},
      Field{"pff.stages",
            [](TrainConfig& c, const json& v) {
              c.pff_options.stages = pff::stages_from_string(as<std::string>(v, "pff.stages"));
            },
            [](const TrainConfig& c) { return json(pff::to_string(c.pff_options.stages)); }},
      PF_FIELD("pff.prompts", prompts, std::string),
      PF_FIELD("backbone.layers", backbone_layers, std::size_t),
      PF_FIELD("backbone.width", backbone_width, std::size_t),
      PF_FIELD("backbone.seed", backbone_seed, std::uint64_t),
      PF_FIELD("task.fixture", fixture, std::string),
      PF_FIELD("task.classes", classes, std::vector<std::string>),
      PF_FIELD("task.raw_dim", raw_dim, std::size_t),
      PF_FIELD("task.grid", grid, std::size_t),
      PF_FIELD("task.classes_per_scene", classes_per_scene, std::size_t),
      PF_FIELD("task.seed", task_seed, std::uint64_t),
      PF_FIELD("task.train_scenes", train_scenes, std::size_t),
      PF_FIELD("task.holdout_scenes", holdout_scenes, std::size_t),
      PF_FIELD("task.app_scenes", app_scenes, std::size_t),
      PF_FIELD("task.ks_rotation", ks_rotation, double),
      PF_FIELD("task.ks_noise", ks_noise, double),
      PF_FIELD("task.as_rotation", as_rotation, double),
      PF_FIELD("task.as_noise", as_noise, double),
      PF_FIELD("task.embedding_noise", embedding_noise, double),
  };
  return f;
}

#undef PF_FIELD

}  // namespace

std::filesystem::path default_fixture_path() {
  return std::filesystem::path(PF_DATA_DIR) / "street20";
}

TrainConfig::TrainConfig() : fixture(default_fixture_path().string()), classes(street_ontology()) {}

void TrainConfig::set(const std::string& key, const nlohmann::json& value) {
  for (const auto& f : fields()) {
    if (key == f.key) {
      f.set(*this, value);
      return;
    }
  }
  // A bare name ("steps") stands for the one dotted key ending in it.
  if (key.find('.') == std::string::npos) {
    const Field* match = nullptr;
    for (const auto& f : fields()) {
      const std::string full = f.key;
      const auto dot = full.rfind('.');
      if (dot != std::string::npos && full.substr(dot + 1) == key) {
        if (match) throw ConfigError("config key '" + key + "' is ambiguous; use the dotted form");
        match = &f;
      }
    }
    if (match) {
      match->set(*this, value);
      return;
    }
  }
  throw ConfigError("unknown config key '" + key + "'");
}

void TrainConfig::apply_override(const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw ConfigError("override '" + assignment + "' is not of the form key=value");
  }
  const std::string key = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);
  json value = json::parse(text, nullptr, /*allow_exceptions=*/false);
  if (value.is_discarded()) value = text;
  set(key, value);
}

void TrainConfig::validate() const {
  if (!(optimizer.lr > 0.0)) throw ConfigError("train.lr must be positive");
  if (optimizer.weight_decay < 0.0) throw ConfigError("train.weight_decay must be >= 0");
  if (batch_size == 0) throw ConfigError("train.batch_size must be positive");
  if (eval_every == 0 || checkpoint_every == 0) {
    throw ConfigError("train.eval_every and train.checkpoint_every must be positive");
  }
  dcp.validate();
  if (prompts != "dcp" && prompts != "dummy") {
    throw ConfigError("pff.prompts must be 'dcp' or 'dummy', got '" + prompts + "'");
  }
  if (pff.tokens == 0) throw ConfigError("pff.tokens must be positive");
  if (pff.heads == 0 || backbone_width % pff.heads != 0) {
    throw ConfigError("backbone.width must be divisible by pff.heads");
  }
  if (backbone_layers == 0 || backbone_width == 0) throw ConfigError("backbone extents must be positive");
  if (classes.empty()) throw ConfigError("task.classes is empty");
  if (train_scenes == 0 || holdout_scenes == 0 || app_scenes == 0) {
    throw ConfigError("scene counts must be positive");
  }
  if (ks_noise < 0.0 || as_noise < 0.0 || embedding_noise < 0.0) {
    throw ConfigError("noise levels must be >= 0");
  }
}

nlohmann::json TrainConfig::to_flat_json() const {
  json j = json::object();
  for (const auto& f : fields()) j[f.key] = f.get(*this);
  return j;
}

TrainConfig TrainConfig::from_flat_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("config file must hold a flat JSON object");
  TrainConfig c;
  for (const auto& [key, value] : j.items()) c.set(key, value);
  return c;
}

TrainConfig TrainConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  json j = json::parse(in, nullptr, false);
  if (j.is_discarded()) throw ConfigError("config file " + path.string() + " is not valid JSON");
  return from_flat_json(j);
}

std::vector<std::string> TrainConfig::keys() {
  std::vector<std::string> out;
  for (const auto& f : fields()) out.emplace_back(f.key);
  return out;
}

}  // namespace pf
