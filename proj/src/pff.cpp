#include "promptfocus/pff.hpp"

#include <algorithm>
#include <cmath>

#include "promptfocus/errors.hpp"

namespace pf::pff {

std::string to_string(AttentionDirection d) {
  return d == AttentionDirection::ImageQuery ? "image_query" : "text_query";
}

AttentionDirection attention_direction_from_string(const std::string& s) {
  if (s == "image_query") return AttentionDirection::ImageQuery;
  if (s == "text_query") return AttentionDirection::TextQuery;
  throw ConfigError("unknown attention direction '" + s + "'");
}

std::string to_string(Stages s) {
  switch (s) {
    case Stages::Full: return "full";
    case Stages::SelfOnly: return "self_only";
    case Stages::CrossOnly: return "cross_only";
  }
  return "full";
}

Stages stages_from_string(const std::string& s) {
  if (s == "full") return Stages::Full;
  if (s == "self_only") return Stages::SelfOnly;
  if (s == "cross_only") return Stages::CrossOnly;
  throw ConfigError("unknown PFF stage set '" + s + "'");
}

PffParams PffParams::init(const PffDims& dims, RngState& rng) {
  if (dims.tokens == 0) throw ConfigError("PFF needs at least one learnable token");
  if (dims.width == 0) throw ConfigError("PFF width must be positive");
  PffParams p;
  p.fusion = nn::Mlp::init(dims.width, dims.width, dims.mlp_ratio, rng);
  p.tokens = Tensor::from({dims.tokens, dims.width},
                          rng.normal_vector(dims.tokens * dims.width, dims.token_init_std), true);
  p.self_attn = nn::AttentionParams::init(dims.width, dims.heads, rng);
  p.cross_attn = nn::AttentionParams::init(dims.width, dims.heads, rng);
  p.output = nn::Mlp::init(dims.width, dims.width, dims.mlp_ratio, rng, /*zero_last=*/true);
  return p;
}

std::vector<nn::NamedTensor> PffParams::named_tensors(const std::string& prefix) const {
  std::vector<nn::NamedTensor> out;
  fusion.collect(prefix + ".fusion", out);
  out.push_back({prefix + ".tokens", tokens});
  self_attn.collect(prefix + ".self_attn", out);
  cross_attn.collect(prefix + ".cross_attn", out);
  output.collect(prefix + ".output", out);
  return out;
}

WidthAdapter WidthAdapter::init(std::size_t from, std::size_t to, RngState& rng) {
  const double std = 1.0 / std::sqrt(static_cast<double>(from));
  return {Tensor::from({from, to}, rng.normal_vector(from * to, std), false)};
}

Tensor encode_class_prompts(const dcp::PromptSelection& selection, const EmbeddingTable& table) {
  if (selection.empty()) throw ContractError("cannot encode an empty prompt selection");
  std::vector<double> rows;
  rows.reserve(selection.size() * table.dim());
  for (const auto& name : selection.cls) {
    const auto r = table.row(name);  // DataError when missing
    rows.insert(rows.end(), r.begin(), r.end());
  }
  return Tensor::from({selection.size(), table.dim()}, std::move(rows));
}

Tensor normalize_similarity(std::span<const double> sim) {
  if (sim.empty()) throw ContractError("normalize_similarity on an empty list");
  std::vector<double> logs(sim.size());
  for (std::size_t i = 0; i < sim.size(); ++i) {
    if (!(sim[i] > 0.0)) throw ContractError("similarity values must be positive");
    logs[i] = std::log(sim[i]);
  }
  const auto [lo, hi] = std::minmax_element(logs.begin(), logs.end());
  const double min = *lo, max = *hi;
  std::vector<double> p(sim.size(), 1.0);
  if (max > min) {
    constexpr double eps = 1e-12;
    for (std::size_t i = 0; i < p.size(); ++i) p[i] = (logs[i] - min) / (max - min + eps);
  }
  return Tensor::from({sim.size()}, std::move(p));
}

PromptFeatures make_prompt_features(const dcp::PromptSelection& selection,
                                    const EmbeddingTable& table,
                                    const std::optional<WidthAdapter>& adapter) {
  Tensor f_cls = encode_class_prompts(selection, table);
  if (adapter) f_cls = (*adapter)(f_cls);
  return {f_cls, normalize_similarity(selection.sim)};
}

PromptFeatures dummy_prompt_features(std::size_t count, std::size_t width) {
  const double v = 1.0 / std::sqrt(static_cast<double>(width));
  return {Tensor::full({count, width}, v), Tensor::full({count}, 1.0)};
}

Tensor fuse(const Tensor& f_cls, const Tensor& p_sim, const PffParams& params) {
  if (f_cls.rank() != 2 || p_sim.numel() != f_cls.rows()) {
    throw DimensionError("fuse: prompts " + shape_str(f_cls.shape()) + " and weights " +
                         shape_str(p_sim.shape()) + " disagree");
  }
  return params.fusion(mul_rows(f_cls, p_sim));
}

Tensor pff_layer_forward(const Tensor& f_i, const PromptFeatures& prompts,
                         const PffParams& params, const PffOptions& options, PffTrace* trace) {
  const std::size_t c = params.width();
  if (f_i.rank() != 2 || f_i.cols() != c) {
    throw ConfigError("PFF width " + std::to_string(c) + " does not match image features " +
                      shape_str(f_i.shape()));
  }
  if (prompts.f_cls.cols() != c) {
    throw ConfigError("prompt embedding width " + std::to_string(prompts.f_cls.cols()) +
                      " differs from feature width " + std::to_string(c) +
                      " and no width adapter is configured");
  }
  const std::size_t patches = f_i.rows();

  const Tensor fused = fuse(prompts.f_cls, prompts.p_sim, params);
  const Tensor enhanced = concat_rows(params.tokens, fused);

  Tensor text = enhanced;
  nn::AttentionResult self_out;
  if (options.stages != Stages::CrossOnly) {
    self_out = nn::multi_head_attention(enhanced, enhanced, params.self_attn);
    text = self_out.output;
  }

  Tensor update;
  nn::AttentionResult cross_out;
  if (options.stages == Stages::SelfOnly) {
    update = broadcast_rows(params.output(mean_rows(text)), patches);
  } else if (options.direction == AttentionDirection::ImageQuery) {
    cross_out = nn::multi_head_attention(f_i, text, params.cross_attn);
    update = params.output(cross_out.output);
  } else {
    cross_out = nn::multi_head_attention(text, f_i, params.cross_attn);
    update = broadcast_rows(params.output(mean_rows(cross_out.output)), patches);
  }

  if (trace) {
    trace->fused = fused;
    trace->enhanced = enhanced;
    trace->self_attended = self_out.output;
    trace->cross_attended = cross_out.output;
    trace->self_weights = self_out.weights;
    trace->cross_weights = cross_out.weights;
  }
  return add(update, f_i);
}

Tensor pff_layer_forward(const Tensor& f_i, const dcp::PromptSelection& selection,
                         const EmbeddingTable& table, const PffParams& params,
                         const PffOptions& options) {
  return pff_layer_forward(f_i, make_prompt_features(selection, table), params, options);
}

}  // namespace pf::pff
