#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "promptfocus/dcp.hpp"
#include "promptfocus/embedding_store.hpp"
#include "promptfocus/nn.hpp"
#include "promptfocus/rng.hpp"
#include "promptfocus/tensor.hpp"

// Prompt-guided feature focuser: fuses class prompts with their similarity
// weights, mixes them with learnable tokens by self-attention, lets image
// patches attend to the result, and adds the MLP-projected outcome back onto
// the frozen layer's features.
namespace pf::pff {

/// Which side supplies the cross-attention queries.
///  ImageQuery: patches query the prompt sequence; output is P×c and is added
///              to the patch features directly.
///  TextQuery:  the prompt sequence queries the patches; the (m+K)×c result is
///              mean-pooled and broadcast over patches before the residual.
enum class AttentionDirection { ImageQuery, TextQuery };

/// Which attention stages are active.
enum class Stages { Full, SelfOnly, CrossOnly };

std::string to_string(AttentionDirection d);
AttentionDirection attention_direction_from_string(const std::string& s);
std::string to_string(Stages s);
Stages stages_from_string(const std::string& s);

struct PffDims {
  std::size_t width = 64;    // c, the backbone feature width
  std::size_t tokens = 75;   // m, learnable tokens per layer
  std::size_t heads = 4;
  std::size_t mlp_ratio = 4;
  double token_init_std = 0.02;
};

struct PffOptions {
  AttentionDirection direction = AttentionDirection::ImageQuery;
  Stages stages = Stages::Full;
};

struct PffParams {
  nn::Mlp fusion;
  Tensor tokens;  // [m×c]
  nn::AttentionParams self_attn;
  nn::AttentionParams cross_attn;
  nn::Mlp output;  // final layer zero-initialized

  static PffParams init(const PffDims& dims, RngState& rng);
  std::size_t width() const { return tokens.cols(); }
  std::size_t token_count() const { return tokens.rows(); }
  std::vector<nn::NamedTensor> named_tensors(const std::string& prefix) const;
};

/// Frozen random projection mapping prompt embeddings (d) to the backbone width (c).
struct WidthAdapter {
  Tensor projection;  // [d×c], never trainable

  static WidthAdapter init(std::size_t from, std::size_t to, RngState& rng);
  Tensor operator()(const Tensor& x) const { return matmul(x, projection); }
};

/// Frozen text-side inputs for one image: F_cls rows and normalized weights.
struct PromptFeatures {
  Tensor f_cls;  // [K×c]
  Tensor p_sim;  // [K]
};

/// Embedding rows of the selected classes, in selection order, as a constant.
Tensor encode_class_prompts(const dcp::PromptSelection& selection, const EmbeddingTable& table);

/// Min-max normalization of log-probabilities into [0, 1]. A single class or
/// equal probabilities map to all ones.
Tensor normalize_similarity(std::span<const double> sim);

/// F_cls and p_sim for a selection; applies the adapter when given.
PromptFeatures make_prompt_features(const dcp::PromptSelection& selection,
                                    const EmbeddingTable& table,
                                    const std::optional<WidthAdapter>& adapter = std::nullopt);

/// K uniform placeholder prompts carrying no class information.
PromptFeatures dummy_prompt_features(std::size_t count, std::size_t width);

/// F_fuse = fusion MLP of F_cls scaled row-wise by p_sim.
Tensor fuse(const Tensor& f_cls, const Tensor& p_sim, const PffParams& params);

/// Intermediate values of one PFF application, for inspection in tests.
struct PffTrace {
  Tensor fused;
  Tensor enhanced;
  Tensor self_attended;
  Tensor cross_attended;
  std::vector<Tensor> self_weights;
  std::vector<Tensor> cross_weights;
};

/// One PFF block on the features of one frozen layer. Output shape equals f_i.
Tensor pff_layer_forward(const Tensor& f_i, const PromptFeatures& prompts,
                         const PffParams& params, const PffOptions& options = {},
                         PffTrace* trace = nullptr);

/// Convenience form driven directly by a selection.
Tensor pff_layer_forward(const Tensor& f_i, const dcp::PromptSelection& selection,
                         const EmbeddingTable& table, const PffParams& params,
                         const PffOptions& options = {});

}  // namespace pf::pff
