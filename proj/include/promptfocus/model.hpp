#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "promptfocus/backbone.hpp"
#include "promptfocus/dcp.hpp"
#include "promptfocus/nn.hpp"
#include "promptfocus/pff.hpp"

namespace pf {

struct ModelSpec {
  std::size_t raw_dim = 16;
  std::size_t width = 64;
  std::size_t layers = 4;
  std::size_t num_classes = 8;
  std::size_t prompt_dim = 64;   // embedding table dim
  bool use_pff = true;
  bool dummy_prompts = false;    // replace selected prompts by uniform placeholders
  pff::PffDims pff;
  pff::PffOptions options;
  std::uint64_t backbone_seed = 7;
  std::uint64_t seed = 0;        // adapter/head initialization
};

/// Every trainable tensor: the PFF blocks and the task head, nothing else.
std::vector<nn::NamedTensor> pff_trainable_parameters(const std::vector<pff::PffParams>& blocks,
                                                      const nn::Linear& head);

/// Frozen backbone with one PFF block after each layer and a per-patch
/// linear head. Without PFF it is the frozen baseline; both variants draw
/// the head from the same seed so they agree exactly at initialization.
class SegmentationModel {
 public:
  static SegmentationModel init(const ModelSpec& spec);

  const ModelSpec& spec() const { return spec_; }
  const MockBackbone& backbone() const { return backbone_; }
  const std::vector<pff::PffParams>& blocks() const { return blocks_; }
  const nn::Linear& head() const { return head_; }
  const std::optional<pff::WidthAdapter>& adapter() const { return adapter_; }

  /// Prompt inputs for one scene, honoring dummy_prompts and the width adapter.
  pff::PromptFeatures prompt_features(const dcp::PromptSelection& selection,
                                      const EmbeddingTable& table) const;

  /// Per-patch class logits [P×classes].
  Tensor logits(const Tensor& raw, const pff::PromptFeatures& prompts) const;
  /// Final features before the head [P×c].
  Tensor features(const Tensor& raw, const pff::PromptFeatures& prompts) const;

  std::vector<nn::NamedTensor> trainable_parameters() const;

 private:
  ModelSpec spec_;
  MockBackbone backbone_;
  std::vector<pff::PffParams> blocks_;
  nn::Linear head_;
  std::optional<pff::WidthAdapter> adapter_;
};

}  // namespace pf
