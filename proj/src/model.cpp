#include "promptfocus/model.hpp"

#include "promptfocus/errors.hpp"

namespace pf {

std::vector<nn::NamedTensor> pff_trainable_parameters(const std::vector<pff::PffParams>& blocks,
                                                      const nn::Linear& head) {
  std::vector<nn::NamedTensor> out;
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    auto named = blocks[i].named_tensors("pff" + std::to_string(i));
    out.insert(out.end(), named.begin(), named.end());
  }
  head.collect("head", out);
  return out;
}

SegmentationModel SegmentationModel::init(const ModelSpec& spec) {
  SegmentationModel m;
  m.spec_ = spec;
  RngState backbone_rng(spec.backbone_seed);
  m.backbone_ = MockBackbone::init(spec.raw_dim, spec.width, spec.layers, backbone_rng);

  // Fixed fork order keeps the head identical with and without PFF blocks.
  RngState root(spec.seed);
  RngState head_rng = root.fork();
  RngState pff_rng = root.fork();
  RngState adapter_rng = root.fork();
  m.head_ = nn::Linear::init(spec.width, spec.num_classes, head_rng);
  if (spec.use_pff) {
    pff::PffDims dims = spec.pff;
    dims.width = spec.width;
    for (std::size_t i = 0; i < spec.layers; ++i) {
      m.blocks_.push_back(pff::PffParams::init(dims, pff_rng));
    }
    if (spec.prompt_dim != spec.width) {
      m.adapter_ = pff::WidthAdapter::init(spec.prompt_dim, spec.width, adapter_rng);
    }
  }
  return m;
}

pff::PromptFeatures SegmentationModel::prompt_features(const dcp::PromptSelection& selection,
                                                       const EmbeddingTable& table) const {
  if (spec_.dummy_prompts) return pff::dummy_prompt_features(selection.size(), spec_.width);
  return pff::make_prompt_features(selection, table, adapter_);
}

Tensor SegmentationModel::features(const Tensor& raw, const pff::PromptFeatures& prompts) const {
  Tensor x = backbone_.embed(raw);
  for (std::size_t i = 0; i < backbone_.layers(); ++i) {
    x = backbone_.layer(i, x);
    if (spec_.use_pff) x = pff::pff_layer_forward(x, prompts, blocks_[i], spec_.options);
  }
  return x;
}

Tensor SegmentationModel::logits(const Tensor& raw, const pff::PromptFeatures& prompts) const {
  return head_(features(raw, prompts));
}

std::vector<nn::NamedTensor> SegmentationModel::trainable_parameters() const {
  return pff_trainable_parameters(blocks_, head_);
}

}  // namespace pf
