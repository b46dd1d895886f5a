#include "promptfocus/backbone.hpp"

#include <cmath>

#include "promptfocus/checkpoint.hpp"
#include "promptfocus/errors.hpp"
#include "promptfocus/sha256.hpp"

namespace pf {

MockBackbone MockBackbone::init(std::size_t raw_dim, std::size_t width, std::size_t layers,
                                RngState& rng) {
  if (raw_dim == 0 || width == 0) throw ConfigError("backbone extents must be positive");
  MockBackbone b;
  const double std = 1.0 / std::sqrt(static_cast<double>(raw_dim));
  b.patchify_ = Tensor::from({raw_dim, width}, rng.normal_vector(raw_dim * width, std));
  for (std::size_t i = 0; i < layers; ++i) {
    b.blocks_.push_back(nn::Linear::init(width, width, rng, /*trainable=*/false));
  }
  return b;
}

Tensor MockBackbone::embed(const Tensor& raw) const {
  if (raw.rank() != 2 || raw.cols() != raw_dim()) {
    throw DimensionError("backbone expects [P×" + std::to_string(raw_dim()) + "] input, got " +
                         shape_str(raw.shape()));
  }
  return matmul(raw, patchify_);
}

Tensor MockBackbone::layer(std::size_t i, const Tensor& x) const {
  return add(x, gelu(blocks_.at(i)(x)));
}

Tensor MockBackbone::forward(const Tensor& raw) const {
  Tensor x = embed(raw);
  for (std::size_t i = 0; i < layers(); ++i) x = layer(i, x);
  return x;
}

std::vector<nn::NamedTensor> MockBackbone::named_tensors() const {
  std::vector<nn::NamedTensor> out{{"backbone.patchify", patchify_}};
  for (std::size_t i = 0; i < blocks_.size(); ++i) {
    blocks_[i].collect("backbone.block" + std::to_string(i), out);
  }
  return out;
}

std::vector<unsigned char> MockBackbone::serialize() const {
  return encode_checkpoint(named_tensors());
}

std::string MockBackbone::weight_hash() const { return sha256_hex(serialize()); }

}  // namespace pf
