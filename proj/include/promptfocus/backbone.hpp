#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "promptfocus/nn.hpp"
#include "promptfocus/rng.hpp"
#include "promptfocus/tensor.hpp"

namespace pf {

/// Frozen stand-in for a pretrained image encoder: a fixed random patch
/// embedding followed by residual blocks x + GELU(x·W + b). No tensor
/// requires grad; gradients still flow through it to the inserted adapters.
class MockBackbone {
 public:
  static MockBackbone init(std::size_t raw_dim, std::size_t width, std::size_t layers,
                           RngState& rng);

  std::size_t raw_dim() const { return patchify_.rows(); }
  std::size_t width() const { return patchify_.cols(); }
  std::size_t layers() const { return blocks_.size(); }

  /// Patch embedding: [P×raw] -> [P×c].
  Tensor embed(const Tensor& raw) const;
  /// Frozen block i (0-based) applied to x.
  Tensor layer(std::size_t i, const Tensor& x) const;
  /// All blocks in sequence, with no adapter.
  Tensor forward(const Tensor& raw) const;

  std::vector<nn::NamedTensor> named_tensors() const;
  /// Canonical serialization of all weights (PFFC container).
  std::vector<unsigned char> serialize() const;
  /// Hex SHA-256 of serialize().
  std::string weight_hash() const;

 private:
  Tensor patchify_;
  std::vector<nn::Linear> blocks_;
};

}  // namespace pf
