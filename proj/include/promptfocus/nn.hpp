#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "promptfocus/rng.hpp"
#include "promptfocus/tensor.hpp"

namespace pf::nn {

/// A named reference to a trainable tensor.
struct NamedTensor {
  std::string name;
  Tensor tensor;
};

/// y = x·W + b with W stored [in×out].
struct Linear {
  Tensor weight;
  Tensor bias;

  static Linear init(std::size_t in, std::size_t out, RngState& rng, bool trainable = true);
  static Linear zeros(std::size_t in, std::size_t out, bool trainable = true);
  std::size_t in_features() const { return weight.rows(); }
  std::size_t out_features() const { return weight.cols(); }
  Tensor operator()(const Tensor& x) const;
  void collect(const std::string& prefix, std::vector<NamedTensor>& out) const;
};

/// Linear → GELU → Linear. The hidden width is hidden_ratio · in.
struct Mlp {
  Linear fc1;
  Linear fc2;

  static Mlp init(std::size_t in, std::size_t out, std::size_t hidden_ratio, RngState& rng,
                  bool zero_last = false);
  Tensor operator()(const Tensor& x) const;
  void collect(const std::string& prefix, std::vector<NamedTensor>& out) const;
};

struct AttentionParams {
  Linear q, k, v, out;
  std::size_t heads = 1;

  static AttentionParams init(std::size_t dim, std::size_t heads, RngState& rng);
  std::size_t dim() const { return q.in_features(); }
  void collect(const std::string& prefix, std::vector<NamedTensor>& out) const;
};

/// Output of multi_head_attention with the per-head attention weights kept
/// for inspection.
struct AttentionResult {
  Tensor output;                  // [Lq×d]
  std::vector<Tensor> weights;    // per head [Lq×Lk], rows sum to 1
};

/// Projects queries from `query_src` and keys/values from `kv_src`, runs
/// scaled dot-product attention per head (scale 1/√(d/heads)), concatenates
/// the heads and applies the output projection.
AttentionResult multi_head_attention(const Tensor& query_src, const Tensor& kv_src,
                                     const AttentionParams& params);

}  // namespace pf::nn
