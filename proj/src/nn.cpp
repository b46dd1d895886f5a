#include "promptfocus/nn.hpp"

#include <cmath>

#include "promptfocus/errors.hpp"

namespace pf::nn {

Linear Linear::init(std::size_t in, std::size_t out, RngState& rng, bool trainable) {
  // Xavier-normal weights, zero bias.
  const double std = std::sqrt(2.0 / static_cast<double>(in + out));
  return {Tensor::from({in, out}, rng.normal_vector(in * out, std), trainable),
          Tensor::zeros({out}, trainable)};
}

Linear Linear::zeros(std::size_t in, std::size_t out, bool trainable) {
  return {Tensor::zeros({in, out}, trainable), Tensor::zeros({out}, trainable)};
}

Tensor Linear::operator()(const Tensor& x) const {
  if (x.rank() != 2 || x.cols() != in_features()) {
    throw ConfigError("linear layer expects width " + std::to_string(in_features()) + ", got " +
                      shape_str(x.shape()));
  }
  return add_bias(matmul(x, weight), bias);
}

void Linear::collect(const std::string& prefix, std::vector<NamedTensor>& out) const {
  out.push_back({prefix + ".weight", weight});
  out.push_back({prefix + ".bias", bias});
}

Mlp Mlp::init(std::size_t in, std::size_t out, std::size_t hidden_ratio, RngState& rng,
              bool zero_last) {
  if (hidden_ratio == 0) throw ConfigError("mlp hidden ratio must be positive");
  const std::size_t hidden = hidden_ratio * in;
  Mlp m{Linear::init(in, hidden, rng), Linear::init(hidden, out, rng)};
  if (zero_last) m.fc2 = Linear::zeros(hidden, out);
  return m;
}

Tensor Mlp::operator()(const Tensor& x) const { return fc2(gelu(fc1(x))); }

void Mlp::collect(const std::string& prefix, std::vector<NamedTensor>& out) const {
  fc1.collect(prefix + ".fc1", out);
  fc2.collect(prefix + ".fc2", out);
}

AttentionParams AttentionParams::init(std::size_t dim, std::size_t heads, RngState& rng) {
  if (heads == 0 || dim % heads != 0) {
    throw ConfigError("attention width " + std::to_string(dim) + " is not divisible by " +
                      std::to_string(heads) + " heads");
  }
  AttentionParams p;
  p.q = Linear::init(dim, dim, rng);
  p.k = Linear::init(dim, dim, rng);
  p.v = Linear::init(dim, dim, rng);
  p.out = Linear::init(dim, dim, rng);
  p.heads = heads;
  return p;
}

void AttentionParams::collect(const std::string& prefix, std::vector<NamedTensor>& out) const {
  q.collect(prefix + ".q", out);
  k.collect(prefix + ".k", out);
  v.collect(prefix + ".v", out);
  this->out.collect(prefix + ".out", out);
}

AttentionResult multi_head_attention(const Tensor& query_src, const Tensor& kv_src,
                                     const AttentionParams& params) {
  const std::size_t d = params.dim();
  if (params.heads == 0 || d % params.heads != 0) {
    throw ConfigError("attention width " + std::to_string(d) + " is not divisible by " +
                      std::to_string(params.heads) + " heads");
  }
  if (query_src.cols() != d || kv_src.cols() != d) {
    throw DimensionError("attention inputs " + shape_str(query_src.shape()) + " and " +
                         shape_str(kv_src.shape()) + " do not have width " + std::to_string(d));
  }
  const std::size_t dk = d / params.heads;
  const double s = 1.0 / std::sqrt(static_cast<double>(dk));

  const Tensor q = params.q(query_src);
  const Tensor k = params.k(kv_src);
  const Tensor v = params.v(kv_src);

  AttentionResult result;
  std::vector<Tensor> heads;
  heads.reserve(params.heads);
  for (std::size_t h = 0; h < params.heads; ++h) {
    const Tensor qh = slice_cols(q, h * dk, dk);
    const Tensor kh = slice_cols(k, h * dk, dk);
    const Tensor vh = slice_cols(v, h * dk, dk);
    Tensor w = softmax_rows(scale(matmul_nt(qh, kh), s));
    heads.push_back(matmul(w, vh));
    result.weights.push_back(std::move(w));
  }
  const Tensor merged = params.heads == 1 ? heads.front() : concat_cols(heads);
  result.output = params.out(merged);
  return result;
}

}  // namespace pf::nn
