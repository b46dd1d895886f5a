#include "promptfocus/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <functional>

#include "promptfocus/errors.hpp"
#include "promptfocus/nn.hpp"
#include "promptfocus/pff.hpp"
#include "promptfocus/rng.hpp"
#include "promptfocus/tensor.hpp"

namespace pf {

namespace {

using nn::NamedTensor;

// Below this magnitude errors are measured absolutely; both sides of a
// vanishing gradient are dominated by rounding there.
constexpr double kRelFloor = 1e-3;

Tensor random_leaf(Shape shape, RngState& rng, double std = 1.0) {
  const std::size_t n = shape_numel(shape);
  return Tensor::from(std::move(shape), rng.normal_vector(n, std), true);
}

// x² with a backward rule of 3x: used to prove the checker catches bad rules.
Tensor faulty_square(const Tensor& x) {
  auto node = std::make_shared<detail::Node>();
  node->op = "faulty_square";
  node->shape = x.shape();
  node->data.resize(x.numel());
  for (std::size_t i = 0; i < x.numel(); ++i) node->data[i] = x.data()[i] * x.data()[i];
  node->requires_grad = x.requires_grad();
  if (node->requires_grad) {
    node->parents = {x.node()};
    node->backward = [](detail::Node& self) {
      auto& px = *self.parents[0];
      auto& g = px.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * 3.0 * px.data[i];
    };
  }
  return Tensor(std::move(node));
}

class Checker {
 public:
  Checker(const GradCheckOptions& opt, GradCheckReport& report) : opt_(opt), report_(report), rng_(opt.seed) {}

  RngState& rng() { return rng_; }

  // Projects f's output onto a fixed random direction R so every output
  // element contributes to the scalar being differentiated.
  void run(const std::string& check, std::vector<NamedTensor> inputs,
           const std::function<Tensor()>& f) {
    const Tensor probe = f();
    const Tensor r = Tensor::from(probe.shape(), rng_.normal_vector(probe.numel(), 1.0));
    auto loss_of = [&] { return sum(mul(f(), r)); };

    for (auto& in : inputs) in.tensor.zero_grad();
    backward(loss_of());
    std::vector<std::vector<double>> analytic;
    for (auto& in : inputs) {
      if (in.tensor.has_grad()) {
        analytic.emplace_back(in.tensor.grad().begin(), in.tensor.grad().end());
      } else {
        analytic.emplace_back(in.tensor.numel(), 0.0);
      }
    }

    NoGradGuard no_grad;
    for (std::size_t t = 0; t < inputs.size(); ++t) {
      auto values = inputs[t].tensor.mutable_data();
      GradCheckEntry e{check, inputs[t].name, values.size(), 0.0, false};
      for (std::size_t i = 0; i < values.size(); ++i) {
        const double saved = values[i];
        values[i] = saved + opt_.epsilon;
        const double up = loss_of().item();
        values[i] = saved - opt_.epsilon;
        const double down = loss_of().item();
        values[i] = saved;
        const double numeric = (up - down) / (2.0 * opt_.epsilon);
        const double a = analytic[t][i];
        const double rel = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), kRelFloor});
        e.max_rel_error = std::max(e.max_rel_error, rel);
      }
      e.passed = e.max_rel_error < opt_.tolerance;
      report_.entries.push_back(std::move(e));
    }
  }

 private:
  const GradCheckOptions& opt_;
  GradCheckReport& report_;
  RngState rng_;
};

void tensor_core_checks(Checker& c) {
  auto& rng = c.rng();
  {
    Tensor a = random_leaf({3, 4}, rng), b = random_leaf({4, 5}, rng);
    c.run("matmul", {{"a", a}, {"b", b}}, [=] { return matmul(a, b); });
  }
  {
    Tensor a = random_leaf({3, 4}, rng), b = random_leaf({5, 4}, rng);
    c.run("matmul_nt", {{"a", a}, {"b", b}}, [=] { return matmul_nt(a, b); });
  }
  {
    Tensor a = random_leaf({3, 4}, rng);
    c.run("transpose", {{"a", a}}, [=] { return transpose(a); });
  }
  {
    Tensor a = random_leaf({3, 4}, rng), b = random_leaf({3, 4}, rng);
    c.run("add", {{"a", a}, {"b", b}}, [=] { return add(a, b); });
    c.run("sub", {{"a", a}, {"b", b}}, [=] { return sub(a, b); });
    c.run("mul", {{"a", a}, {"b", b}}, [=] { return mul(a, b); });
    c.run("scale", {{"a", a}}, [=] { return scale(a, -1.7); });
  }
  {
    Tensor x = random_leaf({3, 4}, rng), bias = random_leaf({4}, rng);
    c.run("add_bias", {{"x", x}, {"bias", bias}}, [=] { return add_bias(x, bias); });
  }
  {
    Tensor x = random_leaf({3, 4}, rng), p = random_leaf({3}, rng);
    c.run("mul_rows", {{"x", x}, {"p", p}}, [=] { return mul_rows(x, p); });
  }
  {
    Tensor x = random_leaf({3, 4}, rng, 1.5);
    c.run("gelu", {{"x", x}}, [=] { return gelu(x); });
    c.run("softmax_rows", {{"x", x}}, [=] { return softmax_rows(x); });
    c.run("mean_rows", {{"x", x}}, [=] { return mean_rows(x); });
    c.run("slice_cols", {{"x", x}}, [=] { return slice_cols(x, 1, 2); });
    c.run("sum", {{"x", x}}, [=] { return sum(x); });
    c.run("mean", {{"x", x}}, [=] { return mean(x); });
  }
  {
    Tensor top = random_leaf({2, 4}, rng), bottom = random_leaf({3, 4}, rng);
    c.run("concat_rows", {{"top", top}, {"bottom", bottom}}, [=] { return concat_rows(top, bottom); });
  }
  {
    Tensor a = random_leaf({3, 2}, rng), b = random_leaf({3, 3}, rng);
    c.run("concat_cols", {{"a", a}, {"b", b}}, [=] { return concat_cols({a, b}); });
  }
  {
    Tensor x = random_leaf({1, 4}, rng);
    c.run("broadcast_rows", {{"x", x}}, [=] { return broadcast_rows(x, 3); });
  }
  {
    Tensor logits = random_leaf({5, 4}, rng);
    const std::vector<int> labels{0, 3, 1, 1, 2};
    c.run("cross_entropy", {{"logits", logits}}, [=] { return cross_entropy(logits, labels); });
  }
  {
    auto mlp = nn::Mlp::init(6, 5, 2, rng);
    Tensor x = random_leaf({3, 6}, rng);
    std::vector<NamedTensor> in{{"x", x}};
    mlp.collect("mlp", in);
    c.run("mlp", in, [=] { return mlp(x); });
  }
  {
    auto attn = nn::AttentionParams::init(8, 2, rng);
    Tensor q = random_leaf({3, 8}, rng), kv = random_leaf({5, 8}, rng);
    std::vector<NamedTensor> in{{"query_src", q}, {"kv_src", kv}};
    attn.collect("attn", in);
    c.run("multi_head_attention", in, [=] { return nn::multi_head_attention(q, kv, attn).output; });
  }
}

void pff_checks(Checker& c) {
  auto& rng = c.rng();
  pff::PffDims dims;
  dims.width = 8;
  dims.tokens = 3;
  dims.heads = 2;
  dims.mlp_ratio = 2;
  dims.token_init_std = 0.5;

  const std::size_t prompts = 2, patches = 4;
  pff::PromptFeatures pf;
  pf.f_cls = Tensor::from({prompts, dims.width}, rng.normal_vector(prompts * dims.width, 1.0));
  pf.p_sim = pff::normalize_similarity(std::vector<double>{0.7, 0.3});

  struct Variant {
    const char* name;
    pff::PffOptions options;
  };
  const Variant variants[] = {
      {"pff.full.image_query", {pff::AttentionDirection::ImageQuery, pff::Stages::Full}},
      {"pff.full.text_query", {pff::AttentionDirection::TextQuery, pff::Stages::Full}},
      {"pff.self_only", {pff::AttentionDirection::ImageQuery, pff::Stages::SelfOnly}},
      {"pff.cross_only", {pff::AttentionDirection::ImageQuery, pff::Stages::CrossOnly}},
  };
  for (const auto& v : variants) {
    auto params = pff::PffParams::init(dims, rng);
    // The zero-initialized output layer would block every upstream gradient.
    for (auto* t : {&params.output.fc2.weight, &params.output.fc2.bias}) {
      auto d = t->mutable_data();
      const auto noise = rng.normal_vector(d.size(), 0.5);
      std::copy(noise.begin(), noise.end(), d.begin());
    }
    Tensor f_i = random_leaf({patches, dims.width}, rng);
    std::vector<NamedTensor> in{{"f_i", f_i}};
    for (auto& nt : params.named_tensors("pff")) in.push_back(nt);
    const auto opts = v.options;
    c.run(v.name, in, [=] { return pff::pff_layer_forward(f_i, pf, params, opts); });
  }
}

}  // namespace

std::string to_string(GradScope s) {
  switch (s) {
    case GradScope::TensorCore: return "tensor_core";
    case GradScope::Pff: return "pff";
    case GradScope::All: return "all";
  }
  return "?";
}

GradScope grad_scope_from_string(const std::string& s) {
  if (s == "tensor_core") return GradScope::TensorCore;
  if (s == "pff") return GradScope::Pff;
  if (s == "all") return GradScope::All;
  throw ConfigError("unknown gradcheck scope '" + s + "' (tensor_core, pff, all)");
}

bool GradCheckReport::passed() const {
  return !entries.empty() && std::all_of(entries.begin(), entries.end(), [](const auto& e) { return e.passed; });
}

std::vector<std::string> GradCheckReport::failing_checks() const {
  std::vector<std::string> out;
  for (const auto& e : entries) {
    if (!e.passed && std::find(out.begin(), out.end(), e.check) == out.end()) out.push_back(e.check);
  }
  return out;
}

nlohmann::json GradCheckReport::to_json() const {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& e : entries) {
    rows.push_back({{"check", e.check},
                    {"parameter", e.parameter},
                    {"elements", e.elements},
                    {"max_rel_error", e.max_rel_error},
                    {"passed", e.passed}});
  }
  return {{"epsilon", epsilon},
          {"tolerance", tolerance},
          {"passed", passed()},
          {"failing", failing_checks()},
          {"entries", rows}};
}

GradCheckReport run_gradcheck(GradScope scope, const GradCheckOptions& options) {
  GradCheckReport report;
  report.epsilon = options.epsilon;
  report.tolerance = options.tolerance;
  Checker checker(options, report);
  if (scope != GradScope::Pff) tensor_core_checks(checker);
  if (scope != GradScope::TensorCore) pff_checks(checker);
  if (options.inject_fault) {
    Tensor x = random_leaf({2, 3}, checker.rng());
    checker.run("faulty_square", {{"x", x}}, [=] { return faulty_square(x); });
  }
  return report;
}

}  // namespace pf
