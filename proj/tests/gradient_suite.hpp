// SPDX-License-Identifier: Apache-2.0
//
// Named gradient cases: every differentiable op, the attention and layer
// modules, both loss families and both decoder layer types. Each case builds
// its inputs from a seed and returns the finite-difference comparison.

#pragma once

#include <functional>
#include <string>
#include <vector>

#include "dsdet/losses/losses.hpp"
#include "dsdet/model/detector.hpp"
#include "dsdet/numerics/attention.hpp"
#include "dsdet/numerics/nn.hpp"
#include "gradcheck.hpp"

namespace dsdet::testing {

struct GradCase {
  std::string name;
  std::function<GradCheckResult(std::uint64_t seed)> run;
};

inline model::DetectorConfig small_detector_config(std::uint64_t seed) {
  model::DetectorConfig c;
  c.grid = 4;
  c.patch = 2;
  c.channels = 8;
  c.heads = 2;
  c.mlp_hidden = 12;
  c.num_classes = 3;
  c.t1 = 1;
  c.t2 = 1;
  c.lambda = 2;
  c.seed = seed;
  c.pocoo.image_h = c.pocoo.image_w = c.grid * c.patch;
  return c;
}

// Scrambles every parameter so zero-initialized weights and biases take part.
template <typename T>
void randomize_parameters(numerics::ParameterStore<T>& store, std::uint64_t seed, double scale = 0.4) {
  numerics::Rng rng(seed * 7919 + 3);
  for (auto& p : store.params())
    for (auto& v : p.tensor.mutable_values()) v = static_cast<T>(scale * rng.normal());
}

inline std::vector<std::pair<std::string, TensorD>> params_with_prefix(numerics::ParameterStore<double>& store,
                                                                      const std::string& prefix) {
  std::vector<std::pair<std::string, TensorD>> out;
  for (auto& p : store.params())
    if (p.name.rfind(prefix, 0) == 0) out.emplace_back(p.name, p.tensor);
  return out;
}

inline std::vector<GradCase> gradient_cases() {
  namespace nx = numerics;
  using Leaves = std::vector<std::pair<std::string, TensorD>>;
  std::vector<GradCase> cases;

  auto unary = [&cases](const std::string& name, double lo, double hi, std::function<TensorD(const TensorD&)> op) {
    cases.push_back({name, [lo, hi, op](std::uint64_t seed) {
                       nx::Rng rng(seed);
                       auto x = uniform_tensor(rng, {3, 5}, lo, hi);
                       return grad_check({{"x", x}}, [&] { return op(x); }, seed);
                     }});
  };
  auto binary = [&cases](const std::string& name, std::function<TensorD(const TensorD&, const TensorD&)> op) {
    cases.push_back({name, [op](std::uint64_t seed) {
                       nx::Rng rng(seed);
                       auto a = random_tensor(rng, {4, 3});
                       auto b = random_tensor(rng, {4, 3});
                       return grad_check({{"a", a}, {"b", b}}, [&] { return op(a, b); }, seed);
                     }});
  };

  cases.push_back({"matmul", [](std::uint64_t seed) {
                     nx::Rng rng(seed);
                     auto a = random_tensor(rng, {3, 4});
                     auto b = random_tensor(rng, {4, 5});
                     return grad_check({{"a", a}, {"b", b}}, [&] { return nx::matmul(a, b); }, seed);
                   }});
  cases.push_back({"matmul_nt", [](std::uint64_t seed) {
                     nx::Rng rng(seed);
                     auto a = random_tensor(rng, {3, 4});
                     auto b = random_tensor(rng, {5, 4});
                     return grad_check({{"a", a}, {"b", b}}, [&] { return nx::matmul_nt(a, b); }, seed);
                   }});
  cases.push_back({"linear", [](std::uint64_t seed) {
                     nx::Rng rng(seed);
                     auto x = random_tensor(rng, {3, 4});
                     auto w = random_tensor(rng, {4, 2});
                     auto b = random_tensor(rng, {2});
                     return grad_check({{"x", x}, {"w", w}, {"b", b}}, [&] { return nx::linear(x, w, b); }, seed);
                   }});
  cases.push_back({"linear_no_bias", [](std::uint64_t seed) {
                     nx::Rng rng(seed);
                     auto x = random_tensor(rng, {3, 4});
                     auto w = random_tensor(rng, {4, 2});
                     return grad_check({{"x", x}, {"w", w}}, [&] { return nx::linear(x, w, TensorD{}); }, seed);
                   }});
  binary("add", [](const TensorD& a, const TensorD& b) { return nx::add(a, b); });
  binary("sub", [](const TensorD& a, const TensorD& b) { return nx::sub(a, b); });
  binary("mul", [](const TensorD& a, const TensorD& b) { return nx::mul(a, b); });
  binary("maximum", [](const TensorD& a, const TensorD& b) { return nx::maximum(a, b); });
  binary("minimum", [](const TensorD& a, const TensorD& b) { return nx::minimum(a, b); });
  cases.push_back({"div", [](std::uint64_t seed) {
                     nx::Rng rng(seed);
                     auto a = random_tensor(rng, {4, 3});
                     auto b = uniform_tensor(rng, {4, 3}, 0.5, 2.0);
                     return grad_check({{"a", a}, {"b", b}}, [&] { return nx::div(a, b); }, seed);
                   }});
  cases.push_back({"add_row", [](std::uint64_t seed) {
                     nx::Rng rng(seed);
                     auto x = random_tensor(rng, {4, 3});
                     auto r = random_tensor(rng, {3});
                     return grad_check({{"x", x}, {"row", r}}, [&] { return nx::add_row(x, r); }, seed);
                   }});
  unary("scale", -2, 2, [](const TensorD& x) { return nx::scale(x, -1.7); });
  unary("add_scalar", -2, 2, [](const TensorD& x) { return nx::add_scalar(x, 0.3); });
  unary("clamp", -2, 2, [](const TensorD& x) { return nx::clamp(x, -0.8, 0.9); });
  unary("sigmoid", -4, 4, [](const TensorD& x) { return nx::sigmoid(x); });
  unary("relu", -2, 2, [](const TensorD& x) { return nx::relu(x); });
  unary("gelu", -3, 3, [](const TensorD& x) { return nx::gelu(x); });
  unary("softplus", -4, 4, [](const TensorD& x) { return nx::softplus(x); });
  unary("abs", -2, 2, [](const TensorD& x) { return nx::abs(x); });
  unary("square", -2, 2, [](const TensorD& x) { return nx::square(x); });
  unary("sqrt", 0.2, 3, [](const TensorD& x) { return nx::sqrt(x); });
  unary("inverse_sigmoid", 0.05, 0.95, [](const TensorD& x) { return nx::inverse_sigmoid(x); });
  unary("softmax_last", -3, 3, [](const TensorD& x) { return nx::softmax(x, -1); });
  unary("softmax_first", -3, 3, [](const TensorD& x) { return nx::softmax(x, 0); });
  unary("sum", -2, 2, [](const TensorD& x) { return nx::sum(x); });
  unary("mean", -2, 2, [](const TensorD& x) { return nx::mean(x); });
  unary("gather_rows", -2, 2, [](const TensorD& x) {
    const std::vector<int> rows{2, 0, 2, 1};
    return nx::gather_rows(x, std::span<const int>(rows));
  });
  unary("gather", -2, 2, [](const TensorD& x) {
    const std::vector<int> idx{14, 3, 3, 0, 7};
    return nx::gather(x, std::span<const int>(idx));
  });
  unary("slice_cols", -2, 2, [](const TensorD& x) { return nx::slice_cols(x, 1, 4); });
  unary("reshape", -2, 2, [](const TensorD& x) { return nx::reshape(x, {5, 3}); });
  unary("activation_gelu", -3, 3, [](const TensorD& x) { return nx::activation(x, nx::Activation::kGelu); });
  cases.push_back({"concat_cols", [](std::uint64_t seed) {
                     nx::Rng rng(seed);
                     auto a = random_tensor(rng, {3, 2});
                     auto b = random_tensor(rng, {3, 4});
                     auto c = random_tensor(rng, {3, 1});
                     return grad_check({{"a", a}, {"b", b}, {"c", c}}, [&] { return nx::concat_cols(std::vector<TensorD>{a, b, c}); },
                                       seed);
                   }});
  cases.push_back({"layernorm", [](std::uint64_t seed) {
                     nx::Rng rng(seed);
                     auto x = random_tensor(rng, {4, 6});
                     auto g = uniform_tensor(rng, {6}, 0.5, 1.5);
                     auto b = random_tensor(rng, {6});
                     return grad_check({{"x", x}, {"gain", g}, {"bias", b}},
                                       [&] { return nx::layernorm(x, g, b, 1e-5); }, seed);
                   }});
  cases.push_back({"bce_with_logits", [](std::uint64_t seed) {
                     nx::Rng rng(seed);
                     auto x = random_tensor(rng, {4, 3}, 2.0);
                     std::vector<double> t(12);
                     for (auto& v : t) v = rng.uniform();
                     return grad_check({{"x", x}}, [&] { return nx::bce_with_logits(x, std::span<const double>(t)); },
                                       seed);
                   }});
  cases.push_back({"multi_head_attention", [](std::uint64_t seed) {
                     nx::Rng rng(seed);
                     auto q = random_tensor(rng, {3, 8});
                     auto k = random_tensor(rng, {5, 8});
                     auto v = random_tensor(rng, {5, 8});
                     return grad_check({{"q", q}, {"k", k}, {"v", v}},
                                       [&] { return nx::multi_head_attention(q, k, v, 2); }, seed);
                   }});
  cases.push_back({"multi_head_attention_masked", [](std::uint64_t seed) {
                     nx::Rng rng(seed);
                     auto q = random_tensor(rng, {3, 8});
                     auto k = random_tensor(rng, {5, 8});
                     auto v = random_tensor(rng, {5, 8});
                     const std::vector<unsigned char> mask{1, 0, 1, 1, 0};
                     return grad_check({{"q", q}, {"k", k}, {"v", v}},
                                       [&] {
                                         return nx::multi_head_attention(q, k, v, 4,
                                                                         std::span<const unsigned char>(mask));
                                       },
                                       seed);
                   }});
  cases.push_back({"attention_module", [](std::uint64_t seed) {
                     nx::Rng rng(seed);
                     nx::ParameterStore<double> store;
                     auto att = nx::Attention<double>::create(store, "att", 8, 2, rng);
                     randomize_parameters(store, seed);
                     auto q = random_tensor(rng, {4, 8});
                     auto m = random_tensor(rng, {6, 8});
                     Leaves leaves{{"q", q}, {"m", m}};
                     for (auto& p : store.params()) leaves.emplace_back(p.name, p.tensor);
                     return grad_check(leaves, [&] { return att(q, m); }, seed);
                   }});
  cases.push_back({"mlp_module", [](std::uint64_t seed) {
                     nx::Rng rng(seed);
                     nx::ParameterStore<double> store;
                     auto mlp = nx::Mlp<double>::create(store, "mlp", 5, 7, 3, nx::Activation::kGelu, rng);
                     randomize_parameters(store, seed);
                     auto x = random_tensor(rng, {4, 5});
                     Leaves leaves{{"x", x}};
                     for (auto& p : store.params()) leaves.emplace_back(p.name, p.tensor);
                     return grad_check(leaves, [&] { return mlp(x); }, seed);
                   }});

  cases.push_back({"pocoo_loss", [](std::uint64_t seed) {
                     nx::Rng rng(seed);
                     auto logits = random_tensor(rng, {6, 3}, 1.5);
                     losses::GroundTruth gts;
                     gts.classes = {0, 2, 1};
                     for (int g = 0; g < 3; ++g)
                       gts.boxes.push_back(geometry::BoxCxCyWH::clamped(rng.uniform(0.2, 0.8), rng.uniform(0.2, 0.8),
                                                                        rng.uniform(0.05, 0.5),
                                                                        rng.uniform(0.05, 0.5)));
                     assignment::MatchResult match;
                     match.pairs = {{0, 1, 0, 0.0}, {1, 4, 1, 0.0}, {2, 2, 2, 0.0}, {3, 5, 0, 0.0}};
                     std::vector<double> targets;
                     for (std::size_t i = 0; i < match.pairs.size(); ++i) targets.push_back(rng.uniform());
                     const std::vector<unsigned char> active{1, 1, 1, 0, 1, 1};
                     losses::PoCooParams params;
                     return grad_check({{"logits", logits}},
                                       [&] {
                                         return losses::pocoo_loss(logits, match, gts,
                                                                   std::span<const double>(targets), params,
                                                                   std::span<const unsigned char>(active));
                                       },
                                       seed);
                   }});
  cases.push_back({"box_losses", [](std::uint64_t seed) {
                     nx::Rng rng(seed);
                     std::vector<double> v;
                     for (int i = 0; i < 5; ++i)
                       v.insert(v.end(), {rng.uniform(0.3, 0.7), rng.uniform(0.3, 0.7), rng.uniform(0.1, 0.4),
                                          rng.uniform(0.1, 0.4)});
                     TensorD boxes({5, 4}, v, true);
                     losses::GroundTruth gts;
                     gts.classes = {0, 1};
                     for (int g = 0; g < 2; ++g)
                       gts.boxes.push_back(geometry::BoxCxCyWH::clamped(rng.uniform(0.3, 0.7), rng.uniform(0.3, 0.7),
                                                                        rng.uniform(0.1, 0.4),
                                                                        rng.uniform(0.1, 0.4)));
                     assignment::MatchResult match;
                     match.pairs = {{0, 0, 0, 0.0}, {1, 3, 1, 0.0}, {2, 4, 0, 0.0}};
                     return grad_check({{"boxes", boxes}},
                                       [&] {
                                         auto bl = losses::box_losses(boxes, gts, match);
                                         return nx::concat_cols(std::vector<TensorD>{nx::reshape(bl.l1, {1, 1}),
                                                                 nx::reshape(bl.giou, {1, 1})});
                                       },
                                       seed);
                   }});

  cases.push_back({"encoder", [](std::uint64_t seed) {
                     auto cfg = small_detector_config(seed);
                     model::Detector<double> det(cfg);
                     randomize_parameters(det.parameters(), seed, 0.3);
                     nx::Rng rng(seed);
                     std::vector<float> image(static_cast<std::size_t>(cfg.image_side() * cfg.image_side()));
                     for (auto& p : image) p = static_cast<float>(rng.uniform());
                     auto leaves = params_with_prefix(det.parameters(), "encoder.");
                     return grad_check(leaves,
                                       [&] {
                                         auto e = det.encode(image);
                                         return nx::concat_cols(std::vector<TensorD>{e.tokens, e.class_logits, e.init_box_logits});
                                       },
                                       seed);
                   }});
  auto layer_case = [&cases](const std::string& name, bool dp, model::DpOrder order) {
    cases.push_back({name, [dp, order](std::uint64_t seed) {
                       auto cfg = small_detector_config(seed);
                       cfg.dp_order = order;
                       model::Detector<double> det(cfg);
                       randomize_parameters(det.parameters(), seed, 0.4);
                       nx::Rng rng(seed);
                       auto q = random_tensor(rng, {5, cfg.channels});
                       auto mem = random_tensor(rng, {cfg.num_tokens(), cfg.channels});
                       const std::vector<unsigned char> active{1, 1, 0, 1, 0};
                       auto leaves = params_with_prefix(det.parameters(), dp ? "decoder.dp0." : "decoder.blp0.");
                       leaves.emplace_back("queries", q);
                       leaves.emplace_back("memory", mem);
                       return grad_check(leaves,
                                         [&] {
                                           auto s = dp ? det.dp_layer(0, q, mem, active) : det.blp_layer(0, q, mem);
                                           return nx::concat_cols(std::vector<TensorD>{s.features, s.box_offsets, s.class_logits});
                                         },
                                         seed);
                     }});
  };
  layer_case("blp_layer", false, model::DpOrder::kCrossFirst);
  layer_case("dp_layer", true, model::DpOrder::kCrossFirst);
  layer_case("dp_layer_sa_first", true, model::DpOrder::kSelfFirst);
  return cases;
}

}  // namespace dsdet::testing
