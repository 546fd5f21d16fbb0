// SPDX-License-Identifier: Apache-2.0

#include "dsdet/model/detector.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "dsdet/numerics/ops.hpp"

namespace dsdet::model {

namespace nx = dsdet::numerics;

namespace {

template <typename T>
Tensor<T> constant_tensor(nx::Shape shape, const std::vector<double>& values) {
  return Tensor<T>(std::move(shape), std::vector<T>(values.begin(), values.end()));
}

double logit(double p) {
  p = std::clamp(p, 1e-5, 1.0 - 1e-5);
  return std::log(p / (1.0 - p));
}

template <typename T>
void zero_fill(Tensor<T>& t) {
  auto v = t.mutable_values();
  std::fill(v.begin(), v.end(), T(0));
}

}  // namespace

std::vector<double> positional_encoding(int grid, int channels) {
  const int m = grid * grid;
  const int quarter = channels / 4;
  const double temperature = 4.0 * grid;
  std::vector<double> pe(static_cast<std::size_t>(m) * channels, 0.0);
  for (int ty = 0; ty < grid; ++ty) {
    for (int tx = 0; tx < grid; ++tx) {
      double* row = &pe[static_cast<std::size_t>(ty * grid + tx) * channels];
      for (int i = 0; i < quarter; ++i) {
        const double freq = std::pow(temperature, -static_cast<double>(i) / quarter);
        row[2 * i] = std::sin(tx * freq);
        row[2 * i + 1] = std::cos(tx * freq);
        row[channels / 2 + 2 * i] = std::sin(ty * freq);
        row[channels / 2 + 2 * i + 1] = std::cos(ty * freq);
      }
    }
  }
  return pe;
}

std::vector<double> neighborhood_features(std::span<const float> image, int grid, int patch, int window) {
  const int cin = patch * patch;
  if (static_cast<int>(image.size()) != grid * grid * cin)
    throw std::invalid_argument("image size does not match grid and patch");
  const int r = window / 2;
  const int width = window * window * cin;
  std::vector<double> out(static_cast<std::size_t>(grid) * grid * width, 0.0);
  for (int ty = 0; ty < grid; ++ty) {
    for (int tx = 0; tx < grid; ++tx) {
      double* dst = &out[static_cast<std::size_t>(ty * grid + tx) * width];
      for (int dy = -r; dy <= r; ++dy) {
        for (int dx = -r; dx <= r; ++dx) {
          const int sy = ty + dy;
          const int sx = tx + dx;
          double* slot = dst + ((dy + r) * window + (dx + r)) * cin;
          if (sy < 0 || sy >= grid || sx < 0 || sx >= grid) continue;
          const float* src = &image[static_cast<std::size_t>(sy * grid + sx) * cin];
          for (int c = 0; c < cin; ++c) slot[c] = src[c];
        }
      }
    }
  }
  return out;
}

std::vector<TokenSelection> select_tokens(const std::vector<std::vector<double>>& scores, double threshold, int cap,
                                          int fixed_n) {
  if (!(threshold > 0.0 && threshold < 1.0)) throw std::invalid_argument("select_tokens: threshold must lie in (0, 1)");
  if (cap < 1) throw std::invalid_argument("select_tokens: cap must be >= 1");
  std::vector<TokenSelection> out(scores.size());
  std::vector<std::vector<int>> order(scores.size());
  int n_q = 0;
  for (std::size_t b = 0; b < scores.size(); ++b) {
    const auto& s = scores[b];
    if (s.empty()) throw std::invalid_argument("select_tokens: image without tokens");
    auto& idx = order[b];
    idx.resize(s.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&](int a, int c) { return s[a] > s[c]; });
    int n = 0;
    if (fixed_n > 0) {
      n = std::min<int>(fixed_n, static_cast<int>(s.size()));
    } else {
      while (n < static_cast<int>(idx.size()) && s[idx[n]] >= threshold) ++n;
      n = std::clamp(n, 1, cap);
    }
    auto& sel = out[b];
    sel.num_active = n;
    for (int i = 0; i < n; ++i) {
      sel.tokens.push_back(idx[i]);
      sel.active.push_back(1);
      sel.scores.push_back(s[idx[i]]);
    }
    n_q = std::max(n_q, n);
  }
  for (std::size_t b = 0; b < scores.size(); ++b) {
    auto& sel = out[b];
    const auto& idx = order[b];
    // Placeholders: lowest-score tokens first.
    for (int i = static_cast<int>(idx.size()) - 1; static_cast<int>(sel.tokens.size()) < n_q; --i) {
      sel.tokens.push_back(idx[i]);
      sel.active.push_back(0);
      sel.scores.push_back(scores[b][idx[i]]);
    }
  }
  return out;
}

template <typename T>
std::vector<double> EncoderOutput<T>::scores() const {
  const int m = class_logits.rows();
  const int c = class_logits.cols();
  const auto v = class_logits.values();
  std::vector<double> out(static_cast<std::size_t>(m));
  for (int i = 0; i < m; ++i) {
    double best = -std::numeric_limits<double>::infinity();
    for (int k = 0; k < c; ++k) best = std::max(best, static_cast<double>(v[i * c + k]));
    out[i] = 1.0 / (1.0 + std::exp(-best));
  }
  return out;
}

template <typename T>
Detector<T>::Detector(DetectorConfig config) : config_(std::move(config)) {
  config_.validate();
  const auto& c = config_;
  nx::Rng rng(c.seed);
  const int width = c.channels;
  const T eps = static_cast<T>(c.ln_eps);
  const T prior = static_cast<T>(logit(c.class_prior));

  const int in_width = c.embed_window * c.embed_window * c.channels_in();
  if (c.embed_hidden > 0)
    stem_ = nx::Mlp<T>::create(store_, "encoder.stem", in_width, c.embed_hidden, width, c.activation, rng);
  else
    embed_ = nx::Linear<T>::create(store_, "encoder.embed", in_width, width, rng);
  for (int i = 0; i < c.encoder_layers; ++i) {
    const std::string name = "encoder.block" + std::to_string(i);
    EncoderBlock b;
    b.sa = nx::Attention<T>::create(store_, name + ".sa", width, c.heads, rng);
    b.ln1 = nx::LayerNorm<T>::create(store_, name + ".ln1", width, eps);
    b.mlp = nx::Mlp<T>::create(store_, name + ".mlp", width, c.mlp_hidden, width, c.activation, rng);
    b.ln2 = nx::LayerNorm<T>::create(store_, name + ".ln2", width, eps);
    encoder_.push_back(std::move(b));
  }
  enc_cls_ = nx::Linear<T>::create(store_, "encoder.cls", width, c.num_classes, rng, prior);
  enc_box_ = nx::Mlp<T>::create(store_, "encoder.box", width, width, 4, c.activation, rng);
  {
    // Start from small boxes centered on their token.
    auto b = enc_box_.fc2.bias.mutable_values();
    b[2] = b[3] = static_cast<T>(logit(0.15));
  }

  for (int i = 0; i < c.t1; ++i) {
    const std::string name = "decoder.blp" + std::to_string(i);
    BlpParams p;
    p.ca = nx::Attention<T>::create(store_, name + ".ca", width, c.heads, rng);
    p.ln1 = nx::LayerNorm<T>::create(store_, name + ".ln1", width, eps);
    p.mlp = nx::Mlp<T>::create(store_, name + ".mlp", width, c.mlp_hidden, width, c.activation, rng);
    p.ln2 = nx::LayerNorm<T>::create(store_, name + ".ln2", width, eps);
    p.heads = make_heads(name, rng);
    blp_.push_back(std::move(p));
  }
  for (int i = 0; i < c.t2; ++i) {
    const std::string name = "decoder.dp" + std::to_string(i);
    DpParams p;
    p.ca = nx::Attention<T>::create(store_, name + ".ca", width, c.heads, rng);
    p.ln = nx::LayerNorm<T>::create(store_, name + ".ln", width, eps);
    for (int m = 0; m < c.lambda; ++m) {
      const std::string bn = name + ".msab" + std::to_string(m);
      Msab blk;
      blk.sa = nx::Attention<T>::create(store_, bn + ".sa", width, c.heads, rng);
      blk.ln = nx::LayerNorm<T>::create(store_, bn + ".ln", width, eps);
      blk.mlp = nx::Mlp<T>::create(store_, bn + ".mlp", width, c.mlp_hidden, width, c.activation, rng);
      p.blocks.push_back(std::move(blk));
    }
    p.heads = make_heads(name, rng);
    dp_.push_back(std::move(p));
  }

  pos_enc_ = constant_tensor<T>({c.num_tokens(), width}, positional_encoding(c.grid, width));
  std::vector<double> pos(static_cast<std::size_t>(c.num_tokens()) * 2);
  for (int ty = 0; ty < c.grid; ++ty)
    for (int tx = 0; tx < c.grid; ++tx) {
      pos[(ty * c.grid + tx) * 2] = (tx + 0.5) / c.grid;
      pos[(ty * c.grid + tx) * 2 + 1] = (ty + 0.5) / c.grid;
    }
  positions_ = constant_tensor<T>({c.num_tokens(), 2}, pos);
}

template <typename T>
typename Detector<T>::Heads Detector<T>::make_heads(const std::string& name, nx::Rng& rng) {
  const auto& c = config_;
  Heads h;
  h.cls = nx::Linear<T>::create(store_, name + ".cls", c.channels, c.num_classes, rng, static_cast<T>(logit(c.class_prior)));
  h.box = nx::Mlp<T>::create(store_, name + ".box", c.channels, c.channels, 4, c.activation, rng);
  // Refinement starts as the identity.
  zero_fill(h.box.fc2.weight);
  return h;
}

template <typename T>
EncoderOutput<T> Detector<T>::encode(std::span<const float> image) const {
  const auto& c = config_;
  const int m = c.num_tokens();
  const int in_width = c.embed_window * c.embed_window * c.channels_in();
  auto feats = constant_tensor<T>({m, in_width}, neighborhood_features(image, c.grid, c.patch, c.embed_window));

  Tensor<T> x = nx::add(c.embed_hidden > 0 ? stem_(feats) : embed_(feats), pos_enc_);
  for (const auto& b : encoder_) {
    x = b.ln1(nx::add(x, b.sa(x, x)));
    x = b.ln2(nx::add(x, b.mlp(x)));
  }
  EncoderOutput<T> out;
  out.tokens = x;
  out.class_logits = enc_cls_(x);
  out.init_box_logits = enc_box_(x);
  const T range = static_cast<T>(c.init_offset_range);
  auto center_off = nx::scale(nx::add_scalar(nx::scale(nx::sigmoid(nx::slice_cols(out.init_box_logits, 0, 2)), T(2)), T(-1)), range);
  auto center = nx::clamp(nx::add(center_off, positions_), T(1e-4), T(1 - 1e-4));
  auto size = nx::sigmoid(nx::slice_cols(out.init_box_logits, 2, 4));
  out.init_boxes = nx::concat_cols(std::vector<Tensor<T>>{center, size});
  out.positions.resize(static_cast<std::size_t>(m));
  const auto pv = positions_.values();
  for (int i = 0; i < m; ++i) out.positions[i] = {double(pv[i * 2]), double(pv[i * 2 + 1])};
  return out;
}

template <typename T>
QueryBatch<T> Detector<T>::flet_select(const std::vector<EncoderOutput<T>>& encoded, bool training,
                                       std::optional<double> threshold) const {
  const auto& c = config_;
  std::vector<std::vector<double>> scores;
  scores.reserve(encoded.size());
  for (const auto& e : encoded) scores.push_back(e.scores());
  const int cap = training ? c.pool_cap : c.num_tokens();
  const int fixed = c.selection == QuerySelection::kFixedTopN ? c.fixed_queries : 0;
  const auto sel = select_tokens(scores, threshold.value_or(c.threshold), cap, fixed);

  QueryBatch<T> batch;
  batch.n_queries = sel.empty() ? 0 : static_cast<int>(sel.front().tokens.size());
  for (std::size_t b = 0; b < encoded.size(); ++b) {
    const auto& s = sel[b];
    const auto& enc = encoded[b];
    ImageQueries<T> q;
    q.features = nx::gather_rows(enc.tokens, std::span<const int>(s.tokens));
    const auto bv = enc.init_boxes.values();
    std::vector<double> logits;
    logits.reserve(s.tokens.size() * 4);
    for (int t : s.tokens) {
      BoxCxCyWH box{bv[t * 4], bv[t * 4 + 1], bv[t * 4 + 2], bv[t * 4 + 3]};
      q.boxes.push_back(box);
      for (double v : {box.cx, box.cy, box.w, box.h}) logits.push_back(logit(v));
    }
    q.box_logits = constant_tensor<T>({static_cast<int>(s.tokens.size()), 4}, logits);
    q.active = s.active;
    q.source_token = s.tokens;
    q.scores = s.scores;
    q.num_active = s.num_active;
    batch.images.push_back(std::move(q));
  }
  return batch;
}

template <typename T>
LayerStep<T> Detector<T>::blp_layer(int index, const Tensor<T>& queries, const Tensor<T>& memory) const {
  const auto& p = blp_.at(static_cast<std::size_t>(index));
  auto u = p.ln1(nx::add(queries, p.ca(queries, memory)));
  auto out = p.ln2(nx::add(p.mlp(u), u));
  return {out, p.heads.box(out), p.heads.cls(out)};
}

template <typename T>
Tensor<T> Detector<T>::apply_msab(const Msab& block, const Tensor<T>& q, std::span<const unsigned char> active) const {
  return block.mlp(block.ln(nx::add(q, block.sa(q, q, active))));
}

template <typename T>
LayerStep<T> Detector<T>::dp_layer(int index, const Tensor<T>& queries, const Tensor<T>& memory,
                                   std::span<const unsigned char> active) const {
  const auto& p = dp_.at(static_cast<std::size_t>(index));
  Tensor<T> q = queries;
  if (config_.dp_order == DpOrder::kCrossFirst) {
    q = p.ln(nx::add(q, p.ca(q, memory)));
    for (const auto& b : p.blocks) q = apply_msab(b, q, active);
  } else {
    for (const auto& b : p.blocks) q = apply_msab(b, q, active);
    q = p.ln(nx::add(q, p.ca(q, memory)));
  }
  return {q, p.heads.box(q), p.heads.cls(q)};
}

template <typename T>
std::vector<LayerOutput<T>> Detector<T>::decode(const Tensor<T>& queries, const Tensor<T>& box_logits,
                                                const Tensor<T>& memory, std::span<const unsigned char> active) const {
  std::vector<LayerOutput<T>> layers;
  Tensor<T> q = queries;
  Tensor<T> logits = box_logits;
  for (int i = 0; i < config_.t1; ++i) {
    auto step = blp_layer(i, q, memory);
    logits = nx::add(logits, step.box_offsets);
    layers.push_back({Stage::kBoxLocating, i, step.class_logits, logits, nx::sigmoid(logits)});
    q = step.features;
  }
  if (config_.stop_gradient_queries) {
    q = nx::stop_gradient(q);
    logits = nx::stop_gradient(logits);
  }
  for (int i = 0; i < config_.t2; ++i) {
    auto step = dp_layer(i, q, memory, active);
    logits = nx::add(logits, step.box_offsets);
    layers.push_back({Stage::kDeduplication, i, step.class_logits, logits, nx::sigmoid(logits)});
    q = step.features;
  }
  return layers;
}

template <typename T>
std::vector<ImageResult<T>> Detector<T>::forward(const std::vector<std::span<const float>>& images, bool training,
                                                 std::optional<double> threshold) const {
  std::vector<EncoderOutput<T>> encoded;
  encoded.reserve(images.size());
  for (const auto& img : images) encoded.push_back(encode(img));
  auto batch = flet_select(encoded, training, threshold);
  std::vector<ImageResult<T>> out;
  out.reserve(images.size());
  for (std::size_t b = 0; b < images.size(); ++b) {
    ImageResult<T> r;
    r.encoder = std::move(encoded[b]);
    r.queries = std::move(batch.images[b]);
    r.layers = decode(r.queries.features, r.queries.box_logits, r.encoder.tokens, r.queries.active);
    out.push_back(std::move(r));
  }
  return out;
}

template <typename T>
std::vector<Detection> Detector<T>::detections(const ImageResult<T>& result) const {
  std::vector<Detection> out;
  if (result.layers.empty()) return out;
  const auto& last = result.layers.back();
  const int nc = last.class_logits.cols();
  const auto lv = last.class_logits.values();
  const auto bv = last.boxes.values();
  for (int q = 0; q < last.class_logits.rows(); ++q) {
    if (!result.queries.active[q]) continue;
    int best = 0;
    for (int k = 1; k < nc; ++k)
      if (lv[q * nc + k] > lv[q * nc + best]) best = k;
    Detection d;
    d.box = BoxCxCyWH::clamped(bv[q * 4], bv[q * 4 + 1], bv[q * 4 + 2], bv[q * 4 + 3]);
    d.cls = best;
    d.score = 1.0 / (1.0 + std::exp(-static_cast<double>(lv[q * nc + best])));
    d.query = q;
    out.push_back(d);
  }
  return out;
}

template <typename T>
losses::LossBreakdown<T> Detector<T>::loss(const ImageResult<T>& result, const assignment::GroundTruth& gts) const {
  std::vector<losses::StagePrediction<T>> preds;
  preds.push_back({Stage::kEncoder, 0, result.encoder.class_logits, result.encoder.init_boxes, {}});
  for (const auto& l : result.layers) preds.push_back({l.stage, l.layer, l.class_logits, l.boxes, result.queries.active});
  return losses::total_loss(preds, gts, config_.loss_settings());
}

template struct EncoderOutput<float>;
template struct EncoderOutput<double>;
template class Detector<float>;
template class Detector<double>;

}  // namespace dsdet::model
