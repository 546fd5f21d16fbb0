// SPDX-License-Identifier: Apache-2.0
//
// Single-query detector: a small patch encoder proposes per-token scores and
// initial boxes, thresholded tokens become decoder queries, and the decoder
// runs box-locating layers (cross-attention only) followed by deduplication
// layers (cross-attention then masked self-attention).

#pragma once

#include <array>
#include <optional>
#include <span>
#include <vector>

#include "dsdet/geometry/box.hpp"
#include "dsdet/losses/losses.hpp"
#include "dsdet/model/config.hpp"
#include "dsdet/numerics/nn.hpp"

namespace dsdet::model {

using geometry::BoxCxCyWH;
using losses::Stage;
using numerics::Tensor;

template <typename T>
struct EncoderOutput {
  Tensor<T> tokens;                              // [M x C]
  std::vector<std::array<double, 2>> positions;  // normalized (x, y) token centers
  Tensor<T> class_logits;                        // [M x num_classes]
  Tensor<T> init_box_logits;                     // [M x 4] raw head output
  Tensor<T> init_boxes;                          // [M x 4] decoded (cx, cy, w, h)

  // Max-over-classes sigmoid score per token.
  std::vector<double> scores() const;
};

// Token choice for one image after thresholding, capping and alignment.
// Active tokens come first in descending score order, placeholders follow.
struct TokenSelection {
  std::vector<int> tokens;
  std::vector<unsigned char> active;
  std::vector<double> scores;
  int num_active = 0;
};

// scores: one vector per image. cap limits the active pool; fixed_n > 0
// switches to "always take the top fixed_n tokens".
std::vector<TokenSelection> select_tokens(const std::vector<std::vector<double>>& scores, double threshold, int cap,
                                          int fixed_n = 0);

template <typename T>
struct ImageQueries {
  Tensor<T> features;    // [Nq x C]
  Tensor<T> box_logits;  // [Nq x 4] inverse-sigmoid of the initial boxes, detached
  std::vector<BoxCxCyWH> boxes;
  std::vector<unsigned char> active;
  std::vector<int> source_token;
  std::vector<double> scores;
  int num_active = 0;
};

template <typename T>
struct QueryBatch {
  int n_queries = 0;
  std::vector<ImageQueries<T>> images;
};

template <typename T>
struct LayerStep {
  Tensor<T> features;      // [Nq x C]
  Tensor<T> box_offsets;   // [Nq x 4] in logit space
  Tensor<T> class_logits;  // [Nq x num_classes]
};

template <typename T>
struct LayerOutput {
  Stage stage = Stage::kBoxLocating;
  int layer = 0;
  Tensor<T> class_logits;  // [Nq x num_classes]
  Tensor<T> box_logits;    // [Nq x 4]
  Tensor<T> boxes;         // [Nq x 4] sigmoid(box_logits)
};

template <typename T>
struct ImageResult {
  EncoderOutput<T> encoder;
  ImageQueries<T> queries;
  std::vector<LayerOutput<T>> layers;
};

struct Detection {
  BoxCxCyWH box;
  int cls = 0;
  double score = 0.0;
  int query = 0;
};

template <typename T>
class Detector {
 public:
  // Throws std::invalid_argument for an invalid config.
  explicit Detector(DetectorConfig config);

  const DetectorConfig& config() const { return config_; }
  numerics::ParameterStore<T>& parameters() { return store_; }
  const numerics::ParameterStore<T>& parameters() const { return store_; }

  // image: grid * grid * patch * patch values, token-major.
  EncoderOutput<T> encode(std::span<const float> image) const;

  // threshold overrides config().threshold. The pool cap applies only while
  // training; at inference every token above the threshold is kept.
  QueryBatch<T> flet_select(const std::vector<EncoderOutput<T>>& encoded, bool training,
                            std::optional<double> threshold = std::nullopt) const;

  LayerStep<T> blp_layer(int index, const Tensor<T>& queries, const Tensor<T>& memory) const;
  LayerStep<T> dp_layer(int index, const Tensor<T>& queries, const Tensor<T>& memory,
                        std::span<const unsigned char> active) const;

  // Runs all decoder layers from the given queries, with the stop-gradient
  // boundary between the stages when enabled.
  std::vector<LayerOutput<T>> decode(const Tensor<T>& queries, const Tensor<T>& box_logits, const Tensor<T>& memory,
                                     std::span<const unsigned char> active) const;

  std::vector<ImageResult<T>> forward(const std::vector<std::span<const float>>& images, bool training,
                                      std::optional<double> threshold = std::nullopt) const;

  // One detection per active query of the last layer (best class).
  std::vector<Detection> detections(const ImageResult<T>& result) const;

  // Encoder, every box-locating and every deduplication layer.
  losses::LossBreakdown<T> loss(const ImageResult<T>& result, const assignment::GroundTruth& gts) const;

 private:
  struct EncoderBlock {
    numerics::Attention<T> sa;
    numerics::LayerNorm<T> ln1;
    numerics::Mlp<T> mlp;
    numerics::LayerNorm<T> ln2;
  };
  struct Heads {
    numerics::Linear<T> cls;
    numerics::Mlp<T> box;
  };
  struct BlpParams {
    numerics::Attention<T> ca;
    numerics::LayerNorm<T> ln1;
    numerics::Mlp<T> mlp;
    numerics::LayerNorm<T> ln2;
    Heads heads;
  };
  struct Msab {
    numerics::Attention<T> sa;
    numerics::LayerNorm<T> ln;
    numerics::Mlp<T> mlp;
  };
  struct DpParams {
    numerics::Attention<T> ca;
    numerics::LayerNorm<T> ln;
    std::vector<Msab> blocks;
    Heads heads;
  };

  Heads make_heads(const std::string& name, numerics::Rng& rng);
  Tensor<T> apply_msab(const Msab& block, const Tensor<T>& q, std::span<const unsigned char> active) const;

  DetectorConfig config_;
  numerics::ParameterStore<T> store_;
  numerics::Linear<T> embed_;
  numerics::Mlp<T> stem_;
  Tensor<T> pos_enc_;    // [M x C], constant
  Tensor<T> positions_;  // [M x 2], constant
  std::vector<EncoderBlock> encoder_;
  numerics::Linear<T> enc_cls_;
  numerics::Mlp<T> enc_box_;
  std::vector<BlpParams> blp_;
  std::vector<DpParams> dp_;
};

// Sinusoidal 2-D positional encoding, [grid^2 x channels]: the first half of
// the channels encodes the column, the second half the row.
std::vector<double> positional_encoding(int grid, int channels);

// Patch-embedding input: for every token the concatenated pixels of its
// window x window token neighborhood, zero outside the image.
std::vector<double> neighborhood_features(std::span<const float> image, int grid, int patch, int window);

extern template class Detector<float>;
extern template class Detector<double>;

}  // namespace dsdet::model
