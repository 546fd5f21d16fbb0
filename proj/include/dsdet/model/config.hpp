// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>

#include "json.hpp"

#include "dsdet/assignment/matching.hpp"
#include "dsdet/losses/losses.hpp"
#include "dsdet/numerics/ops.hpp"

namespace dsdet::model {

// Order of the blocks inside a deduplication layer.
enum class DpOrder { kCrossFirst, kSelfFirst };

// How decoder queries are drawn from encoder tokens.
enum class QuerySelection {
  kThreshold,  // score >= S, capped by the pool size while training
  kFixedTopN,  // always the top `fixed_queries` tokens
};

struct DetectorConfig {
  // Scene / encoder geometry. Each token covers patch x patch pixels of one
  // intensity channel.
  int grid = 16;
  int patch = 4;
  int embed_window = 3;  // token neighborhood seen by the patch embedding
  int embed_hidden = 64;  // hidden width of the two-layer patch embedding; 0 = single linear map
  int channels = 32;
  int heads = 4;
  int mlp_hidden = 64;
  int encoder_layers = 1;
  int num_classes = 5;

  // Decoder.
  int t1 = 4;      // box-locating layers
  int t2 = 2;      // deduplication layers
  int lambda = 2;  // self-attention blocks per deduplication layer
  DpOrder dp_order = DpOrder::kCrossFirst;
  bool stop_gradient_queries = true;

  // Query selection.
  QuerySelection selection = QuerySelection::kThreshold;
  double threshold = 0.02;
  int pool_cap = 128;
  int fixed_queries = 128;

  // Assignment / loss.
  int k = 6;
  assignment::CostWeights blp_cost = assignment::CostWeights::box_locating();
  assignment::CostWeights dp_cost = assignment::CostWeights::deduplication();
  losses::LossWeights loss;
  losses::PoCooParams pocoo;
  double target_mixing = 0.25;
  losses::TargetMode target_mode = losses::TargetMode::kIouAware;

  // Parameterization details.
  numerics::Activation activation = numerics::Activation::kGelu;
  double init_offset_range = 0.25;  // max center offset of an initial box from its token
  double class_prior = 0.01;        // initial sigmoid score of every class logit
  double ln_eps = 1e-5;

  std::uint64_t seed = 0;

  int num_tokens() const { return grid * grid; }
  int channels_in() const { return patch * patch; }
  int image_side() const { return grid * patch; }

  // Throws std::invalid_argument describing the first violated constraint.
  void validate() const;

  losses::LossSettings loss_settings() const;

  // Stable 64-bit FNV-1a hash of the canonical JSON form, as hex.
  std::string hash() const;
};

void to_json(nlohmann::json& j, const DetectorConfig& c);
void from_json(const nlohmann::json& j, DetectorConfig& c);

}  // namespace dsdet::model
