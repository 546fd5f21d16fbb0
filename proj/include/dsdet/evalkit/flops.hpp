// SPDX-License-Identifier: Apache-2.0
//
// Closed-form decoder cost. A multiply-add counts as 2 FLOPs; normalization,
// activations and softmax are not counted.

#pragma once

#include "json.hpp"

#include "dsdet/model/config.hpp"

namespace dsdet::evalkit {

struct FlopsBreakdown {
  // Cross-attention query side: q/out projections 4NC^2 plus scores and
  // weighted sum 4NMC, per CA block. Linear in N.
  double ca = 0.0;
  // Key/value projections of the encoder memory, 4MC^2 per CA block.
  double memory = 0.0;
  // Self-attention scores and weighted sum, 4N^2C per SA block.
  double sa = 0.0;
  // Self-attention q/k/v/out projections, 8NC^2 per SA block.
  double sa_proj = 0.0;
  // Feed-forward blocks, 4NCH each.
  double mlp = 0.0;
  // Class head 2NC*classes plus box head 2NC^2 + 8NC, per layer.
  double heads = 0.0;

  double blp_total = 0.0;
  double dp_total = 0.0;
  double total = 0.0;

  nlohmann::json to_json() const;
};

// Throws std::invalid_argument for n < 1.
FlopsBreakdown decoder_flops(int n_queries, const model::DetectorConfig& config);

}  // namespace dsdet::evalkit
