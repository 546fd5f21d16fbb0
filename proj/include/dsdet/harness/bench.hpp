// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>

#include "json.hpp"

#include "dsdet/model/config.hpp"

namespace dsdet::harness {

struct BenchReport {
  int n_queries = 0;
  int memory_tokens = 0;
  int channels = 0;
  int iterations = 0;
  int baseline_layers = 6;
  double add_ms = 0.0;
  double add_std_ms = 0.0;
  double baseline_ms = 0.0;
  double baseline_std_ms = 0.0;
  double ratio = 0.0;  // baseline_ms / add_ms

  nlohmann::json to_json() const;
  std::string to_text() const;
};

// Times decoder-only forward passes (no gradient tracking) on random
// queries and memory. The two decoders alternate within each iteration.
BenchReport bench_decoder(const model::DetectorConfig& config, int n_queries = 128, int iterations = 200,
                          int warmup = 20);

}  // namespace dsdet::harness
