// SPDX-License-Identifier: Apache-2.0

#include "dsdet/evalkit/flops.hpp"

#include <stdexcept>

namespace dsdet::evalkit {

nlohmann::json FlopsBreakdown::to_json() const {
  return {{"ca", ca},   {"memory", memory},       {"sa", sa},           {"sa_proj", sa_proj}, {"mlp", mlp},
          {"heads", heads}, {"blp_total", blp_total}, {"dp_total", dp_total}, {"total", total}};
}

FlopsBreakdown decoder_flops(int n_queries, const model::DetectorConfig& config) {
  if (n_queries < 1) throw std::invalid_argument("decoder_flops: N must be >= 1");
  const double n = n_queries;
  const double c = config.channels;
  const double m = config.num_tokens();
  const double h = config.mlp_hidden;
  const double k = config.num_classes;
  const double t1 = config.t1;
  const double t2 = config.t2;
  const double lam = config.lambda;

  const double ca_one = 4 * n * c * c + 4 * n * m * c;
  const double mem_one = 4 * m * c * c;
  const double sa_one = 4 * n * n * c;
  const double sa_proj_one = 8 * n * c * c;
  const double mlp_one = 4 * n * c * h;
  const double heads_one = 2 * n * c * k + 2 * n * c * c + 8 * n * c;

  FlopsBreakdown f;
  f.ca = (t1 + t2) * ca_one;
  f.memory = (t1 + t2) * mem_one;
  f.sa = t2 * lam * sa_one;
  f.sa_proj = t2 * lam * sa_proj_one;
  f.mlp = (t1 + t2 * lam) * mlp_one;
  f.heads = (t1 + t2) * heads_one;
  f.blp_total = t1 * (ca_one + mem_one + mlp_one + heads_one);
  f.dp_total = t2 * (ca_one + mem_one + lam * (sa_one + sa_proj_one + mlp_one) + heads_one);
  f.total = f.blp_total + f.dp_total;
  return f;
}

}  // namespace dsdet::evalkit
