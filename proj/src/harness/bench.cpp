// SPDX-License-Identifier: Apache-2.0

#include "dsdet/harness/bench.hpp"

#include <chrono>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include "dsdet/harness/run_config.hpp"
#include "dsdet/model/baseline_decoder.hpp"
#include "dsdet/model/detector.hpp"

namespace dsdet::harness {

nlohmann::json BenchReport::to_json() const {
  return {{"n_queries", n_queries},
          {"memory_tokens", memory_tokens},
          {"channels", channels},
          {"iterations", iterations},
          {"baseline_layers", baseline_layers},
          {"add_ms", add_ms},
          {"add_std_ms", add_std_ms},
          {"baseline_ms", baseline_ms},
          {"baseline_std_ms", baseline_std_ms},
          {"ratio", ratio}};
}

std::string BenchReport::to_text() const {
  std::ostringstream os;
  os.precision(4);
  os << std::fixed;
  os << "N=" << n_queries << " M=" << memory_tokens << " C=" << channels << " iterations=" << iterations << '\n';
  os << "add_decoder_ms=" << add_ms << " std=" << add_std_ms << '\n';
  os << "baseline_decoder_ms=" << baseline_ms << " std=" << baseline_std_ms << " layers=" << baseline_layers << '\n';
  os << "ratio=" << ratio << " speedup_percent=" << (ratio - 1.0) * 100.0 << '\n';
  return os.str();
}

BenchReport bench_decoder(const model::DetectorConfig& config, int n_queries, int iterations, int warmup) {
  if (n_queries < 1 || iterations < 1 || warmup < 0) throw UserError("invalid_argument", "bench: bad sizes");
  model::Detector<float> add(config);
  model::BaselineDecoder<float> base(config, 6);
  const int c = config.channels;
  const int m = config.num_tokens();

  numerics::Rng rng(config.seed + 17);
  auto random = [&](int rows, int cols, double scale) {
    std::vector<float> v(static_cast<std::size_t>(rows) * cols);
    for (auto& x : v) x = static_cast<float>(scale * rng.normal());
    return numerics::Tensor<float>({rows, cols}, std::move(v));
  };
  const auto queries = random(n_queries, c, 1.0);
  const auto memory = random(m, c, 1.0);
  const auto boxes = random(n_queries, 4, 1.0);
  const std::vector<unsigned char> active(static_cast<std::size_t>(n_queries), 1);

  numerics::NoGradGuard no_grad;
  using clock = std::chrono::steady_clock;
  std::vector<double> ta, tb;
  volatile float sink = 0;
  for (int i = 0; i < warmup + iterations; ++i) {
    const auto a0 = clock::now();
    const auto ra = add.decode(queries, boxes, memory, active);
    const auto a1 = clock::now();
    const auto rb = base.decode(queries, boxes, memory, active);
    const auto b1 = clock::now();
    sink = sink + ra.back().boxes.values()[0] + rb.back().boxes.values()[0];
    if (i >= warmup) {
      ta.push_back(std::chrono::duration<double, std::milli>(a1 - a0).count());
      tb.push_back(std::chrono::duration<double, std::milli>(b1 - a1).count());
    }
  }
  auto stats = [](const std::vector<double>& v) {
    double mean = 0;
    for (double x : v) mean += x;
    mean /= static_cast<double>(v.size());
    double var = 0;
    for (double x : v) var += (x - mean) * (x - mean);
    return std::make_pair(mean, std::sqrt(var / static_cast<double>(v.size())));
  };
  BenchReport r;
  r.n_queries = n_queries;
  r.memory_tokens = m;
  r.channels = c;
  r.iterations = iterations;
  r.baseline_layers = base.layers();
  std::tie(r.add_ms, r.add_std_ms) = stats(ta);
  std::tie(r.baseline_ms, r.baseline_std_ms) = stats(tb);
  r.ratio = r.baseline_ms / r.add_ms;
  return r;
}

}  // namespace dsdet::harness
