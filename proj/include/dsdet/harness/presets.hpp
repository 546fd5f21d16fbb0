// SPDX-License-Identifier: Apache-2.0
//
// Ablation presets. Each preset expands into named variants of a base run;
// every variant trains under the base run's budget.

#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "dsdet/harness/run_config.hpp"
#include "dsdet/scenes/scenes.hpp"

namespace dsdet::harness {

struct Variant {
  std::string name;
  RunConfig config;
};

std::vector<std::string> preset_names();

// The synthetic scene distribution used by the default runs: 5 classes,
// 1-10 objects per scene.
scenes::DatasetSpec standard_dataset_spec(int n_scenes, std::uint64_t seed);

// Throws UserError("unknown_preset", ...).
std::vector<Variant> preset_variants(const std::string& preset, const RunConfig& base);

struct AblationRow {
  std::string preset;
  std::string variant;
  std::uint64_t seed = 0;
  double ap = 0.0;
  double ap50 = 0.0;
  double ap75 = 0.0;
  double duplicate_rate = 0.0;
  double mean_query_count = 0.0;
  double train_seconds = 0.0;
};

// Trains every variant once per seed (variants differing only in evaluation
// settings share one trained model) and evaluates on eval_set.
std::vector<AblationRow> run_ablation(const std::string& preset, const RunConfig& base,
                                      std::span<const std::uint64_t> seeds, std::span<const scenes::Scene> train_set,
                                      std::span<const scenes::Scene> eval_set,
                                      const std::function<void(const std::string&)>& log = {});

std::string ablation_csv(std::span<const AblationRow> rows);

}  // namespace dsdet::harness
