// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "dsdet/evalkit/metrics.hpp"
#include "dsdet/harness/run_config.hpp"
#include "dsdet/model/detector.hpp"
#include "dsdet/scenes/scenes.hpp"

namespace dsdet::harness {

struct EvalOptions {
  std::optional<double> threshold;  // overrides the config's S
  bool nms = false;
  double nms_iou = 0.5;
};

// Class-wise greedy NMS.
std::vector<evalkit::ScoredBox> class_nms(const std::vector<evalkit::ScoredBox>& boxes, double iou_threshold);

// Inference, one scene at a time.
template <typename T>
std::vector<evalkit::ImageRecord> predict(const model::Detector<T>& detector, std::span<const scenes::Scene> data,
                                          const EvalOptions& options = {});

template <typename T>
evalkit::EvalReport evaluate_model(const model::Detector<T>& detector, std::span<const scenes::Scene> data,
                                   const EvalOptions& options = {});

// Raised when the loss stops being finite; carries the offending batch.
class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct TrainOptions {
  bool resume = false;       // continue from <output_dir>/checkpoint when present
  bool write_files = true;   // metrics.csv, checkpoint, eval_report.json
  std::function<void(const std::string&)> log;  // progress lines
};

struct TrainOutcome {
  model::Detector<float> detector;
  int start_iteration = 0;
  int iterations = 0;
  double last_loss = 0.0;
  std::optional<evalkit::EvalReport> eval;
  double seconds = 0.0;
};

std::vector<std::size_t> epoch_permutation(std::uint64_t seed, std::size_t n_scenes, std::size_t epoch);

// Scene index used for batch slot `global` (iteration * batch + slot):
// an epoch-wise permutation seeded by the detector seed.
std::size_t batch_scene_index(std::uint64_t seed, std::size_t n_scenes, std::size_t global);

TrainOutcome train(const RunConfig& config, std::span<const scenes::Scene> train_set,
                   std::span<const scenes::Scene> eval_set, const TrainOptions& options = {});

inline std::filesystem::path checkpoint_dir(const RunConfig& config) { return config.output_dir / "checkpoint"; }

}  // namespace dsdet::harness
