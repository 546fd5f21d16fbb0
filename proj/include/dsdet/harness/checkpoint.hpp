// SPDX-License-Identifier: Apache-2.0
//
// Checkpoint directory layout:
//   manifest.json   parameter names/shapes in blob order, config, config hash,
//                   iteration
//   params.bin      little-endian float32 values, concatenated in manifest order
//   optimizer.bin   optional Adam moments (float64, m then v) for resuming

#pragma once

#include <filesystem>
#include <optional>
#include <vector>

#include "dsdet/harness/optimizer.hpp"
#include "dsdet/model/detector.hpp"

namespace dsdet::harness {

struct OptimizerState {
  int steps = 0;
  std::vector<double> m;
  std::vector<double> v;
};

template <typename T>
void save_checkpoint(const std::filesystem::path& dir, const model::Detector<T>& detector, int iteration,
                     const OptimizerState* optimizer = nullptr);

struct CheckpointInfo {
  model::DetectorConfig config;
  int iteration = 0;
  std::optional<OptimizerState> optimizer;
};

// Reads the manifest and verifies that the stored hash matches the stored
// config. Throws UserError("checkpoint_error", ...).
CheckpointInfo read_checkpoint_info(const std::filesystem::path& dir);

// Copies parameters into `detector`. Fails when the checkpoint's config hash
// differs from the detector's or any name/shape disagrees.
template <typename T>
CheckpointInfo load_checkpoint(const std::filesystem::path& dir, model::Detector<T>& detector);

// Builds a detector from the stored config and loads it.
template <typename T>
model::Detector<T> load_detector(const std::filesystem::path& dir, CheckpointInfo* info = nullptr);

bool is_checkpoint_dir(const std::filesystem::path& path);

}  // namespace dsdet::harness
