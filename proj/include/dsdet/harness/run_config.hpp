// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <stdexcept>
#include <string>

#include "json.hpp"

#include "dsdet/model/config.hpp"

namespace dsdet::harness {

// Errors caused by user input (bad files, bad configs); the CLI exits with 1.
class UserError : public std::runtime_error {
 public:
  UserError(std::string code, const std::string& what) : std::runtime_error(what), code_(std::move(code)) {}
  const std::string& code() const { return code_; }

 private:
  std::string code_;
};

struct OptimizerConfig {
  double lr = 1e-3;
  double weight_decay = 1e-4;
  double clip_norm = 0.1;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  int warmup = 100;               // linear warmup iterations
  double lr_drop_fraction = 0.8;  // lr is multiplied by 0.1 after this fraction of the run

  void validate() const;
};

struct RunConfig {
  model::DetectorConfig detector;
  OptimizerConfig optimizer;
  int iterations = 3000;
  int batch_size = 4;
  std::filesystem::path train_data;
  std::filesystem::path eval_data;  // optional
  std::filesystem::path output_dir = "run";
  std::string preset = "default";
  int eval_every = 0;  // 0: evaluate only at the end
  int checkpoint_every = 0;
  bool nms = false;  // class-wise NMS on final detections at evaluation
  double nms_iou = 0.5;

  // Throws UserError.
  void validate() const;
  double lr_at(int iteration) const;
};

void to_json(nlohmann::json& j, const OptimizerConfig& c);
void from_json(const nlohmann::json& j, OptimizerConfig& c);
void to_json(nlohmann::json& j, const RunConfig& c);
void from_json(const nlohmann::json& j, RunConfig& c);

// Relative dataset and output paths resolve against the file's directory.
RunConfig load_run_config(const std::filesystem::path& path);

nlohmann::json read_json_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, const std::string& text);

}  // namespace dsdet::harness
