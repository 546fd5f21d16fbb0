// SPDX-License-Identifier: Apache-2.0

#include "dsdet/harness/run_config.hpp"

#include <fstream>
#include <sstream>

namespace dsdet::harness {

using nlohmann::json;

void OptimizerConfig::validate() const {
  auto require = [](bool ok, const std::string& what) {
    if (!ok) throw UserError("invalid_config", "optimizer: " + what);
  };
  require(lr > 0.0, "lr must be positive");
  require(weight_decay >= 0.0, "weight_decay must be >= 0");
  require(clip_norm > 0.0, "clip_norm must be positive");
  require(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0, "betas must lie in [0, 1)");
  require(eps > 0.0, "eps must be positive");
  require(warmup >= 0, "warmup must be >= 0");
  require(lr_drop_fraction > 0.0 && lr_drop_fraction <= 1.0, "lr_drop_fraction must lie in (0, 1]");
}

void RunConfig::validate() const {
  try {
    detector.validate();
  } catch (const std::invalid_argument& e) {
    throw UserError("invalid_config", e.what());
  }
  optimizer.validate();
  if (iterations < 0) throw UserError("invalid_config", "iterations must be >= 0");
  if (batch_size < 1) throw UserError("invalid_config", "batch_size must be >= 1");
  if (eval_every < 0 || checkpoint_every < 0) throw UserError("invalid_config", "eval_every/checkpoint_every must be >= 0");
  if (!(nms_iou > 0.0 && nms_iou <= 1.0)) throw UserError("invalid_config", "nms_iou must lie in (0, 1]");
}

double RunConfig::lr_at(int iteration) const {
  double lr = optimizer.lr;
  if (optimizer.warmup > 0 && iteration < optimizer.warmup) lr *= static_cast<double>(iteration + 1) / optimizer.warmup;
  if (iteration >= static_cast<int>(optimizer.lr_drop_fraction * iterations)) lr *= 0.1;
  return lr;
}

void to_json(json& j, const OptimizerConfig& c) {
  j = json{{"lr", c.lr},       {"weight_decay", c.weight_decay}, {"clip_norm", c.clip_norm},
           {"beta1", c.beta1}, {"beta2", c.beta2},               {"eps", c.eps},
           {"warmup", c.warmup}, {"lr_drop_fraction", c.lr_drop_fraction}};
}

void from_json(const json& j, OptimizerConfig& c) {
  c.lr = j.value("lr", c.lr);
  c.weight_decay = j.value("weight_decay", c.weight_decay);
  c.clip_norm = j.value("clip_norm", c.clip_norm);
  c.beta1 = j.value("beta1", c.beta1);
  c.beta2 = j.value("beta2", c.beta2);
  c.eps = j.value("eps", c.eps);
  c.warmup = j.value("warmup", c.warmup);
  c.lr_drop_fraction = j.value("lr_drop_fraction", c.lr_drop_fraction);
}

void to_json(json& j, const RunConfig& c) {
  j = json{{"detector", c.detector},
           {"optimizer", c.optimizer},
           {"iterations", c.iterations},
           {"batch_size", c.batch_size},
           {"train_data", c.train_data.string()},
           {"eval_data", c.eval_data.string()},
           {"output_dir", c.output_dir.string()},
           {"preset", c.preset},
           {"eval_every", c.eval_every},
           {"checkpoint_every", c.checkpoint_every},
           {"nms", c.nms},
           {"nms_iou", c.nms_iou}};
}

void from_json(const json& j, RunConfig& c) {
  if (j.contains("detector")) c.detector = j.at("detector").get<model::DetectorConfig>();
  if (j.contains("optimizer")) c.optimizer = j.at("optimizer").get<OptimizerConfig>();
  c.iterations = j.value("iterations", c.iterations);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.train_data = j.value("train_data", c.train_data.string());
  c.eval_data = j.value("eval_data", c.eval_data.string());
  c.output_dir = j.value("output_dir", c.output_dir.string());
  c.preset = j.value("preset", c.preset);
  c.eval_every = j.value("eval_every", c.eval_every);
  c.checkpoint_every = j.value("checkpoint_every", c.checkpoint_every);
  c.nms = j.value("nms", c.nms);
  c.nms_iou = j.value("nms_iou", c.nms_iou);
}

json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw UserError("io_error", "cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    return json::parse(ss.str());
  } catch (const json::exception& e) {
    throw UserError("parse_error", path.string() + ": " + e.what());
  }
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw UserError("io_error", "cannot open " + path.string() + " for writing");
  out << text;
  if (!out) throw UserError("io_error", "write failed: " + path.string());
}

RunConfig load_run_config(const std::filesystem::path& path) {
  const json j = read_json_file(path);
  RunConfig c;
  try {
    c = j.get<RunConfig>();
  } catch (const json::exception& e) {
    throw UserError("invalid_config", path.string() + ": " + e.what());
  } catch (const std::invalid_argument& e) {
    throw UserError("invalid_config", path.string() + ": " + e.what());
  }
  const auto base = path.parent_path();
  auto resolve = [&](std::filesystem::path& p) {
    if (!p.empty() && p.is_relative()) p = base / p;
  };
  resolve(c.train_data);
  resolve(c.eval_data);
  resolve(c.output_dir);
  c.validate();
  return c;
}

}  // namespace dsdet::harness
