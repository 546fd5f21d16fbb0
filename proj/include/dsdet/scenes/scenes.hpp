// SPDX-License-Identifier: Apache-2.0
//
// Procedural scenes: axis-aligned rectangles whose fill pattern encodes the
// class, on a noisy background, stored as a token-major pixel grid.

#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

#include "dsdet/assignment/matching.hpp"
#include "dsdet/geometry/box.hpp"

namespace dsdet::scenes {

using geometry::BoxCxCyWH;

inline constexpr int kNumPatterns = 5;

struct Object {
  int cls = 0;
  BoxCxCyWH box;
  friend bool operator==(const Object&, const Object&) = default;
};

struct Scene {
  std::uint64_t id = 0;
  int grid = 16;
  int patch = 4;
  // grid * grid tokens, each patch * patch pixels in row-major order.
  std::vector<float> image;
  std::vector<Object> objects;

  int side() const { return grid * patch; }
  double image_h() const { return side(); }
  double image_w() const { return side(); }
  float pixel(int x, int y) const;
  assignment::GroundTruth ground_truth() const;

  friend bool operator==(const Scene&, const Scene&) = default;
};

struct DatasetSpec {
  int n_scenes = 100;
  int grid = 16;
  int patch = 4;
  int num_classes = kNumPatterns;
  int min_objects = 1;
  int max_objects = 10;
  // Relative weight of each count in [min_objects, max_objects]; empty = uniform.
  std::vector<double> count_weights;
  // Object side lengths in pixels.
  int min_side = 6;
  int max_side = 18;
  double max_iou = 0.3;
  double noise = 0.1;  // std of additive Gaussian pixel noise
  int max_retries = 2000;
  std::uint64_t seed = 0;

  // Throws std::invalid_argument.
  void validate() const;
  std::vector<double> normalized_weights() const;
};

void to_json(nlohmann::json& j, const DatasetSpec& s);
void from_json(const nlohmann::json& j, DatasetSpec& s);

class GenerationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ParseError : public std::runtime_error {
 public:
  ParseError(std::size_t line, const std::string& what);
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

// Intensity of class `cls` at pixel offset (dx, dy) from the object's corner.
float pattern_value(int cls, int dx, int dy);

// Pure function of (spec, index). Objects are painted largest first so no
// object is completely hidden by a larger one.
Scene generate_scene(const DatasetSpec& spec, std::uint64_t index);
std::vector<Scene> generate(const DatasetSpec& spec);

// Nearest-template class of the pixels inside `box` (squared error against
// every class pattern rendered at the same place).
int classify_region(const Scene& scene, const BoxCxCyWH& box, int num_classes = kNumPatterns);

std::string to_line(const Scene& scene);
// Throws ParseError(line_number, ...) on malformed input.
Scene from_line(const std::string& line, std::size_t line_number = 1);

void save_jsonl(const std::filesystem::path& path, std::span<const Scene> scenes);
std::vector<Scene> load_jsonl(const std::filesystem::path& path);

std::string base64_encode(std::span<const std::uint8_t> bytes);
// Throws std::invalid_argument on malformed input.
std::vector<std::uint8_t> base64_decode(const std::string& text);

}  // namespace dsdet::scenes
