// SPDX-License-Identifier: Apache-2.0

#include "dsdet/scenes/scenes.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>

#include "dsdet/numerics/nn.hpp"

namespace dsdet::scenes {

using nlohmann::json;

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

void require(bool ok, const std::string& what) {
  if (!ok) throw std::invalid_argument("invalid dataset spec: " + what);
}

std::size_t pixel_index(int grid, int patch, int x, int y) {
  const int tx = x / patch, ty = y / patch;
  const int px = x % patch, py = y % patch;
  return (static_cast<std::size_t>(ty * grid + tx) * patch + py) * patch + px;
}

struct PixelRect {
  int x0, y0, w, h;
};

PixelRect to_pixels(const BoxCxCyWH& b, int side) {
  const int x0 = static_cast<int>(std::lround((b.cx - 0.5 * b.w) * side));
  const int y0 = static_cast<int>(std::lround((b.cy - 0.5 * b.h) * side));
  const int w = static_cast<int>(std::lround(b.w * side));
  const int h = static_cast<int>(std::lround(b.h * side));
  return {std::clamp(x0, 0, side - 1), std::clamp(y0, 0, side - 1), std::max(1, w), std::max(1, h)};
}

}  // namespace

ParseError::ParseError(std::size_t line, const std::string& what)
    : std::runtime_error("line " + std::to_string(line) + ": " + what), line_(line) {}

float Scene::pixel(int x, int y) const { return image.at(pixel_index(grid, patch, x, y)); }

assignment::GroundTruth Scene::ground_truth() const {
  assignment::GroundTruth g;
  for (const auto& o : objects) {
    g.classes.push_back(o.cls);
    g.boxes.push_back(o.box);
  }
  return g;
}

void DatasetSpec::validate() const {
  require(n_scenes >= 0, "n_scenes must be >= 0");
  require(grid >= 2, "grid must be >= 2");
  require(patch >= 1, "patch must be >= 1");
  require(num_classes >= 1 && num_classes <= kNumPatterns, "num_classes must lie in [1, 5]");
  require(min_objects >= 0 && min_objects <= max_objects, "need 0 <= min_objects <= max_objects");
  require(count_weights.empty() || static_cast<int>(count_weights.size()) == max_objects - min_objects + 1,
          "count_weights needs one entry per object count");
  double total = 0;
  for (double w : count_weights) {
    require(w >= 0.0 && std::isfinite(w), "count_weights must be finite and nonnegative");
    total += w;
  }
  require(count_weights.empty() || total > 0.0, "count_weights must not all be zero");
  require(min_side >= 1 && min_side <= max_side, "need 1 <= min_side <= max_side");
  require(max_side <= grid * patch, "max_side exceeds the image");
  require(max_iou >= 0.0 && max_iou <= 1.0, "max_iou must lie in [0, 1]");
  require(noise >= 0.0 && std::isfinite(noise), "noise must be finite and nonnegative");
  require(max_retries >= 1, "max_retries must be >= 1");
}

std::vector<double> DatasetSpec::normalized_weights() const {
  const int n = max_objects - min_objects + 1;
  std::vector<double> w = count_weights.empty() ? std::vector<double>(static_cast<std::size_t>(n), 1.0) : count_weights;
  const double total = std::accumulate(w.begin(), w.end(), 0.0);
  for (auto& v : w) v /= total;
  return w;
}

void to_json(json& j, const DatasetSpec& s) {
  j = json{{"n_scenes", s.n_scenes},       {"grid", s.grid},         {"patch", s.patch},
           {"num_classes", s.num_classes}, {"min_objects", s.min_objects}, {"max_objects", s.max_objects},
           {"count_weights", s.count_weights}, {"min_side", s.min_side}, {"max_side", s.max_side},
           {"max_iou", s.max_iou},         {"noise", s.noise},       {"max_retries", s.max_retries},
           {"seed", s.seed}};
}

void from_json(const json& j, DatasetSpec& s) {
  s.n_scenes = j.value("n_scenes", s.n_scenes);
  s.grid = j.value("grid", s.grid);
  s.patch = j.value("patch", s.patch);
  s.num_classes = j.value("num_classes", s.num_classes);
  s.min_objects = j.value("min_objects", s.min_objects);
  s.max_objects = j.value("max_objects", s.max_objects);
  s.count_weights = j.value("count_weights", s.count_weights);
  s.min_side = j.value("min_side", s.min_side);
  s.max_side = j.value("max_side", s.max_side);
  s.max_iou = j.value("max_iou", s.max_iou);
  s.noise = j.value("noise", s.noise);
  s.max_retries = j.value("max_retries", s.max_retries);
  s.seed = j.value("seed", s.seed);
}

float pattern_value(int cls, int dx, int dy) {
  constexpr float kOn = 1.0f;
  constexpr float kOff = 0.3f;
  switch (cls) {
    case 0: return kOn;
    case 1: return (dy / 2) % 2 == 0 ? kOn : kOff;
    case 2: return (dx / 2) % 2 == 0 ? kOn : kOff;
    case 3: return (dx / 2 + dy / 2) % 2 == 0 ? kOn : kOff;
    case 4: return ((dx + dy) / 2) % 2 == 0 ? kOn : kOff;
    default: throw std::invalid_argument("pattern_value: unknown class");
  }
}

Scene generate_scene(const DatasetSpec& spec, std::uint64_t index) {
  spec.validate();
  numerics::Rng rng(splitmix64(spec.seed ^ splitmix64(index + 1)));
  const int side = spec.grid * spec.patch;

  const auto weights = spec.normalized_weights();
  const double u = rng.uniform();
  int count = spec.max_objects;
  double acc = 0.0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    acc += weights[i];
    if (u < acc) {
      count = spec.min_objects + static_cast<int>(i);
      break;
    }
  }

  Scene scene;
  scene.id = index;
  scene.grid = spec.grid;
  scene.patch = spec.patch;
  std::vector<PixelRect> rects;
  const double inv = 1.0 / side;
  for (int n = 0; n < count; ++n) {
    bool placed = false;
    for (int attempt = 0; attempt < spec.max_retries && !placed; ++attempt) {
      const int w = spec.min_side + static_cast<int>(rng.below(static_cast<std::uint64_t>(spec.max_side - spec.min_side + 1)));
      const int h = spec.min_side + static_cast<int>(rng.below(static_cast<std::uint64_t>(spec.max_side - spec.min_side + 1)));
      const int x0 = static_cast<int>(rng.below(static_cast<std::uint64_t>(side - w + 1)));
      const int y0 = static_cast<int>(rng.below(static_cast<std::uint64_t>(side - h + 1)));
      const geometry::BoxXYXY cand{x0 * inv, y0 * inv, (x0 + w) * inv, (y0 + h) * inv};
      bool ok = true;
      for (const auto& o : scene.objects)
        if (geometry::iou(cand, o.box.to_xyxy()) > spec.max_iou) {
          ok = false;
          break;
        }
      if (!ok) continue;
      Object obj;
      obj.box = {(x0 + 0.5 * w) * inv, (y0 + 0.5 * h) * inv, w * inv, h * inv};
      scene.objects.push_back(obj);
      rects.push_back({x0, y0, w, h});
      placed = true;
    }
    if (!placed)
      throw GenerationError("could not place object " + std::to_string(n + 1) + " of " + std::to_string(count) +
                            " in scene " + std::to_string(index) + " after " + std::to_string(spec.max_retries) +
                            " attempts");
  }
  for (auto& o : scene.objects) o.cls = static_cast<int>(rng.below(static_cast<std::uint64_t>(spec.num_classes)));

  scene.image.assign(static_cast<std::size_t>(side) * side, 0.0f);
  std::vector<std::size_t> order(rects.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return rects[a].w * rects[a].h > rects[b].w * rects[b].h; });
  for (std::size_t k : order) {
    const auto& r = rects[k];
    for (int y = r.y0; y < r.y0 + r.h; ++y)
      for (int x = r.x0; x < r.x0 + r.w; ++x)
        scene.image[pixel_index(spec.grid, spec.patch, x, y)] = pattern_value(scene.objects[k].cls, x - r.x0, y - r.y0);
  }
  if (spec.noise > 0.0)
    for (auto& v : scene.image) v += static_cast<float>(spec.noise * rng.normal());
  return scene;
}

std::vector<Scene> generate(const DatasetSpec& spec) {
  spec.validate();
  std::vector<Scene> out;
  out.reserve(static_cast<std::size_t>(spec.n_scenes));
  for (int i = 0; i < spec.n_scenes; ++i) out.push_back(generate_scene(spec, static_cast<std::uint64_t>(i)));
  return out;
}

int classify_region(const Scene& scene, const BoxCxCyWH& box, int num_classes) {
  const int side = scene.side();
  const auto r = to_pixels(box, side);
  int best = 0;
  double best_err = std::numeric_limits<double>::infinity();
  for (int c = 0; c < num_classes; ++c) {
    double err = 0;
    for (int y = r.y0; y < std::min(side, r.y0 + r.h); ++y)
      for (int x = r.x0; x < std::min(side, r.x0 + r.w); ++x) {
        const double d = scene.pixel(x, y) - pattern_value(c, x - r.x0, y - r.y0);
        err += d * d;
      }
    if (err < best_err) {
      best_err = err;
      best = c;
    }
  }
  return best;
}

std::string to_line(const Scene& scene) {
  std::vector<std::uint8_t> bytes;
  bytes.reserve(scene.image.size() * 4);
  for (float v : scene.image) {
    const auto u = std::bit_cast<std::uint32_t>(v);
    for (int k = 0; k < 4; ++k) bytes.push_back(static_cast<std::uint8_t>(u >> (8 * k)));
  }
  json objs = json::array();
  for (const auto& o : scene.objects) objs.push_back({{"class", o.cls}, {"box", {o.box.cx, o.box.cy, o.box.w, o.box.h}}});
  json j{{"id", scene.id},
         {"grid", scene.grid},
         {"patch", scene.patch},
         {"objects", objs},
         {"image", base64_encode(bytes)}};
  return j.dump();
}

Scene from_line(const std::string& line, std::size_t line_number) {
  Scene s;
  try {
    const json j = json::parse(line);
    s.id = j.at("id").get<std::uint64_t>();
    s.grid = j.at("grid").get<int>();
    s.patch = j.at("patch").get<int>();
    if (s.grid < 1 || s.patch < 1) throw ParseError(line_number, "grid and patch must be positive");
    for (const auto& o : j.at("objects")) {
      Object obj;
      obj.cls = o.at("class").get<int>();
      const auto b = o.at("box").get<std::vector<double>>();
      if (b.size() != 4) throw ParseError(line_number, "box needs 4 numbers");
      obj.box = {b[0], b[1], b[2], b[3]};
      if (obj.cls < 0) throw ParseError(line_number, "negative class id");
      s.objects.push_back(obj);
    }
    const auto bytes = base64_decode(j.at("image").get<std::string>());
    const std::size_t n = static_cast<std::size_t>(s.side()) * s.side();
    if (bytes.size() != n * 4) throw ParseError(line_number, "image has " + std::to_string(bytes.size()) + " bytes, expected " + std::to_string(n * 4));
    s.image.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      std::uint32_t u = 0;
      for (int k = 0; k < 4; ++k) u |= static_cast<std::uint32_t>(bytes[i * 4 + k]) << (8 * k);
      s.image[i] = std::bit_cast<float>(u);
    }
  } catch (const ParseError&) {
    throw;
  } catch (const std::exception& e) {
    throw ParseError(line_number, e.what());
  }
  return s;
}

void save_jsonl(const std::filesystem::path& path, std::span<const Scene> scenes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  for (const auto& s : scenes) out << to_line(s) << '\n';
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

std::vector<Scene> load_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::vector<Scene> out;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    out.push_back(from_line(line, n));
  }
  return out;
}

}  // namespace dsdet::scenes
