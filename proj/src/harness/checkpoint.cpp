// SPDX-License-Identifier: Apache-2.0

#include "dsdet/harness/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

namespace dsdet::harness {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

constexpr const char* kManifest = "manifest.json";
constexpr const char* kParams = "params.bin";
constexpr const char* kOptimizer = "optimizer.bin";

[[noreturn]] void fail(const std::string& what) { throw UserError("checkpoint_error", what); }

template <typename U, typename Word>
void append_le(std::string& out, U value) {
  const auto bits = std::bit_cast<Word>(value);
  for (std::size_t k = 0; k < sizeof(Word); ++k) out.push_back(static_cast<char>((bits >> (8 * k)) & 0xFF));
}

template <typename U, typename Word>
U read_le(const std::string& in, std::size_t offset) {
  Word bits = 0;
  for (std::size_t k = 0; k < sizeof(Word); ++k)
    bits |= static_cast<Word>(static_cast<unsigned char>(in[offset + k])) << (8 * k);
  return std::bit_cast<U>(bits);
}

std::string read_binary(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail("cannot open " + path.string());
  return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

void write_binary(const fs::path& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail("cannot open " + path.string() + " for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) fail("write failed: " + path.string());
}

}  // namespace

bool is_checkpoint_dir(const fs::path& path) { return fs::is_directory(path) && fs::exists(path / kManifest); }

template <typename T>
void save_checkpoint(const fs::path& dir, const model::Detector<T>& detector, int iteration,
                     const OptimizerState* optimizer) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) fail("cannot create " + dir.string() + ": " + ec.message());

  json params = json::array();
  std::string blob;
  blob.reserve(detector.parameters().total_size() * 4);
  for (const auto& p : detector.parameters().params()) {
    params.push_back({{"name", p.name}, {"shape", p.tensor.shape()}});
    for (T v : p.tensor.values()) append_le<float, std::uint32_t>(blob, static_cast<float>(v));
  }
  json manifest{{"format", "dsdet-checkpoint"},
                {"version", 1},
                {"dtype", "float32"},
                {"byte_order", "little"},
                {"iteration", iteration},
                {"config", detector.config()},
                {"config_hash", detector.config().hash()},
                {"params", params}};
  if (optimizer) {
    std::string ob;
    ob.reserve((optimizer->m.size() + optimizer->v.size()) * 8);
    for (double v : optimizer->m) append_le<double, std::uint64_t>(ob, v);
    for (double v : optimizer->v) append_le<double, std::uint64_t>(ob, v);
    write_binary(dir / kOptimizer, ob);
    manifest["optimizer"] = {{"file", kOptimizer}, {"steps", optimizer->steps}, {"size", optimizer->m.size()}};
  } else if (fs::exists(dir / kOptimizer)) {
    fs::remove(dir / kOptimizer);
  }
  write_binary(dir / kParams, blob);
  write_binary(dir / kManifest, manifest.dump(2) + "\n");
}

namespace {

json read_manifest(const fs::path& dir) {
  const auto text = read_binary(dir / kManifest);
  try {
    return json::parse(text);
  } catch (const json::exception& e) {
    fail(std::string("malformed manifest: ") + e.what());
  }
}

}  // namespace

CheckpointInfo read_checkpoint_info(const fs::path& dir) {
  const json m = read_manifest(dir);
  CheckpointInfo info;
  try {
    if (m.at("format") != "dsdet-checkpoint") fail("not a dsdet checkpoint");
    info.config = m.at("config").get<model::DetectorConfig>();
    info.iteration = m.at("iteration").get<int>();
    const auto stored = m.at("config_hash").get<std::string>();
    if (stored != info.config.hash()) fail("config hash mismatch: manifest says " + stored + ", config hashes to " + info.config.hash());
    if (m.contains("optimizer")) {
      const auto& o = m.at("optimizer");
      const auto n = o.at("size").get<std::size_t>();
      const auto bytes = read_binary(dir / o.at("file").get<std::string>());
      if (bytes.size() != n * 16) fail("optimizer state has wrong size");
      OptimizerState st;
      st.steps = o.at("steps").get<int>();
      st.m.resize(n);
      st.v.resize(n);
      for (std::size_t i = 0; i < n; ++i) {
        st.m[i] = read_le<double, std::uint64_t>(bytes, i * 8);
        st.v[i] = read_le<double, std::uint64_t>(bytes, (n + i) * 8);
      }
      info.optimizer = std::move(st);
    }
  } catch (const json::exception& e) {
    fail(std::string("malformed manifest: ") + e.what());
  } catch (const std::invalid_argument& e) {
    fail(std::string("invalid config in manifest: ") + e.what());
  }
  return info;
}

template <typename T>
CheckpointInfo load_checkpoint(const fs::path& dir, model::Detector<T>& detector) {
  CheckpointInfo info = read_checkpoint_info(dir);
  if (info.config.hash() != detector.config().hash())
    fail("config hash mismatch: checkpoint " + info.config.hash() + ", model " + detector.config().hash());
  const json m = read_manifest(dir);
  const auto blob = read_binary(dir / kParams);
  auto& params = detector.parameters().params();
  const auto& listed = m.at("params");
  if (listed.size() != params.size()) fail("parameter count differs from the model");
  std::size_t off = 0;
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& entry = listed[i];
    if (entry.at("name").get<std::string>() != params[i].name) fail("parameter order differs at " + params[i].name);
    if (entry.at("shape").get<numerics::Shape>() != params[i].tensor.shape()) fail("shape differs for " + params[i].name);
    auto values = params[i].tensor.mutable_values();
    if (blob.size() < (off + values.size()) * 4) fail("params.bin is truncated");
    for (auto& v : values) v = static_cast<T>(read_le<float, std::uint32_t>(blob, 4 * off++));
  }
  if (blob.size() != off * 4) fail("params.bin has trailing bytes");
  return info;
}

template <typename T>
model::Detector<T> load_detector(const fs::path& dir, CheckpointInfo* info) {
  const auto header = read_checkpoint_info(dir);
  model::Detector<T> det(header.config);
  auto loaded = load_checkpoint(dir, det);
  if (info) *info = std::move(loaded);
  return det;
}

template void save_checkpoint(const fs::path&, const model::Detector<float>&, int, const OptimizerState*);
template void save_checkpoint(const fs::path&, const model::Detector<double>&, int, const OptimizerState*);
template CheckpointInfo load_checkpoint(const fs::path&, model::Detector<float>&);
template CheckpointInfo load_checkpoint(const fs::path&, model::Detector<double>&);
template model::Detector<float> load_detector(const fs::path&, CheckpointInfo*);
template model::Detector<double> load_detector(const fs::path&, CheckpointInfo*);

}  // namespace dsdet::harness
