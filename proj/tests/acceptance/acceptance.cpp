// SPDX-License-Identifier: Apache-2.0
//
// Acceptance runner. Prints one "criterion <n> PASS|FAIL: ..." line per
// criterion and exits nonzero when any criterion fails.
//
//   acceptance [--work-dir DIR] [--only 1,2,5] [--reuse]
//
// --reuse loads checkpoints left in DIR by an earlier run instead of
// retraining (development aid; a clean run retrains everything).

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <numeric>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "dsdet/assignment/hungarian.hpp"
#include "dsdet/harness/checkpoint.hpp"
#include "dsdet/harness/presets.hpp"
#include "dsdet/harness/run_config.hpp"
#include "dsdet/harness/trainer.hpp"
#include "dsdet/losses/losses.hpp"
#include "dsdet/model/detector.hpp"
#include "dsdet/scenes/scenes.hpp"
#include "gradient_suite.hpp"

namespace fs = std::filesystem;
using namespace dsdet;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

using Clock = std::chrono::steady_clock;
double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string num(double v, int precision = 4) {
  std::ostringstream os;
  os.precision(precision);
  os << v;
  return os.str();
}

void progress(const std::string& s) { std::cerr << "[acceptance] " << s << std::endl; }

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::ostringstream os;
  os << is.rdbuf();
  return os.str();
}

// ---------------------------------------------------------------- 1

Outcome gradient_suite() {
  const auto t0 = Clock::now();
  double worst = 0.0;
  std::string worst_case;
  int checks = 0, failures = 0;
  const auto cases = testing::gradient_cases();
  for (const auto& c : cases) {
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
      const auto r = c.run(seed);
      ++checks;
      if (!r.finite || !(r.max_rel_error < 1e-4)) ++failures;
      if (!(r.max_rel_error <= worst)) {
        worst = r.max_rel_error;
        worst_case = c.name + "/" + r.worst + " seed " + std::to_string(seed);
      }
    }
  }
  const double secs = seconds_since(t0);
  const bool pass = failures == 0 && secs < 120.0;
  return {pass, std::to_string(cases.size()) + " cases x 20 seeds, " + std::to_string(failures) +
                    " failures, max rel error " + num(worst, 3) + " (" + worst_case + "), " + num(secs, 3) + " s"};
}

// ---------------------------------------------------------------- 2

double exhaustive_min(const geometry::Matrix& c) {
  const int m = c.rows, n = c.cols;
  const bool transpose = m > n;
  const int r = transpose ? n : m, k = transpose ? m : n;
  std::vector<int> cols(k);
  std::iota(cols.begin(), cols.end(), 0);
  double best = INFINITY;
  do {
    double s = 0;
    for (int i = 0; i < r; ++i) s += transpose ? c(cols[i], i) : c(i, cols[i]);
    best = std::min(best, s);
  } while (std::next_permutation(cols.begin(), cols.end()));
  return best;
}

Outcome hungarian_oracle() {
  const auto t0 = Clock::now();
  numerics::Rng rng(2024);
  int mismatches = 0;
  double worst = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const int m = 1 + static_cast<int>(rng.below(7));
    const int n = 1 + static_cast<int>(rng.below(7));
    geometry::Matrix c(m, n);
    const bool integer = trial % 3 == 0;  // ties
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < n; ++j) c(i, j) = integer ? static_cast<double>(rng.below(5)) : rng.uniform(-3.0, 10.0);
    const double got = assignment::hungarian(c).total_cost;
    const double want = exhaustive_min(c);
    const double err = std::abs(got - want);
    worst = std::max(worst, err);
    if (err > 1e-9) ++mismatches;
  }
  const double secs = seconds_since(t0);
  return {mismatches == 0 && secs < 60.0, "1000 matrices up to 7x7, " + std::to_string(mismatches) +
                                              " mismatches, max |diff| " + num(worst, 3) + ", " + num(secs, 3) + " s"};
}

// ---------------------------------------------------------------- 3

bool behind_boundary(const std::string& name) {
  return name.rfind("decoder.blp", 0) == 0 || name.rfind("encoder.cls.", 0) == 0 || name.rfind("encoder.box", 0) == 0;
}

// Largest |gradient| over boundary-only parameters for one deduplication
// loss term; term 0 = classification, 1 = L1, 2 = GIoU.
double boundary_gradient(bool sgq, int term, std::uint64_t seed, int* count) {
  model::DetectorConfig c;
  c.stop_gradient_queries = sgq;
  c.seed = seed;
  model::Detector<double> det(c);
  auto spec = harness::standard_dataset_spec(1, seed + 100);
  const auto scene = scenes::generate(spec).front();
  const auto r = det.forward({std::span<const float>(scene.image)}, true);
  auto settings = c.loss_settings();
  settings.weights.dp_cls = term == 0 ? 1.0 : 0.0;
  settings.weights.dp_l1 = term == 1 ? 1.0 : 0.0;
  settings.weights.dp_giou = term == 2 ? 1.0 : 0.0;
  std::vector<losses::StagePrediction<double>> dp;
  for (const auto& l : r[0].layers)
    if (l.stage == losses::Stage::kDeduplication)
      dp.push_back({l.stage, l.layer, l.class_logits, l.boxes, r[0].queries.active});
  det.parameters().zero_grad();
  losses::total_loss(dp, scene.ground_truth(), settings).total.backward();
  double mx = 0;
  *count = 0;
  for (const auto& p : det.parameters().params()) {
    if (!behind_boundary(p.name)) continue;
    ++*count;
    if (!p.tensor.has_grad()) continue;
    for (double g : p.tensor.grad()) mx = std::max(mx, std::abs(g));
  }
  return mx;
}

Outcome sgq_exactness() {
  double with_sgq = 0, without = 0;
  int count = 0;
  for (std::uint64_t seed = 0; seed < 3; ++seed)
    for (int term = 0; term < 3; ++term) {
      with_sgq = std::max(with_sgq, boundary_gradient(true, term, seed, &count));
      without = std::max(without, boundary_gradient(false, term, seed, &count));
    }
  return {count > 0 && with_sgq == 0.0 && without > 0.0,
          std::to_string(count) + " boundary tensors, 3 terms x 3 seeds: max |grad| with SGQ " + num(with_sgq) +
              ", without " + num(without, 3)};
}

// ---------------------------------------------------------------- 4

Outcome pocoo_reductions() {
  bool full_ok = true;
  for (double alpha : {0.0, 0.5, 1.0}) {
    losses::PoCooParams p;
    p.alpha = alpha;
    full_ok = full_ok && losses::pocoo_size_factor(1.0, 1.0, p) == 1.0;
  }
  numerics::Rng rng(4);
  double lo = INFINITY, hi = -INFINITY;
  for (int i = 0; i < 100000; ++i) {
    losses::PoCooParams p;
    p.alpha = rng.uniform();
    const double f = losses::pocoo_size_factor(rng.uniform(1e-6, 1.0), rng.uniform(1e-6, 1.0), p);
    lo = std::min(lo, f);
    hi = std::max(hi, f);
  }
  return {full_ok && lo >= 1.0 && hi <= 2.0, std::string("full-image factor ") + (full_ok ? "== 1" : "!= 1") +
                                                 " for alpha in {0, 0.5, 1}; 1e5 random boxes in [" + num(lo, 6) +
                                                 ", " + num(hi, 6) + "]"};
}

// ---------------------------------------------------------------- 5-11

struct Trained {
  model::Detector<float> detector;
  evalkit::EvalReport report;
  double seconds = 0;
};

class Runs {
 public:
  Runs(fs::path dir, bool reuse) : dir_(std::move(dir)), reuse_(reuse) {}

  const std::vector<scenes::Scene>& train_set() {
    if (train_.empty()) train_ = scenes::generate(harness::standard_dataset_spec(500, 1));
    return train_;
  }
  const std::vector<scenes::Scene>& eval_set() {
    if (eval_.empty()) eval_ = scenes::generate(harness::standard_dataset_spec(100, 2));
    return eval_;
  }

  // Default run config with one edit; trained once and cached by name.
  const Trained& get(const std::string& name, std::uint64_t seed,
                     const std::function<void(harness::RunConfig&)>& edit = {}) {
    const std::string key = name + "_s" + std::to_string(seed);
    if (auto it = cache_.find(key); it != cache_.end()) return it->second;
    harness::RunConfig cfg;
    cfg.detector.seed = seed;
    if (edit) edit(cfg);
    cfg.output_dir = dir_ / key;
    const auto ckpt = harness::checkpoint_dir(cfg);
    std::optional<model::Detector<float>> det;
    double secs = 0;
    if (reuse_ && harness::is_checkpoint_dir(ckpt)) {
      harness::CheckpointInfo info;
      auto loaded = harness::load_detector<float>(ckpt, &info);
      if (info.iteration == cfg.iterations && loaded.config().hash() == cfg.detector.hash()) {
        progress("reusing " + key);
        det.emplace(std::move(loaded));
      }
    }
    if (!det) {
      progress("training " + key + " (" + std::to_string(cfg.iterations) + " iterations)");
      harness::TrainOptions opts;
      opts.log = [&](const std::string& s) {
        if (s.rfind("eval", 0) == 0 || s.find("iteration=0 ") != std::string::npos) progress(key + " " + s);
      };
      auto out = harness::train(cfg, train_set(), {}, opts);
      secs = out.seconds;
      det.emplace(std::move(out.detector));
    }
    auto report = harness::evaluate_model(*det, eval_set(), harness::EvalOptions{std::nullopt, cfg.nms, cfg.nms_iou});
    progress(key + " ap50=" + num(report.ap50) + " dup=" + num(report.duplicate_rate) +
             " queries=" + num(report.mean_query_count) + (secs > 0 ? " train_s=" + num(secs) : ""));
    return cache_.emplace(key, Trained{std::move(*det), std::move(report), secs}).first->second;
  }

  const Trained& base(std::uint64_t seed = 0) { return get("default", seed); }
  const Trained& no_sa() {
    return get("no-sa", 0, [](harness::RunConfig& c) { c.detector.lambda = 0; });
  }
  const Trained& sa_first(std::uint64_t seed) {
    return get("sa-first", seed, [](harness::RunConfig& c) { c.detector.dp_order = model::DpOrder::kSelfFirst; });
  }

 private:
  fs::path dir_;
  bool reuse_;
  std::vector<scenes::Scene> train_, eval_;
  std::map<std::string, Trained> cache_;
};

Outcome desk_scale(Runs& runs) {
  const auto& t = runs.base();
  const auto& r = t.report;
  return {r.ap50 >= 0.60 && r.duplicate_rate <= 0.5,
          "AP50 " + num(r.ap50) + " (>= 0.60), duplicate_rate " + num(r.duplicate_rate) + " (<= 0.5), AP " +
              num(r.ap) + ", mean queries " + num(r.mean_query_count) +
              (t.seconds > 0 ? ", train " + num(t.seconds) + " s" : "")};
}

Outcome sa_necessity(Runs& runs) {
  const auto& d = runs.base().report;
  const auto& n = runs.no_sa().report;
  const double gap = d.ap50 - n.ap50;
  const bool dup_ok = n.duplicate_rate >= 2.0 * d.duplicate_rate;
  return {gap >= 0.10 && dup_ok, "default AP50 " + num(d.ap50) + " vs no-sa " + num(n.ap50) + " (gap " +
                                     num(100 * gap, 3) + " points, need >= 10); duplicate_rate " +
                                     num(d.duplicate_rate) + " vs " + num(n.duplicate_rate) + " (need >= 2x)"};
}

Outcome binary_nms(Runs& runs) {
  const auto& d = runs.base().report;
  const auto& no_sa = runs.no_sa();
  const auto nms = harness::evaluate_model(no_sa.detector, runs.eval_set(), harness::EvalOptions{std::nullopt, true, 0.5});
  const double gap = d.ap50 - no_sa.report.ap50;
  const double recovered = nms.ap50 - no_sa.report.ap50;
  const double fraction = gap > 0 ? recovered / gap : (recovered >= 0 ? 1.0 : 0.0);
  return {fraction >= 0.5, "no-sa " + num(no_sa.report.ap50) + ", binary-nms " + num(nms.ap50) + ", default " +
                               num(d.ap50) + ": recovers " + num(100 * fraction, 3) + "% of the gap (need >= 50%)"};
}

Outcome sa_first_order(Runs& runs) {
  double md = 0, ms = 0;
  std::string per_seed;
  for (std::uint64_t s = 0; s < 3; ++s) {
    const double d = runs.base(s).report.ap50, f = runs.sa_first(s).report.ap50;
    md += d / 3;
    ms += f / 3;
    per_seed += (s ? "; " : "") + std::string("seed ") + std::to_string(s) + " " + num(d) + "/" + num(f);
  }
  return {ms <= md + 0.01, "mean AP50 default " + num(md) + ", sa-first " + num(ms) + " (need sa-first <= default + 0.01) [" +
                               per_seed + "]"};
}

Outcome query_trend(Runs& runs) {
  auto spec = harness::standard_dataset_spec(200, 3);
  spec.min_objects = 1;
  spec.max_objects = 25;
  const auto data = scenes::generate(spec);
  const auto& det = runs.base().detector;
  const auto report = harness::evaluate_model(det, data);
  const auto& b = report.buckets;
  int inversions = 0;
  std::string rows;
  for (std::size_t i = 0; i < b.size(); ++i) {
    if (i > 0 && b[i].mean_queries < b[i - 1].mean_queries) ++inversions;
    rows += (i ? "; " : "") + std::to_string(b[i].lo) + "-" + std::to_string(b[i].hi) + ": q " + num(b[i].mean_queries) +
            " obj " + num(b[i].mean_objects, 3);
  }
  if (b.size() < 2) return {false, "fewer than two buckets"};
  const double first = b.front().mean_queries / b.front().mean_objects;
  const double last = b.back().mean_queries / b.back().mean_objects;
  return {inversions <= 1 && last <= first, std::to_string(inversions) + " inversion(s); queries/object " + num(first) +
                                                " -> " + num(last) + " [" + rows + "]"};
}

Outcome threshold_flexibility(Runs& runs) {
  const auto& det = runs.base().detector;
  std::vector<double> ap, q;
  std::string rows;
  for (double s : {0.01, 0.02, 0.05}) {
    const auto r = harness::evaluate_model(det, runs.eval_set(), harness::EvalOptions{s, false, 0.5});
    ap.push_back(r.ap50);
    q.push_back(r.mean_query_count);
    rows += (rows.empty() ? "" : "; ") + std::string("S=") + num(s) + " AP50 " + num(r.ap50) + " queries " +
            num(r.mean_query_count);
  }
  const double spread = *std::max_element(ap.begin(), ap.end()) - *std::min_element(ap.begin(), ap.end());
  const bool strictly = q[0] > q[1] && q[1] > q[2];
  return {spread < 0.03 && strictly,
          "AP50 spread " + num(100 * spread, 3) + " points (need < 3), queries strictly decreasing: " +
              (strictly ? "yes" : "no") + " [" + rows + "]"};
}

std::string run_capture(const std::string& cmd, int* code) {
  std::string out;
  FILE* pipe = popen(cmd.c_str(), "r");
  if (!pipe) {
    *code = -1;
    return out;
  }
  std::array<char, 4096> buf{};
  std::size_t n;
  while ((n = fread(buf.data(), 1, buf.size(), pipe)) > 0) out.append(buf.data(), n);
  *code = pclose(pipe);
  return out;
}

Outcome decoder_speed(const fs::path& dir) {
  fs::create_directories(dir);
  const auto cfg_path = dir / "bench_config.json";
  harness::write_text_file(cfg_path, nlohmann::json(model::DetectorConfig{}).dump(2) + "\n");
  int code = 0;
  const auto out = run_capture(std::string("\"") + DSDET_CLI_PATH + "\" bench-decoder \"" + cfg_path.string() +
                                   "\" --queries 128 --iterations 200 --warmup 20 --json",
                               &code);
  if (code != 0) return {false, "bench-decoder exited with status " + std::to_string(code)};
  const auto j = nlohmann::json::parse(out);
  const double ratio = j.at("ratio");
  return {ratio >= 1.10, "N=128: decoder " + num(j.at("add_ms").get<double>()) + " ms, 6-layer baseline " +
                             num(j.at("baseline_ms").get<double>()) + " ms, ratio " + num(ratio, 5) + " (need >= 1.10)"};
}

// ---------------------------------------------------------------- 12

Outcome determinism(const fs::path& dir) {
  auto spec = harness::standard_dataset_spec(12, 7);
  const auto data = scenes::generate(spec);
  std::vector<std::string> problems;

  // Dataset round trip.
  const auto d1 = dir / "data.jsonl", d2 = dir / "data_again.jsonl";
  scenes::save_jsonl(d1, data);
  const auto loaded = scenes::load_jsonl(d1);
  bool bitwise = loaded.size() == data.size();
  for (std::size_t i = 0; bitwise && i < data.size(); ++i)
    bitwise = std::memcmp(loaded[i].image.data(), data[i].image.data(), data[i].image.size() * sizeof(float)) == 0 &&
              loaded[i].objects == data[i].objects && loaded[i].id == data[i].id;
  scenes::save_jsonl(d2, loaded);
  if (!bitwise || slurp(d1) != slurp(d2)) problems.push_back("dataset round trip");
  if (scenes::generate(spec) != data) problems.push_back("dataset regeneration");

  // Two identical short runs.
  harness::RunConfig cfg;
  cfg.iterations = 20;
  cfg.detector.seed = 11;
  std::array<fs::path, 2> ckpts;
  for (int k = 0; k < 2; ++k) {
    cfg.output_dir = dir / ("run" + std::to_string(k));
    fs::remove_all(cfg.output_dir);
    harness::train(cfg, data, {});
    ckpts[k] = harness::checkpoint_dir(cfg);
  }
  for (const char* f : {"manifest.json", "params.bin", "optimizer.bin"})
    if (slurp(ckpts[0] / f) != slurp(ckpts[1] / f)) problems.push_back(std::string("run bytes differ: ") + f);

  // Checkpoint round trip.
  harness::CheckpointInfo info;
  const auto det = harness::load_detector<float>(ckpts[0], &info);
  const auto again = dir / "resaved";
  fs::remove_all(again);
  harness::save_checkpoint(again, det, info.iteration, info.optimizer ? &*info.optimizer : nullptr);
  for (const char* f : {"manifest.json", "params.bin", "optimizer.bin"})
    if (slurp(ckpts[0] / f) != slurp(again / f)) problems.push_back(std::string("checkpoint round trip: ") + f);

  std::string detail = "dataset round trip, regeneration, repeated run and checkpoint round trip ";
  if (problems.empty()) return {true, detail + "all byte-identical"};
  for (const auto& p : problems) detail += "| " + p + " ";
  return {false, detail};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria runner"};
  std::string work = "acceptance_work";
  std::vector<int> only;
  bool reuse = false;
  app.add_option("--work-dir", work, "Scratch directory for datasets, runs and checkpoints");
  app.add_option("--only", only, "Criteria to run")->delimiter(',');
  app.add_flag("--reuse", reuse, "Reuse finished checkpoints from the work directory");
  CLI11_PARSE(app, argc, argv);

  const fs::path dir(work);
  fs::create_directories(dir);
  Runs runs(dir / "runs", reuse);

  const std::vector<std::pair<int, std::function<Outcome()>>> criteria{
      {1, gradient_suite},
      {2, hungarian_oracle},
      {3, sgq_exactness},
      {4, pocoo_reductions},
      {5, [&] { return desk_scale(runs); }},
      {6, [&] { return sa_necessity(runs); }},
      {7, [&] { return binary_nms(runs); }},
      {8, [&] { return sa_first_order(runs); }},
      {9, [&] { return query_trend(runs); }},
      {10, [&] { return threshold_flexibility(runs); }},
      {11, [&] { return decoder_speed(dir / "bench"); }},
      {12, [&] {
         fs::create_directories(dir / "determinism");
         return determinism(dir / "determinism");
       }},
  };

  const std::set<int> selected(only.begin(), only.end());
  int failed = 0;
  std::vector<std::string> lines;
  for (const auto& [id, fn] : criteria) {
    if (!selected.empty() && !selected.count(id)) continue;
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const std::string line = "criterion " + std::to_string(id) + (o.pass ? " PASS: " : " FAIL: ") + o.detail;
    std::cout << line << std::endl;
    lines.push_back(line);
    failed += !o.pass;
  }
  std::string summary;
  for (const auto& l : lines) summary += l + "\n";
  harness::write_text_file(dir / "acceptance_summary.txt", summary);
  std::cout << (failed ? std::to_string(failed) + " criteria failed" : std::string("all criteria passed")) << std::endl;
  return failed ? 1 : 0;
}
