// SPDX-License-Identifier: Apache-2.0

#include "dsdet/harness/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "dsdet/harness/checkpoint.hpp"
#include "dsdet/harness/optimizer.hpp"
#include "dsdet/numerics/ops.hpp"

namespace dsdet::harness {

namespace fs = std::filesystem;
using losses::Stage;

std::vector<evalkit::ScoredBox> class_nms(const std::vector<evalkit::ScoredBox>& boxes, double iou_threshold) {
  std::vector<char> keep(boxes.size(), 0);
  int max_cls = -1;
  for (const auto& b : boxes) max_cls = std::max(max_cls, b.cls);
  for (int c = 0; c <= max_cls; ++c) {
    std::vector<int> idx;
    std::vector<geometry::BoxCxCyWH> bx;
    std::vector<double> sc;
    for (std::size_t i = 0; i < boxes.size(); ++i)
      if (boxes[i].cls == c) {
        idx.push_back(static_cast<int>(i));
        bx.push_back(boxes[i].box);
        sc.push_back(boxes[i].score);
      }
    for (int k : geometry::nms(bx, sc, iou_threshold)) keep[idx[k]] = 1;
  }
  std::vector<evalkit::ScoredBox> out;
  for (std::size_t i = 0; i < boxes.size(); ++i)
    if (keep[i]) out.push_back(boxes[i]);
  return out;
}

template <typename T>
std::vector<evalkit::ImageRecord> predict(const model::Detector<T>& detector, std::span<const scenes::Scene> data,
                                          const EvalOptions& options) {
  numerics::NoGradGuard no_grad;
  std::vector<evalkit::ImageRecord> out;
  out.reserve(data.size());
  for (const auto& s : data) {
    const std::vector<std::span<const float>> images{std::span<const float>(s.image)};
    const auto result = detector.forward(images, false, options.threshold);
    evalkit::ImageRecord rec;
    for (const auto& d : detector.detections(result.front())) rec.predictions.push_back({d.box, d.cls, d.score});
    if (options.nms) rec.predictions = class_nms(rec.predictions, options.nms_iou);
    rec.gts = s.ground_truth();
    rec.query_count = result.front().queries.num_active;
    out.push_back(std::move(rec));
  }
  return out;
}

template <typename T>
evalkit::EvalReport evaluate_model(const model::Detector<T>& detector, std::span<const scenes::Scene> data,
                                   const EvalOptions& options) {
  const auto records = predict(detector, data, options);
  auto report = evalkit::evaluate(records, detector.config().num_classes);
  report.threshold = options.threshold.value_or(detector.config().threshold);
  return report;
}

std::vector<std::size_t> epoch_permutation(std::uint64_t seed, std::size_t n_scenes, std::size_t epoch) {
  numerics::Rng rng(seed * 0x9E3779B97F4A7C15ULL + epoch + 1);
  std::vector<std::size_t> perm(n_scenes);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  for (std::size_t i = n_scenes; i > 1; --i) std::swap(perm[i - 1], perm[rng.below(i)]);
  return perm;
}

std::size_t batch_scene_index(std::uint64_t seed, std::size_t n_scenes, std::size_t global) {
  return epoch_permutation(seed, n_scenes, global / n_scenes)[global % n_scenes];
}

namespace {

class EpochOrder {
 public:
  EpochOrder(std::uint64_t seed, std::size_t n) : seed_(seed), n_(n) {}
  std::size_t at(std::size_t global) {
    const std::size_t epoch = global / n_;
    if (epoch != epoch_ || perm_.empty()) {
      epoch_ = epoch;
      perm_ = epoch_permutation(seed_, n_, epoch);
    }
    return perm_[global % n_];
  }

 private:
  std::uint64_t seed_;
  std::size_t n_;
  std::size_t epoch_ = 0;
  std::vector<std::size_t> perm_;
};

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(9);
  os << v;
  return os.str();
}

// Matching needs finite costs, so diverged outputs are caught before the loss.
bool finite_outputs(const model::ImageResult<float>& r) {
  auto ok = [](const numerics::Tensor<float>& t) {
    for (float v : t.values())
      if (!std::isfinite(v)) return false;
    return true;
  };
  if (!ok(r.encoder.class_logits) || !ok(r.encoder.init_boxes)) return false;
  for (const auto& l : r.layers)
    if (!ok(l.class_logits) || !ok(l.boxes)) return false;
  return true;
}

constexpr const char* kMetricsHeader =
    "kind,iteration,loss,enc_loss,blp_loss,dp_loss,grad_norm,lr,mean_queries,ap,ap50,duplicate_rate,seconds\n";

}  // namespace

TrainOutcome train(const RunConfig& config, std::span<const scenes::Scene> train_set,
                   std::span<const scenes::Scene> eval_set, const TrainOptions& options) {
  config.validate();
  if (train_set.empty()) throw UserError("empty_dataset", "training set is empty");
  const auto& dc = config.detector;
  for (const auto& s : train_set)
    if (s.grid != dc.grid || s.patch != dc.patch)
      throw UserError("invalid_dataset", "scene " + std::to_string(s.id) + " does not match the configured grid/patch");

  TrainOutcome out{model::Detector<float>(dc), 0, 0, 0.0, std::nullopt, 0.0};
  Adam<float> opt(config.optimizer);
  auto& det = out.detector;
  auto& store = det.parameters();

  if (options.resume && is_checkpoint_dir(checkpoint_dir(config))) {
    const auto info = load_checkpoint(checkpoint_dir(config), det);
    out.start_iteration = info.iteration;
    if (info.optimizer) opt.restore(info.optimizer->steps, info.optimizer->m, info.optimizer->v);
  }

  std::ofstream metrics;
  if (options.write_files) {
    std::error_code ec;
    fs::create_directories(config.output_dir, ec);
    if (ec) throw UserError("io_error", "cannot create " + config.output_dir.string());
    const auto path = config.output_dir / "metrics.csv";
    const bool append = options.resume && out.start_iteration > 0 && fs::exists(path);
    metrics.open(path, append ? std::ios::app : std::ios::trunc);
    if (!metrics) throw UserError("io_error", "cannot open " + path.string());
    if (!append) metrics << kMetricsHeader;
    write_text_file(config.output_dir / "run.json", nlohmann::json(config).dump(2) + "\n");
  }

  const auto t0 = std::chrono::steady_clock::now();
  auto elapsed = [&] { return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count(); };
  auto save = [&](int iteration) {
    if (!options.write_files) return;
    OptimizerState st{opt.steps(), opt.first_moment(), opt.second_moment()};
    save_checkpoint(checkpoint_dir(config), det, iteration, &st);
  };
  auto run_eval = [&](int iteration) {
    if (eval_set.empty()) return;
    const auto report = evaluate_model(det, eval_set, EvalOptions{std::nullopt, config.nms, config.nms_iou});
    if (metrics.is_open())
      metrics << "eval," << iteration << ",,,,,,," << fmt(report.mean_query_count) << ',' << fmt(report.ap) << ','
              << fmt(report.ap50) << ',' << fmt(report.duplicate_rate) << ',' << fmt(elapsed()) << '\n';
    if (options.log)
      options.log("eval iteration=" + std::to_string(iteration) + " ap50=" + fmt(report.ap50) +
                  " dup=" + fmt(report.duplicate_rate) + " queries=" + fmt(report.mean_query_count));
    out.eval = report;
  };

  EpochOrder order(dc.seed, train_set.size());
  const int b = config.batch_size;
  for (int it = out.start_iteration; it < config.iterations; ++it) {
    std::vector<std::size_t> batch;
    std::vector<std::span<const float>> images;
    for (int k = 0; k < b; ++k) {
      const std::size_t idx = order.at(static_cast<std::size_t>(it) * b + k);
      batch.push_back(idx);
      images.emplace_back(train_set[idx].image);
    }
    const auto results = det.forward(images, true);
    numerics::Tensor<float> total;
    double enc = 0, blp = 0, dp = 0, queries = 0;
    const bool finite = std::all_of(results.begin(), results.end(), finite_outputs);
    for (int k = 0; finite && k < b; ++k) {
      const auto lb = det.loss(results[k], train_set[batch[k]].ground_truth());
      enc += lb.stage_value(Stage::kEncoder, dc.loss) / b;
      blp += lb.stage_value(Stage::kBoxLocating, dc.loss) / b;
      dp += lb.stage_value(Stage::kDeduplication, dc.loss) / b;
      queries += static_cast<double>(results[k].queries.num_active) / b;
      auto scaled = numerics::scale(lb.total, 1.0f / static_cast<float>(b));
      total = total.defined() ? numerics::add(total, scaled) : scaled;
    }
    const double loss = finite ? total.item() : std::nan("");
    if (!std::isfinite(loss)) {
      std::string ids;
      for (auto i : batch) ids += (ids.empty() ? "" : " ") + std::to_string(train_set[i].id);
      if (options.write_files) {
        nlohmann::json dump{{"iteration", it}, {"scene_ids", nlohmann::json::array()}, {"enc_loss", enc},
                            {"blp_loss", blp}, {"dp_loss", dp}};
        for (auto i : batch) dump["scene_ids"].push_back(train_set[i].id);
        write_text_file(config.output_dir / "nonfinite_batch.json", dump.dump(2) + "\n");
      }
      throw TrainingError("non-finite loss at iteration " + std::to_string(it) + " batch scene ids [" + ids + "]");
    }
    store.zero_grad();
    total.backward();
    const double lr = config.lr_at(it);
    const double norm = opt.step(store, lr);
    out.last_loss = loss;
    if (metrics.is_open())
      metrics << "train," << it << ',' << fmt(loss) << ',' << fmt(enc) << ',' << fmt(blp) << ',' << fmt(dp) << ','
              << fmt(norm) << ',' << fmt(lr) << ',' << fmt(queries) << ",,,," << fmt(elapsed()) << '\n';
    if (options.log && (it % 100 == 0 || it + 1 == config.iterations))
      options.log("iteration=" + std::to_string(it) + " loss=" + fmt(loss) + " enc=" + fmt(enc) + " blp=" + fmt(blp) +
                  " dp=" + fmt(dp) + " queries=" + fmt(queries) + " t=" + fmt(elapsed()));
    if (config.eval_every > 0 && (it + 1) % config.eval_every == 0 && it + 1 < config.iterations) run_eval(it + 1);
    if (config.checkpoint_every > 0 && (it + 1) % config.checkpoint_every == 0) save(it + 1);
  }
  out.iterations = config.iterations;
  save(config.iterations);
  run_eval(config.iterations);
  if (options.write_files && out.eval)
    write_text_file(config.output_dir / "eval_report.json", out.eval->to_json().dump(2) + "\n");
  out.seconds = elapsed();
  return out;
}

template std::vector<evalkit::ImageRecord> predict(const model::Detector<float>&, std::span<const scenes::Scene>,
                                                   const EvalOptions&);
template std::vector<evalkit::ImageRecord> predict(const model::Detector<double>&, std::span<const scenes::Scene>,
                                                   const EvalOptions&);
template evalkit::EvalReport evaluate_model(const model::Detector<float>&, std::span<const scenes::Scene>,
                                            const EvalOptions&);
template evalkit::EvalReport evaluate_model(const model::Detector<double>&, std::span<const scenes::Scene>,
                                            const EvalOptions&);

}  // namespace dsdet::harness
