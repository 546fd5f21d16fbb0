// SPDX-License-Identifier: Apache-2.0

#include "dsdet/harness/presets.hpp"

#include <map>
#include <sstream>

#include "dsdet/harness/trainer.hpp"

namespace dsdet::harness {

std::vector<std::string> preset_names() {
  return {"no-sa", "binary-nms", "sa-first", "no-sgq", "k-sweep", "blp-dp-split", "fixed-query"};
}

scenes::DatasetSpec standard_dataset_spec(int n_scenes, std::uint64_t seed) {
  scenes::DatasetSpec s;
  s.n_scenes = n_scenes;
  s.seed = seed;
  return s;
}

std::vector<Variant> preset_variants(const std::string& preset, const RunConfig& base) {
  std::vector<Variant> v;
  auto add = [&](const std::string& name, const std::function<void(RunConfig&)>& edit) {
    RunConfig c = base;
    c.preset = preset;
    edit(c);
    v.push_back({name, c});
  };
  auto no_change = [](RunConfig&) {};
  auto no_sa = [](RunConfig& c) { c.detector.lambda = 0; };

  if (preset == "no-sa") {
    add("default", no_change);
    add("no-sa", no_sa);
  } else if (preset == "binary-nms") {
    add("default", no_change);
    add("no-sa", no_sa);
    add("binary-nms", [&](RunConfig& c) {
      no_sa(c);
      c.nms = true;
    });
  } else if (preset == "sa-first") {
    add("default", no_change);
    add("sa-first", [](RunConfig& c) { c.detector.dp_order = model::DpOrder::kSelfFirst; });
  } else if (preset == "no-sgq") {
    add("default", no_change);
    add("no-sgq", [](RunConfig& c) { c.detector.stop_gradient_queries = false; });
  } else if (preset == "k-sweep") {
    for (int k : {1, 3, 6, 9}) add("k=" + std::to_string(k), [k](RunConfig& c) { c.detector.k = k; });
  } else if (preset == "blp-dp-split") {
    for (int t1 = 1; t1 <= 5; ++t1)
      add("blp=" + std::to_string(t1) + ",dp=" + std::to_string(6 - t1), [t1](RunConfig& c) {
        c.detector.t1 = t1;
        c.detector.t2 = 6 - t1;
      });
  } else if (preset == "fixed-query") {
    add("default", no_change);
    add("fixed-query", [](RunConfig& c) {
      c.detector.selection = model::QuerySelection::kFixedTopN;
      c.detector.fixed_queries = c.detector.pool_cap;
    });
  } else {
    std::string known;
    for (const auto& n : preset_names()) known += (known.empty() ? "" : ", ") + n;
    throw UserError("unknown_preset", "unknown preset '" + preset + "' (known: " + known + ")");
  }
  return v;
}

std::vector<AblationRow> run_ablation(const std::string& preset, const RunConfig& base,
                                      std::span<const std::uint64_t> seeds, std::span<const scenes::Scene> train_set,
                                      std::span<const scenes::Scene> eval_set,
                                      const std::function<void(const std::string&)>& log) {
  const auto variants = preset_variants(preset, base);
  std::vector<AblationRow> rows;
  for (std::uint64_t seed : seeds) {
    // Trained models keyed by everything except the evaluation settings.
    std::map<std::string, std::pair<TrainOutcome*, std::string>> trained;
    std::vector<std::unique_ptr<TrainOutcome>> keep;
    for (const auto& var : variants) {
      RunConfig cfg = var.config;
      cfg.detector.seed = seed;
      cfg.output_dir = base.output_dir / preset / var.name / ("seed" + std::to_string(seed));
      RunConfig key_cfg = cfg;
      key_cfg.nms = false;
      key_cfg.nms_iou = 0.5;
      key_cfg.output_dir.clear();
      key_cfg.preset.clear();
      const std::string key = nlohmann::json(key_cfg).dump();
      TrainOutcome* model = nullptr;
      if (auto it = trained.find(key); it != trained.end()) {
        model = it->second.first;
        if (log) log("variant " + var.name + ": reusing model trained for " + it->second.second);
      } else {
        if (log) log("variant " + var.name + " seed " + std::to_string(seed) + ": training");
        TrainOptions opts;
        opts.log = log;
        keep.push_back(std::make_unique<TrainOutcome>(train(cfg, train_set, {}, opts)));
        model = keep.back().get();
        trained.emplace(key, std::make_pair(model, var.name));
      }
      const auto report = evaluate_model(model->detector, eval_set, EvalOptions{std::nullopt, cfg.nms, cfg.nms_iou});
      AblationRow row;
      row.preset = preset;
      row.variant = var.name;
      row.seed = seed;
      row.ap = report.ap;
      row.ap50 = report.ap50;
      row.ap75 = report.ap75;
      row.duplicate_rate = report.duplicate_rate;
      row.mean_query_count = report.mean_query_count;
      row.train_seconds = model->seconds;
      if (log)
        log("variant " + var.name + " seed " + std::to_string(seed) + ": ap50=" + std::to_string(row.ap50) +
            " dup=" + std::to_string(row.duplicate_rate) + " queries=" + std::to_string(row.mean_query_count));
      rows.push_back(row);
    }
  }
  return rows;
}

std::string ablation_csv(std::span<const AblationRow> rows) {
  std::ostringstream os;
  os.precision(9);
  os << "preset,variant,seed,ap,ap50,ap75,duplicate_rate,mean_query_count,train_seconds\n";
  for (const auto& r : rows)
    os << r.preset << ",\"" << r.variant << "\"," << r.seed << ',' << r.ap << ',' << r.ap50 << ',' << r.ap75 << ','
       << r.duplicate_rate << ',' << r.mean_query_count << ',' << r.train_seconds << '\n';
  return os.str();
}

}  // namespace dsdet::harness
