// SPDX-License-Identifier: Apache-2.0
//
// Command-line entry point. Exit codes: 0 ok, 1 user error, 2 internal error.
// Failures print one line: "error code=<code> message=<text>".

#include <filesystem>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "dsdet/evalkit/flops.hpp"
#include "dsdet/harness/bench.hpp"
#include "dsdet/harness/checkpoint.hpp"
#include "dsdet/harness/presets.hpp"
#include "dsdet/harness/run_config.hpp"
#include "dsdet/harness/trainer.hpp"
#include "dsdet/scenes/scenes.hpp"

namespace fs = std::filesystem;
using namespace dsdet;

namespace {

int report_error(const std::string& code, const std::string& message, int exit_code) {
  std::string flat = message;
  for (auto& ch : flat)
    if (ch == '\n' || ch == '\r') ch = ' ';
  std::cerr << "error code=" << code << " message=" << flat << std::endl;
  return exit_code;
}

std::vector<scenes::Scene> load_data(const fs::path& path) {
  if (!fs::exists(path)) throw harness::UserError("io_error", "dataset not found: " + path.string());
  return scenes::load_jsonl(path);
}

model::DetectorConfig detector_config_from(const nlohmann::json& j) {
  try {
    return j.contains("detector") ? j.at("detector").get<model::DetectorConfig>() : j.get<model::DetectorConfig>();
  } catch (const nlohmann::json::exception& e) {
    throw harness::UserError("invalid_config", e.what());
  } catch (const std::invalid_argument& e) {
    throw harness::UserError("invalid_config", e.what());
  }
}

void log_line(const std::string& s) { std::cerr << s << std::endl; }

int cmd_gen_data(const fs::path& spec_path, const fs::path& out) {
  const auto j = harness::read_json_file(spec_path);
  scenes::DatasetSpec spec;
  try {
    spec = j.get<scenes::DatasetSpec>();
    spec.validate();
  } catch (const nlohmann::json::exception& e) {
    throw harness::UserError("invalid_config", spec_path.string() + ": " + e.what());
  } catch (const std::invalid_argument& e) {
    throw harness::UserError("invalid_config", e.what());
  }
  const auto data = scenes::generate(spec);
  scenes::save_jsonl(out, data);
  std::cout << "wrote " << data.size() << " scenes to " << out.string() << std::endl;
  return 0;
}

int cmd_train(const fs::path& run_path, bool resume, bool quiet) {
  const auto cfg = harness::load_run_config(run_path);
  if (cfg.train_data.empty()) throw harness::UserError("invalid_config", "train_data is required");
  const auto train = load_data(cfg.train_data);
  std::vector<scenes::Scene> eval;
  if (!cfg.eval_data.empty()) eval = load_data(cfg.eval_data);
  harness::TrainOptions opts;
  opts.resume = resume;
  if (!quiet) opts.log = log_line;
  const auto out = harness::train(cfg, train, eval, opts);
  nlohmann::json summary{{"iterations", out.iterations},
                         {"start_iteration", out.start_iteration},
                         {"last_loss", out.last_loss},
                         {"seconds", out.seconds},
                         {"checkpoint", harness::checkpoint_dir(cfg).string()}};
  if (out.eval) summary["eval"] = out.eval->to_json();
  std::cout << summary.dump(2) << std::endl;
  return 0;
}

int cmd_eval(const fs::path& ckpt, const fs::path& data_path, std::optional<double> threshold, bool nms, double nms_iou,
             bool csv) {
  if (threshold && !(*threshold > 0.0 && *threshold < 1.0))
    throw harness::UserError("invalid_argument", "--threshold must lie in (0, 1)");
  const auto det = harness::load_detector<float>(ckpt);
  const auto data = load_data(data_path);
  const auto report = harness::evaluate_model(det, data, harness::EvalOptions{threshold, nms, nms_iou});
  std::cout << (csv ? report.to_csv() : report.to_json().dump(2) + "\n");
  return 0;
}

int cmd_ablate(const std::string& preset, const std::string& config_path, const fs::path& out_dir,
               const std::vector<std::uint64_t>& seeds, int iterations, bool quiet) {
  harness::preset_variants(preset, harness::RunConfig{});  // validates the name early
  harness::RunConfig base;
  if (!config_path.empty()) base = harness::load_run_config(config_path);
  if (!out_dir.empty()) base.output_dir = out_dir;
  if (iterations >= 0) base.iterations = iterations;
  std::error_code ec;
  fs::create_directories(base.output_dir, ec);
  if (ec) throw harness::UserError("io_error", "cannot create " + base.output_dir.string());
  std::vector<scenes::Scene> train, eval;
  if (base.train_data.empty()) {
    train = scenes::generate(harness::standard_dataset_spec(500, 1));
    eval = scenes::generate(harness::standard_dataset_spec(100, 2));
    scenes::save_jsonl(base.output_dir / "train.jsonl", train);
    scenes::save_jsonl(base.output_dir / "eval.jsonl", eval);
  } else {
    train = load_data(base.train_data);
    if (base.eval_data.empty()) throw harness::UserError("invalid_config", "eval_data is required for ablations");
    eval = load_data(base.eval_data);
  }
  const auto rows = harness::run_ablation(preset, base, seeds, train, eval,
                                          quiet ? std::function<void(const std::string&)>{} : log_line);
  const auto csv = harness::ablation_csv(rows);
  harness::write_text_file(base.output_dir / (preset + ".csv"), csv);
  std::cout << csv;
  return 0;
}

int cmd_complexity(const fs::path& source, const fs::path& data_path, const std::vector<double>& thresholds) {
  std::optional<model::Detector<float>> det;
  if (harness::is_checkpoint_dir(source)) {
    det.emplace(harness::load_detector<float>(source));
  } else {
    det.emplace(detector_config_from(harness::read_json_file(source)));
  }
  auto sorted = thresholds;
  std::sort(sorted.begin(), sorted.end());
  for (double s : sorted)
    if (!(s > 0.0 && s < 1.0)) throw harness::UserError("invalid_argument", "thresholds must lie in (0, 1)");
  const auto data = load_data(data_path);
  std::ostringstream os;
  os.precision(9);
  os << "threshold,mean_query_count,decoder_flops,ap50\n";
  for (double s : sorted) {
    const auto records = harness::predict(*det, data, harness::EvalOptions{s, false, 0.5});
    double q = 0, flops = 0;
    for (const auto& r : records) {
      q += r.query_count;
      flops += evalkit::decoder_flops(r.query_count, det->config()).total;
    }
    const double n = std::max<std::size_t>(1, records.size());
    const auto report = evalkit::evaluate(records, det->config().num_classes);
    os << s << ',' << q / n << ',' << flops / n << ',' << report.ap50 << '\n';
  }
  std::cout << os.str();
  return 0;
}

int cmd_bench(const fs::path& config_path, int n, int iterations, int warmup, bool json) {
  const auto cfg = detector_config_from(harness::read_json_file(config_path));
  const auto report = harness::bench_decoder(cfg, n, iterations, warmup);
  std::cout << (json ? report.to_json().dump(2) + "\n" : report.to_text());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Flexible single-query detector: data generation, training, evaluation and ablations"};
  app.require_subcommand(1);

  std::string spec_path, out_path;
  auto* gen = app.add_subcommand("gen-data", "Generate a synthetic scene dataset (JSONL)");
  gen->add_option("spec", spec_path, "Dataset spec JSON")->required();
  gen->add_option("out", out_path, "Output JSONL path")->required();

  std::string run_path;
  bool resume = false, quiet = false;
  auto* train = app.add_subcommand("train", "Train a detector from a run config");
  train->add_option("run", run_path, "Run config JSON")->required();
  train->add_flag("--resume", resume, "Continue from the checkpoint in the output directory");
  train->add_flag("--quiet", quiet, "No progress lines");

  std::string ckpt, data_path;
  std::optional<double> threshold;
  bool nms = false, csv = false;
  double nms_iou = 0.5;
  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint on a dataset");
  eval->add_option("checkpoint", ckpt, "Checkpoint directory")->required();
  eval->add_option("data", data_path, "Dataset JSONL")->required();
  eval->add_option("--threshold", threshold, "Selection threshold S (overrides the trained value)");
  eval->add_flag("--nms", nms, "Apply class-wise NMS to the final detections");
  eval->add_option("--nms-iou", nms_iou, "NMS IoU threshold");
  eval->add_flag("--csv", csv, "CSV instead of JSON");

  std::string preset, ablate_config, ablate_out;
  std::vector<std::uint64_t> seeds{0};
  int ablate_iters = -1;
  bool ablate_quiet = false;
  auto* ablate = app.add_subcommand("ablate", "Train and compare the variants of an ablation preset");
  ablate->add_option("preset", preset, "no-sa | binary-nms | sa-first | no-sgq | k-sweep | blp-dp-split | fixed-query")
      ->required();
  ablate->add_option("--config", ablate_config, "Base run config (default: built-in run on generated data)");
  ablate->add_option("--out", ablate_out, "Output directory");
  ablate->add_option("--seeds", seeds, "Seeds")->delimiter(',');
  ablate->add_option("--iterations", ablate_iters, "Override the iteration budget");
  ablate->add_flag("--quiet", ablate_quiet, "No progress lines");

  std::string source, cdata;
  std::vector<double> thresholds{0.005, 0.01, 0.02, 0.05, 0.1, 0.2, 0.3};
  auto* complexity = app.add_subcommand("complexity", "Query count and decoder FLOPs against the threshold S");
  complexity->add_option("source", source, "Checkpoint directory or config JSON")->required();
  complexity->add_option("data", cdata, "Dataset JSONL")->required();
  complexity->add_option("--thresholds", thresholds, "Thresholds")->delimiter(',');

  std::string bench_config;
  int bench_n = 128, bench_iters = 200, bench_warmup = 20;
  bool bench_json = false;
  auto* bench = app.add_subcommand("bench-decoder", "Time the decoder against a 6-layer SA+CA baseline");
  bench->add_option("config", bench_config, "Detector or run config JSON")->required();
  bench->add_option("--queries", bench_n, "Number of queries N");
  bench->add_option("--iterations", bench_iters, "Timed iterations (>= 100 recommended)");
  bench->add_option("--warmup", bench_warmup, "Untimed warmup iterations");
  bench->add_flag("--json", bench_json, "JSON output");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return report_error("usage", e.what(), 1);
  }

  try {
    if (*gen) return cmd_gen_data(spec_path, out_path);
    if (*train) return cmd_train(run_path, resume, quiet);
    if (*eval) return cmd_eval(ckpt, data_path, threshold, nms, nms_iou, csv);
    if (*ablate) return cmd_ablate(preset, ablate_config, ablate_out, seeds, ablate_iters, ablate_quiet);
    if (*complexity) return cmd_complexity(source, cdata, thresholds);
    if (*bench) return cmd_bench(bench_config, bench_n, bench_iters, bench_warmup, bench_json);
  } catch (const harness::UserError& e) {
    return report_error(e.code(), e.what(), 1);
  } catch (const scenes::ParseError& e) {
    return report_error("parse_error", e.what(), 1);
  } catch (const scenes::GenerationError& e) {
    return report_error("generation_error", e.what(), 1);
  } catch (const harness::TrainingError& e) {
    return report_error("non_finite_loss", e.what(), 2);
  } catch (const std::invalid_argument& e) {
    return report_error("invalid_argument", e.what(), 1);
  } catch (const std::exception& e) {
    return report_error("internal", e.what(), 2);
  }
  return report_error("internal", "no subcommand handled", 2);
}
