// SPDX-License-Identifier: Apache-2.0

#include "dsdet/model/config.hpp"

#include <cstdio>
#include <stdexcept>

namespace dsdet::model {

using nlohmann::json;

namespace {

void require(bool ok, const std::string& what) {
  if (!ok) throw std::invalid_argument("invalid detector config: " + what);
}

std::string dp_order_name(DpOrder o) { return o == DpOrder::kCrossFirst ? "ca-first" : "sa-first"; }
DpOrder dp_order_from(const std::string& s) {
  if (s == "ca-first") return DpOrder::kCrossFirst;
  if (s == "sa-first") return DpOrder::kSelfFirst;
  throw std::invalid_argument("unknown dp_order: " + s);
}

std::string selection_name(QuerySelection s) { return s == QuerySelection::kThreshold ? "threshold" : "fixed"; }
QuerySelection selection_from(const std::string& s) {
  if (s == "threshold") return QuerySelection::kThreshold;
  if (s == "fixed") return QuerySelection::kFixedTopN;
  throw std::invalid_argument("unknown selection: " + s);
}

json cost_json(const assignment::CostWeights& w) { return {{"cls", w.cls}, {"l1", w.l1}, {"giou", w.giou}}; }
void cost_from(const json& j, assignment::CostWeights& w) {
  w.cls = j.value("cls", w.cls);
  w.l1 = j.value("l1", w.l1);
  w.giou = j.value("giou", w.giou);
}

}  // namespace

void DetectorConfig::validate() const {
  require(grid >= 2, "grid must be >= 2");
  require(patch >= 1, "patch must be >= 1");
  require(embed_window >= 1 && embed_window % 2 == 1, "embed_window must be odd and >= 1");
  require(embed_hidden >= 0, "embed_hidden must be >= 0");
  require(channels >= 4 && channels % 4 == 0, "channels must be a positive multiple of 4");
  require(heads >= 1 && channels % heads == 0, "channels must be divisible by heads");
  require(mlp_hidden >= 1, "mlp_hidden must be >= 1");
  require(encoder_layers >= 0, "encoder_layers must be >= 0");
  require(num_classes >= 1, "num_classes must be >= 1");
  require(t1 >= 1, "T1 must be >= 1");
  require(t2 >= 1, "T2 must be >= 1");
  require(lambda >= 0, "lambda must be >= 0");
  require(threshold > 0.0 && threshold < 1.0, "threshold S must lie in (0, 1)");
  require(pool_cap >= 1, "pool_cap must be >= 1");
  require(fixed_queries >= 1, "fixed_queries must be >= 1");
  require(k >= 1, "K must be >= 1");
  require(target_mixing >= 0.0 && target_mixing <= 1.0, "target_mixing must lie in [0, 1]");
  require(init_offset_range > 0.0 && init_offset_range <= 1.0, "init_offset_range must lie in (0, 1]");
  require(class_prior > 0.0 && class_prior < 1.0, "class_prior must lie in (0, 1)");
  require(ln_eps > 0.0, "ln_eps must be positive");
  pocoo.validate();
}

losses::LossSettings DetectorConfig::loss_settings() const {
  losses::LossSettings s;
  s.weights = loss;
  s.blp_cost = blp_cost;
  s.dp_cost = dp_cost;
  s.k = k;
  s.pocoo = pocoo;
  s.target_mode = target_mode;
  s.target_mixing = target_mixing;
  return s;
}

std::string DetectorConfig::hash() const {
  const std::string canon = json(*this).dump();
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char ch : canon) {
    h ^= ch;
    h *= 1099511628211ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

void to_json(json& j, const DetectorConfig& c) {
  const auto& l = c.loss;
  j = json{
      {"grid", c.grid},
      {"patch", c.patch},
      {"embed_window", c.embed_window},
      {"embed_hidden", c.embed_hidden},
      {"channels", c.channels},
      {"heads", c.heads},
      {"mlp_hidden", c.mlp_hidden},
      {"encoder_layers", c.encoder_layers},
      {"num_classes", c.num_classes},
      {"t1", c.t1},
      {"t2", c.t2},
      {"lambda", c.lambda},
      {"dp_order", dp_order_name(c.dp_order)},
      {"stop_gradient_queries", c.stop_gradient_queries},
      {"selection", selection_name(c.selection)},
      {"threshold", c.threshold},
      {"pool_cap", c.pool_cap},
      {"fixed_queries", c.fixed_queries},
      {"k", c.k},
      {"blp_cost", cost_json(c.blp_cost)},
      {"dp_cost", cost_json(c.dp_cost)},
      {"loss",
       {{"enc_cls", l.enc_cls},
        {"enc_l1", l.enc_l1},
        {"enc_giou", l.enc_giou},
        {"blp_cls", l.blp_cls},
        {"blp_l1", l.blp_l1},
        {"blp_giou", l.blp_giou},
        {"dp_cls", l.dp_cls},
        {"dp_l1", l.dp_l1},
        {"dp_giou", l.dp_giou}}},
      {"pocoo", {{"alpha", c.pocoo.alpha}, {"image_h", c.pocoo.image_h}, {"image_w", c.pocoo.image_w}}},
      {"target_mixing", c.target_mixing},
      {"target_mode", c.target_mode == losses::TargetMode::kIouAware ? "iou-aware" : "binary"},
      {"activation", numerics::to_string(c.activation)},
      {"init_offset_range", c.init_offset_range},
      {"class_prior", c.class_prior},
      {"ln_eps", c.ln_eps},
      {"seed", c.seed},
  };
}

void from_json(const json& j, DetectorConfig& c) {
  c.grid = j.value("grid", c.grid);
  c.patch = j.value("patch", c.patch);
  c.embed_window = j.value("embed_window", c.embed_window);
  c.embed_hidden = j.value("embed_hidden", c.embed_hidden);
  c.channels = j.value("channels", c.channels);
  c.heads = j.value("heads", c.heads);
  c.mlp_hidden = j.value("mlp_hidden", c.mlp_hidden);
  c.encoder_layers = j.value("encoder_layers", c.encoder_layers);
  c.num_classes = j.value("num_classes", c.num_classes);
  c.t1 = j.value("t1", c.t1);
  c.t2 = j.value("t2", c.t2);
  c.lambda = j.value("lambda", c.lambda);
  if (j.contains("dp_order")) c.dp_order = dp_order_from(j.at("dp_order").get<std::string>());
  c.stop_gradient_queries = j.value("stop_gradient_queries", c.stop_gradient_queries);
  if (j.contains("selection")) c.selection = selection_from(j.at("selection").get<std::string>());
  c.threshold = j.value("threshold", c.threshold);
  c.pool_cap = j.value("pool_cap", c.pool_cap);
  c.fixed_queries = j.value("fixed_queries", c.fixed_queries);
  c.k = j.value("k", c.k);
  if (j.contains("blp_cost")) cost_from(j.at("blp_cost"), c.blp_cost);
  if (j.contains("dp_cost")) cost_from(j.at("dp_cost"), c.dp_cost);
  if (j.contains("loss")) {
    const auto& l = j.at("loss");
    auto& w = c.loss;
    w.enc_cls = l.value("enc_cls", w.enc_cls);
    w.enc_l1 = l.value("enc_l1", w.enc_l1);
    w.enc_giou = l.value("enc_giou", w.enc_giou);
    w.blp_cls = l.value("blp_cls", w.blp_cls);
    w.blp_l1 = l.value("blp_l1", w.blp_l1);
    w.blp_giou = l.value("blp_giou", w.blp_giou);
    w.dp_cls = l.value("dp_cls", w.dp_cls);
    w.dp_l1 = l.value("dp_l1", w.dp_l1);
    w.dp_giou = l.value("dp_giou", w.dp_giou);
  }
  if (j.contains("pocoo")) {
    const auto& p = j.at("pocoo");
    c.pocoo.alpha = p.value("alpha", c.pocoo.alpha);
    c.pocoo.image_h = p.value("image_h", c.pocoo.image_h);
    c.pocoo.image_w = p.value("image_w", c.pocoo.image_w);
  }
  c.target_mixing = j.value("target_mixing", c.target_mixing);
  if (j.contains("target_mode")) {
    const auto m = j.at("target_mode").get<std::string>();
    if (m == "iou-aware") c.target_mode = losses::TargetMode::kIouAware;
    else if (m == "binary") c.target_mode = losses::TargetMode::kBinary;
    else throw std::invalid_argument("unknown target_mode: " + m);
  }
  if (j.contains("activation")) c.activation = numerics::activation_from_string(j.at("activation").get<std::string>());
  c.init_offset_range = j.value("init_offset_range", c.init_offset_range);
  c.class_prior = j.value("class_prior", c.class_prior);
  c.ln_eps = j.value("ln_eps", c.ln_eps);
  c.seed = j.value("seed", c.seed);
}

}  // namespace dsdet::model
