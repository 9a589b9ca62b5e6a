// Copyright 2026 The placekit Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "place/config.hpp"

#include <fstream>
#include <set>

#include "place/checkpoint.hpp"
#include "place/error.hpp"

namespace place {

using nlohmann::json;

std::string layout_mode_name(LayoutMode mode) { return mode == LayoutMode::kCoverage ? "lcm" : "nearest"; }

LayoutMode parse_layout_mode(const std::string& name) {
  if (name == "lcm") return LayoutMode::kCoverage;
  if (name == "nearest") return LayoutMode::kNearest;
  throw Error(ErrorCode::kMalformedConfig, "layout must be 'lcm' or 'nearest', got '" + name + "'");
}

UNetConfig RunConfig::resolved_model() const {
  UNetConfig m = model;
  m.adaptive_alpha = adaptive_alpha;
  m.fixed_alpha = fixed_alpha;
  m.domain = fusion_domain;
  return m;
}

TrainOptions RunConfig::train_options() const {
  TrainOptions o;
  o.steps = train_steps;
  o.batch_size = batch_size;
  o.lf_batch_size = lf_batch_size;
  o.lambda_sa = effective_lambda_sa();
  o.lambda_lfp = effective_lambda_lfp();
  o.layout_mode = layout;
  o.caption_dropout = caption_dropout;
  o.sa_through_fusion = sa_through_fusion;
  o.adam.learning_rate = learning_rate;
  o.adam.grad_clip = grad_clip;
  o.seed = seed;
  return o;
}

RunConfig variant_row(int row) {
  static const bool kRows[8][4] = {
      // lcm, adaptive, sa, lfp
      {false, false, false, false}, {true, false, false, false}, {false, true, false, false},
      {false, false, true, false},  {true, true, false, false},  {true, true, true, false},
      {true, true, false, true},    {true, true, true, true}};
  if (row < 1 || row > 8) throw Error(ErrorCode::kMalformedConfig, "variant_row must be 1..8");
  const bool* r = kRows[row - 1];
  RunConfig c;
  c.layout = r[0] ? LayoutMode::kCoverage : LayoutMode::kNearest;
  c.adaptive_alpha = r[1];
  c.use_sa = r[2];
  c.use_lfp = r[3];
  return c;
}

namespace {

template <typename T>
T get(const json& j, const char* key) {
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kMalformedConfig, std::string("'") + key + "': " + e.what());
  }
}

void check_keys(const json& j, const std::set<std::string>& allowed, const std::string& where) {
  if (!j.is_object()) throw Error(ErrorCode::kMalformedConfig, where + " must be an object");
  for (const auto& item : j.items()) {
    if (!allowed.count(item.key())) throw Error(ErrorCode::kMalformedConfig, "unknown key '" + item.key() + "' in " + where);
  }
}

void conflict(const std::string& what) { throw Error(ErrorCode::kConflictingToggles, what); }

}  // namespace

RunConfig config_from_json(const json& j) {
  check_keys(j, {"seed", "data", "checkpoint", "variant_row", "layout", "alpha", "fixed_alpha", "sa", "lfp",
                 "lambda_sa", "lambda_lfp", "fusion_domain", "guidance", "steps", "train", "model", "jobs"},
             "config");
  RunConfig c = j.contains("variant_row") ? variant_row(get<int>(j, "variant_row")) : RunConfig{};
  const bool preset = j.contains("variant_row");

  if (j.contains("seed")) c.seed = get<std::uint64_t>(j, "seed");
  if (j.contains("data")) c.data_dir = get<std::string>(j, "data");
  if (j.contains("checkpoint")) c.checkpoint = get<std::string>(j, "checkpoint");

  if (j.contains("layout")) {
    const LayoutMode m = parse_layout_mode(get<std::string>(j, "layout"));
    if (preset && m != c.layout) conflict("'layout' contradicts variant_row");
    c.layout = m;
  }
  if (j.contains("alpha")) {
    const std::string a = get<std::string>(j, "alpha");
    if (a != "adaptive" && a != "fixed") throw Error(ErrorCode::kMalformedConfig, "alpha must be 'adaptive' or 'fixed'");
    if (preset && (a == "adaptive") != c.adaptive_alpha) conflict("'alpha' contradicts variant_row");
    c.adaptive_alpha = a == "adaptive";
  }
  if (j.contains("fixed_alpha")) {
    if (c.adaptive_alpha) conflict("'fixed_alpha' given while alpha is adaptive");
    c.fixed_alpha = get<float>(j, "fixed_alpha");
    if (!(c.fixed_alpha >= 0.0f && c.fixed_alpha <= 1.0f)) throw Error(ErrorCode::kMalformedConfig, "fixed_alpha outside [0, 1]");
  }
  if (j.contains("sa")) {
    const bool v = get<bool>(j, "sa");
    if (preset && v != c.use_sa) conflict("'sa' contradicts variant_row");
    c.use_sa = v;
  }
  if (j.contains("lfp")) {
    const bool v = get<bool>(j, "lfp");
    if (preset && v != c.use_lfp) conflict("'lfp' contradicts variant_row");
    c.use_lfp = v;
  }
  if (j.contains("lambda_sa")) {
    c.lambda_sa = get<double>(j, "lambda_sa");
    if (c.lambda_sa < 0.0) throw Error(ErrorCode::kMalformedConfig, "lambda_sa must be non-negative");
    if (!c.use_sa && c.lambda_sa != 0.0) conflict("'lambda_sa' set while the SA loss is disabled");
  }
  if (j.contains("lambda_lfp")) {
    c.lambda_lfp = get<double>(j, "lambda_lfp");
    if (c.lambda_lfp < 0.0) throw Error(ErrorCode::kMalformedConfig, "lambda_lfp must be non-negative");
    if (!c.use_lfp && c.lambda_lfp != 0.0) conflict("'lambda_lfp' set while the LFP loss is disabled");
  }
  if (j.contains("fusion_domain")) {
    try {
      c.fusion_domain = parse_fusion_domain(get<std::string>(j, "fusion_domain"));
    } catch (const std::invalid_argument& e) {
      throw Error(ErrorCode::kMalformedConfig, e.what());
    }
  }
  if (j.contains("guidance")) c.guidance = get<double>(j, "guidance");
  if (j.contains("steps")) c.steps = get<int>(j, "steps");
  if (j.contains("jobs")) c.jobs = get<int>(j, "jobs");
  if (c.guidance < 0.0) throw Error(ErrorCode::kMalformedConfig, "guidance must be non-negative");
  if (c.steps < 1) throw Error(ErrorCode::kMalformedConfig, "steps must be at least 1");
  if (c.jobs < 1) throw Error(ErrorCode::kMalformedConfig, "jobs must be at least 1");

  if (j.contains("train")) {
    const json& t = j.at("train");
    check_keys(t, {"steps", "batch_size", "lf_batch_size", "learning_rate", "caption_dropout", "grad_clip",
                   "sa_through_fusion", "labeled", "layout_free"},
               "train");
    if (t.contains("steps")) c.train_steps = get<int>(t, "steps");
    if (t.contains("batch_size")) c.batch_size = get<int>(t, "batch_size");
    if (t.contains("lf_batch_size")) c.lf_batch_size = get<int>(t, "lf_batch_size");
    if (t.contains("learning_rate")) c.learning_rate = get<double>(t, "learning_rate");
    if (t.contains("caption_dropout")) c.caption_dropout = get<double>(t, "caption_dropout");
    if (t.contains("grad_clip")) c.grad_clip = get<double>(t, "grad_clip");
    if (t.contains("sa_through_fusion")) c.sa_through_fusion = get<bool>(t, "sa_through_fusion");
    if (t.contains("labeled")) c.labeled_count = get<int>(t, "labeled");
    if (t.contains("layout_free")) c.layout_free_count = get<int>(t, "layout_free");
    if (c.train_steps < 0 || c.batch_size < 1 || c.lf_batch_size < 1 || c.learning_rate <= 0.0 ||
        c.caption_dropout < 0.0 || c.caption_dropout > 1.0 || c.labeled_count < 1 || c.layout_free_count < 0) {
      throw Error(ErrorCode::kMalformedConfig, "invalid training settings");
    }
  }
  if (j.contains("model")) {
    check_keys(j.at("model"), {"image_size", "in_channels", "base_channels", "channel_mult", "attention_resolutions",
                               "groups", "time_features", "time_embed_dim", "text_dim", "schedule_steps",
                               "beta_start", "beta_end"},
               "model");
    c.model = unet_config_from_json(j.at("model"));
  }
  c.resolved_model().validate();
  return c;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIoFailure, "cannot read " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kMalformedConfig, path.string() + ": " + e.what());
  }
  return config_from_json(j);
}

json config_to_json(const RunConfig& c) {
  json model = unet_config_to_json(c.model);
  for (const char* k : {"fusion_domain", "adaptive_alpha", "fixed_alpha"}) model.erase(k);
  json j{{"seed", c.seed},
         {"data", c.data_dir},
         {"checkpoint", c.checkpoint},
         {"layout", layout_mode_name(c.layout)},
         {"alpha", c.adaptive_alpha ? "adaptive" : "fixed"},
         {"sa", c.use_sa},
         {"lfp", c.use_lfp},
         {"lambda_sa", c.lambda_sa},
         {"lambda_lfp", c.lambda_lfp},
         {"fusion_domain", std::string(fusion_domain_name(c.fusion_domain))},
         {"guidance", c.guidance},
         {"steps", c.steps},
         {"jobs", c.jobs},
         {"train",
          {{"steps", c.train_steps},
           {"batch_size", c.batch_size},
           {"lf_batch_size", c.lf_batch_size},
           {"learning_rate", c.learning_rate},
           {"caption_dropout", c.caption_dropout},
           {"grad_clip", c.grad_clip},
           {"sa_through_fusion", c.sa_through_fusion},
           {"labeled", c.labeled_count},
           {"layout_free", c.layout_free_count}}},
         {"model", model}};
  if (!c.adaptive_alpha) j["fixed_alpha"] = c.fixed_alpha;
  if (!c.use_sa) j.erase("lambda_sa");
  if (!c.use_lfp) j.erase("lambda_lfp");
  return j;
}

}  // namespace place
