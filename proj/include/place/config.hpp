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

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include <json.hpp>

#include "place/layout_control.hpp"
#include "place/trainer.hpp"
#include "place/unet.hpp"

namespace place {

// Resolved settings for one CLI run. Toggles map onto the ablation variant
// rows: layout representation, adaptive alpha, SA loss, LFP loss.
struct RunConfig {
  std::uint64_t seed = 0;
  std::string data_dir;
  std::string checkpoint;

  LayoutMode layout = LayoutMode::kCoverage;
  bool adaptive_alpha = true;
  float fixed_alpha = 1.0f;
  bool use_sa = true;
  bool use_lfp = true;
  double lambda_sa = 1.0;
  double lambda_lfp = 1.0;
  FusionDomain fusion_domain = FusionDomain::kProduct;

  // Sampling.
  double guidance = 2.0;
  int steps = 50;

  // Training.
  int train_steps = 2000;
  int batch_size = 8;
  int lf_batch_size = 8;
  double learning_rate = 1e-3;
  double caption_dropout = 0.1;
  double grad_clip = 1.0;
  bool sa_through_fusion = false;
  int labeled_count = 2000;
  int layout_free_count = 2000;

  UNetConfig model;
  int jobs = 1;

  double effective_lambda_sa() const { return use_sa ? lambda_sa : 0.0; }
  double effective_lambda_lfp() const { return use_lfp ? lambda_lfp : 0.0; }
  // Model config with the fusion toggles applied.
  UNetConfig resolved_model() const;
  TrainOptions train_options() const;
};

// Preset for ablation row 1..8 as (coverage layout, adaptive alpha, SA, LFP):
// (1) none, (2) layout, (3) alpha, (4) SA, (5) layout + alpha,
// (6) (5) + SA, (7) (5) + LFP, (8) all four. Disabled toggles fall back to
// the nearest layout, fixed alpha and zero lambdas.
RunConfig variant_row(int row);

// Unknown keys and bad values raise MalformedConfig; a toggle that
// contradicts the chosen "variant_row" or its own lambda raises
// ConflictingToggles.
RunConfig config_from_json(const nlohmann::json& j);
RunConfig load_config(const std::filesystem::path& path);
nlohmann::json config_to_json(const RunConfig& config);

std::string layout_mode_name(LayoutMode mode);
LayoutMode parse_layout_mode(const std::string& name);

}  // namespace place
