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
#include <vector>

#include "place/losses.hpp"
#include "place/synth_data.hpp"
#include "place/unet.hpp"

namespace place {

struct LabeledExample {
  std::vector<float> image;  // [S, S, 3] in [-1, 1]
  SemanticMap map;
};

struct FreeExample {
  std::vector<float> image;
  ConditionedPrompt prompt;
};

struct TrainingSet {
  std::vector<LabeledExample> labeled;
  std::vector<FreeExample> layout_free;
};

// Labeled scenes never contain the held-out class; layout-free pairs may.
TrainingSet synth_training_set(int labeled, int layout_free, std::uint64_t seed, const Vocabulary& vocab,
                               const SynthConfig& config = {});
// "train" entries become labeled examples and "lf" entries layout-free ones.
TrainingSet load_training_set(const std::filesystem::path& dir, const Vocabulary& vocab);

struct AdamOptions {
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  // Global gradient-norm clip; <= 0 disables.
  double grad_clip = 1.0;
};

class Adam {
 public:
  Adam(ParameterStore& params, AdamOptions options);
  // Applies one update from the accumulated gradients and returns the
  // gradient norm before clipping.
  double step();
  int steps() const { return step_; }
  const AdamOptions& options() const { return options_; }

 private:
  ParameterStore& params_;
  AdamOptions options_;
  std::vector<std::vector<float>> m_;
  std::vector<std::vector<float>> v_;
  int step_ = 0;
};

struct Batch {
  Tensor x0;  // [B, S, S, 3]
  std::vector<Conditioning> cond;
  std::vector<int> t;
  Tensor eps;
};

struct LossTerms {
  ag::Var ldm;
  ag::Var sa;   // undefined when lambda_sa == 0
  ag::Var lfp;  // undefined without a layout-free batch or when lambda_lfp == 0
  ag::Var total;
  LossReport report;
  double alpha_mean = 0.0;  // over layout-conditioned samples and blocks
};

// Builds the loss graph for one step. The labeled batch feeds LDM and SA;
// the optional layout-free batch runs with alpha forced to 0 and feeds LFP.
// Unless `sa_through_fusion` is set, the SA term treats F as a fixed target
// and only shapes the self-attention maps.
LossTerms compute_losses(const PlaceModel& model, const Batch& labeled, const Batch* layout_free, double lambda_sa,
                         double lambda_lfp, bool sa_through_fusion = false);

struct TrainOptions {
  int steps = 2000;
  int batch_size = 8;
  int lf_batch_size = 8;
  double lambda_sa = 1.0;
  double lambda_lfp = 1.0;
  LayoutMode layout_mode = LayoutMode::kCoverage;
  double caption_dropout = 0.1;
  bool sa_through_fusion = false;
  AdamOptions adam;
  std::uint64_t seed = 0;
};

struct StepResult {
  int step = 0;
  LossReport report;
  double alpha_mean = 0.0;
  double grad_norm = 0.0;
};

class Trainer {
 public:
  Trainer(PlaceModel& model, const TrainingSet& data, TrainOptions options);

  StepResult step();
  int steps_done() const { return adam_.steps(); }
  const TrainOptions& options() const { return options_; }

  Batch next_labeled_batch();
  Batch next_layout_free_batch();

 private:
  PlaceModel& model_;
  const TrainingSet& data_;
  TrainOptions options_;
  Adam adam_;
  Rng rng_;
  std::vector<Conditioning> labeled_cond_;
};

}  // namespace place
