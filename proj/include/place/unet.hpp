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

#include <map>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "place/diffusion.hpp"
#include "place/fusion_attention.hpp"
#include "place/layout_control.hpp"
#include "place/rng.hpp"
#include "place/semantic_map.hpp"
#include "place/tensor.hpp"
#include "place/text_semantics.hpp"

namespace place {

struct UNetConfig {
  int image_size = 32;
  int in_channels = 3;
  int base_channels = 16;
  std::vector<int> channel_mult = {1, 2, 4};
  // Feature-map side lengths that get a self-attention + layout-aware
  // cross-attention block.
  std::vector<int> attention_resolutions = {16, 8};
  int groups = 8;
  int time_features = 64;
  int time_embed_dim = 128;
  int text_dim = Vocabulary::kDefaultEmbeddingDim;
  FusionDomain domain = FusionDomain::kProduct;
  bool adaptive_alpha = true;
  float fixed_alpha = 1.0f;
  int schedule_steps = 1000;
  double beta_start = 1e-4;
  double beta_end = 0.02;

  void validate() const;
  int levels() const { return static_cast<int>(channel_mult.size()); }
  int level_resolution(int level) const { return image_size >> level; }
};

// Named trainable tensors in registration order.
class ParameterStore {
 public:
  ag::Var add(const std::string& name, Tensor init);
  const std::vector<std::pair<std::string, ag::Var>>& entries() const { return entries_; }
  const ag::Var* find(const std::string& name) const;
  std::size_t scalar_count() const;
  void zero_grad();

 private:
  std::vector<std::pair<std::string, ag::Var>> entries_;
};

// Per-sample conditioning: a prompt plus one layout per attention
// resolution, or no layouts at all (layout NONE).
struct Conditioning {
  ConditionedPrompt prompt;
  std::map<int, std::shared_ptr<const LayoutControlMap>> layouts;
  bool has_layout() const { return !layouts.empty(); }
};

Conditioning null_conditioning();
Conditioning layout_free_conditioning(ConditionedPrompt prompt);
Conditioning layout_conditioning(const SemanticMap& map, const Vocabulary& vocab, const UNetConfig& config,
                                 LayoutMode mode, std::span<const std::string> extra_words = {});

struct ForwardOptions {
  // Run every sample with alpha = 0 even when it has a layout.
  bool force_alpha_zero = false;
  std::optional<float> alpha_override;
};

struct BlockTrace {
  int resolution = 0;
  std::string name;
  ag::Var fusion;     // flat F, see ag::fusion_map
  ag::Var self_attn;  // [B, tokens, tokens]
  ag::FusionBatch batch;
  std::vector<float> alpha;  // effective alpha per sample
};

struct UNetOutput {
  ag::Var eps;  // [B, S, S, C]
  std::vector<BlockTrace> blocks;
};

class PlaceModel {
 public:
  PlaceModel(UNetConfig config, Vocabulary vocab, std::uint64_t seed);

  const UNetConfig& config() const { return config_; }
  const Vocabulary& vocab() const { return vocab_; }
  const NoiseSchedule& schedule() const { return schedule_; }
  ParameterStore& parameters() { return params_; }
  const ParameterStore& parameters() const { return params_; }

  // z is [B, S, S, C]; one timestep and one conditioning per sample.
  UNetOutput forward(const ag::Var& z, const std::vector<int>& timesteps,
                     const std::vector<Conditioning>& cond, const ForwardOptions& options = {}) const;

  // Alpha of every attention block at timestep t for a layout-conditioned
  // sample, in forward order, with the block names.
  std::vector<std::pair<std::string, float>> block_alphas(int t) const;

 private:
  struct Norm {
    ag::Var gamma, beta;
  };
  struct ResBlock {
    int cin = 0, cout = 0;
    Norm norm1, norm2;
    ag::Var conv1_w, conv1_b, temb_w, temb_b, conv2_w, conv2_b, skip_w, skip_b;
  };
  struct AttnBlock {
    int channels = 0, resolution = 0;
    std::string name;
    Norm norm1, norm2;
    ag::Var sq, sk, sv, so, so_b;          // self-attention
    ag::Var cq, ck, cv, co, co_b;          // cross-attention
    ag::Var alpha_w, alpha_b;              // adaptive alpha
  };

  Norm make_norm(const std::string& prefix, int channels);
  ResBlock make_res(const std::string& prefix, int cin, int cout, Rng& rng);
  AttnBlock make_attn(const std::string& prefix, int channels, int resolution, Rng& rng);
  ag::Var res_forward(const ResBlock& blk, const ag::Var& h, const ag::Var& temb) const;
  ag::Var attn_forward(const AttnBlock& blk, const ag::Var& h, const ag::Var& temb, const ag::Var& text,
                       const std::vector<Conditioning>& cond, const std::vector<int>& text_offsets,
                       const ForwardOptions& options, std::vector<BlockTrace>& traces) const;
  bool has_attention(int resolution) const;
  ag::Var time_embedding(const std::vector<int>& timesteps) const;

  UNetConfig config_;
  Vocabulary vocab_;
  NoiseSchedule schedule_;
  ParameterStore params_;

  ag::Var text_table_;
  ag::Var time_w1_, time_b1_, time_w2_, time_b2_;
  ag::Var conv_in_w_, conv_in_b_;
  std::vector<ResBlock> down_res_;
  std::vector<std::optional<AttnBlock>> down_attn_;
  std::vector<ResBlock> up_res_;  // index = level, last level unused
  std::vector<std::optional<AttnBlock>> up_attn_;
  Norm out_norm_;
  ag::Var conv_out_w_, conv_out_b_;
};

}  // namespace place
