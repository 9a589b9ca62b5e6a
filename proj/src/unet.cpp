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

#include "place/unet.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "place/error.hpp"
#include "place/ops.hpp"

namespace place {

using ag::Var;

void UNetConfig::validate() const {
  auto fail = [](const std::string& what) { throw Error(ErrorCode::kMalformedConfig, what); };
  if (image_size <= 0 || in_channels <= 0 || base_channels <= 0) fail("sizes must be positive");
  if (channel_mult.empty()) fail("channel_mult is empty");
  if (image_size % (1 << (levels() - 1)) != 0) fail("image_size not divisible by the level count");
  for (int m : channel_mult) {
    if (m <= 0 || (base_channels * m) % groups != 0) fail("channel counts must be divisible by groups");
  }
  for (int r : attention_resolutions) {
    bool found = false;
    for (int l = 0; l < levels(); ++l) found |= level_resolution(l) == r;
    if (!found) fail("attention resolution " + std::to_string(r) + " is not a feature-map size");
  }
  if (time_features % 2 != 0 || time_features <= 0) fail("time_features must be even");
  if (text_dim <= 0 || time_embed_dim <= 0) fail("embedding sizes must be positive");
  if (!(fixed_alpha >= 0.0f && fixed_alpha <= 1.0f)) fail("fixed_alpha must lie in [0, 1]");
  if (schedule_steps < 2) fail("schedule_steps must be at least 2");
}

Var ParameterStore::add(const std::string& name, Tensor init) {
  if (find(name)) throw std::logic_error("duplicate parameter " + name);
  Var v = Var::parameter(std::move(init));
  entries_.emplace_back(name, v);
  return v;
}

const Var* ParameterStore::find(const std::string& name) const {
  for (const auto& [n, v] : entries_) {
    if (n == name) return &v;
  }
  return nullptr;
}

std::size_t ParameterStore::scalar_count() const {
  std::size_t n = 0;
  for (const auto& e : entries_) n += e.second.value().size();
  return n;
}

void ParameterStore::zero_grad() {
  for (auto& e : entries_) e.second.zero_grad();
}

Conditioning null_conditioning() { return Conditioning{unconditional_prompt(), {}}; }

Conditioning layout_free_conditioning(ConditionedPrompt prompt) { return Conditioning{std::move(prompt), {}}; }

Conditioning layout_conditioning(const SemanticMap& map, const Vocabulary& vocab, const UNetConfig& config,
                                 LayoutMode mode, std::span<const std::string> extra_words) {
  Conditioning c;
  c.prompt = build_prompt(map, vocab, extra_words);
  for (int r : config.attention_resolutions) {
    if (c.layouts.count(r)) continue;
    c.layouts[r] = std::make_shared<const LayoutControlMap>(make_layout(mode, map, Dims{r, r}, c.prompt.token_classes));
  }
  return c;
}

namespace {

Tensor normal_tensor(Shape shape, double stddev, Rng& rng) {
  Tensor t(std::move(shape));
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = static_cast<float>(rng.normal() * stddev);
  return t;
}

Tensor fan_in_init(Shape shape, Rng& rng) {
  const double fan_in = shape[0];
  return normal_tensor(std::move(shape), 1.0 / std::sqrt(fan_in), rng);
}

void check_finite(const Tensor& t, const std::string& where) {
  for (float v : t.values()) {
    if (!std::isfinite(v)) throw Error(ErrorCode::kNonFiniteActivation, where);
  }
}

}  // namespace

PlaceModel::PlaceModel(UNetConfig config, Vocabulary vocab, std::uint64_t seed)
    : config_(std::move(config)),
      vocab_(std::move(vocab)),
      schedule_(NoiseSchedule::linear(config_.schedule_steps, config_.beta_start, config_.beta_end)) {
  config_.validate();
  if (vocab_.embedding_dim() != config_.text_dim) {
    throw Error(ErrorCode::kDimMismatch, "vocabulary embedding size differs from text_dim");
  }
  Rng rng(seed);
  const int c0 = config_.base_channels;
  const int tf = config_.time_features;
  const int te = config_.time_embed_dim;

  text_table_ = params_.add("text.embedding", normal_tensor({vocab_.size(), config_.text_dim}, 1.0, rng));
  time_w1_ = params_.add("time.w1", fan_in_init({tf, te}, rng));
  time_b1_ = params_.add("time.b1", Tensor({te}));
  time_w2_ = params_.add("time.w2", fan_in_init({te, te}, rng));
  time_b2_ = params_.add("time.b2", Tensor({te}));
  conv_in_w_ = params_.add("conv_in.w", fan_in_init({9 * config_.in_channels, c0}, rng));
  conv_in_b_ = params_.add("conv_in.b", Tensor({c0}));

  const int levels = config_.levels();
  int prev = c0;
  for (int l = 0; l < levels; ++l) {
    const int ch = c0 * config_.channel_mult[l];
    const std::string p = "down" + std::to_string(l);
    down_res_.push_back(make_res(p + ".res", prev, ch, rng));
    const int r = config_.level_resolution(l);
    if (has_attention(r)) {
      down_attn_.emplace_back(make_attn(p + ".attn", ch, r, rng));
    } else {
      down_attn_.emplace_back(std::nullopt);
    }
    prev = ch;
  }
  up_res_.resize(levels);
  up_attn_.resize(levels);
  for (int l = levels - 2; l >= 0; --l) {
    const int ch = c0 * config_.channel_mult[l];
    const std::string p = "up" + std::to_string(l);
    up_res_[l] = make_res(p + ".res", prev + ch, ch, rng);
    const int r = config_.level_resolution(l);
    if (has_attention(r)) up_attn_[l] = make_attn(p + ".attn", ch, r, rng);
    prev = ch;
  }
  out_norm_ = make_norm("out.norm", prev);
  conv_out_w_ = params_.add("conv_out.w", Tensor({9 * prev, config_.in_channels}));
  conv_out_b_ = params_.add("conv_out.b", Tensor({config_.in_channels}));
}

bool PlaceModel::has_attention(int resolution) const {
  const auto& a = config_.attention_resolutions;
  return std::find(a.begin(), a.end(), resolution) != a.end();
}

PlaceModel::Norm PlaceModel::make_norm(const std::string& prefix, int channels) {
  return Norm{params_.add(prefix + ".gamma", Tensor({channels}, 1.0f)), params_.add(prefix + ".beta", Tensor({channels}))};
}

PlaceModel::ResBlock PlaceModel::make_res(const std::string& prefix, int cin, int cout, Rng& rng) {
  ResBlock b;
  b.cin = cin;
  b.cout = cout;
  b.norm1 = make_norm(prefix + ".norm1", cin);
  b.conv1_w = params_.add(prefix + ".conv1.w", fan_in_init({9 * cin, cout}, rng));
  b.conv1_b = params_.add(prefix + ".conv1.b", Tensor({cout}));
  b.temb_w = params_.add(prefix + ".temb.w", fan_in_init({config_.time_embed_dim, cout}, rng));
  b.temb_b = params_.add(prefix + ".temb.b", Tensor({cout}));
  b.norm2 = make_norm(prefix + ".norm2", cout);
  // Residual branches start at zero so every block begins as the identity.
  b.conv2_w = params_.add(prefix + ".conv2.w", Tensor({9 * cout, cout}));
  b.conv2_b = params_.add(prefix + ".conv2.b", Tensor({cout}));
  if (cin != cout) {
    b.skip_w = params_.add(prefix + ".skip.w", fan_in_init({cin, cout}, rng));
    b.skip_b = params_.add(prefix + ".skip.b", Tensor({cout}));
  }
  return b;
}

PlaceModel::AttnBlock PlaceModel::make_attn(const std::string& prefix, int channels, int resolution, Rng& rng) {
  AttnBlock b;
  b.channels = channels;
  b.resolution = resolution;
  b.name = prefix;
  b.norm1 = make_norm(prefix + ".norm1", channels);
  b.sq = params_.add(prefix + ".self.q", fan_in_init({channels, channels}, rng));
  b.sk = params_.add(prefix + ".self.k", fan_in_init({channels, channels}, rng));
  b.sv = params_.add(prefix + ".self.v", fan_in_init({channels, channels}, rng));
  b.so = params_.add(prefix + ".self.out.w", Tensor({channels, channels}));
  b.so_b = params_.add(prefix + ".self.out.b", Tensor({channels}));
  b.norm2 = make_norm(prefix + ".norm2", channels);
  b.cq = params_.add(prefix + ".cross.q", fan_in_init({channels, channels}, rng));
  b.ck = params_.add(prefix + ".cross.k", fan_in_init({config_.text_dim, channels}, rng));
  b.cv = params_.add(prefix + ".cross.v", fan_in_init({config_.text_dim, channels}, rng));
  b.co = params_.add(prefix + ".cross.out.w", Tensor({channels, channels}));
  b.co_b = params_.add(prefix + ".cross.out.b", Tensor({channels}));
  b.alpha_w = params_.add(prefix + ".alpha.w", Tensor({config_.time_embed_dim, 1}));
  b.alpha_b = params_.add(prefix + ".alpha.b", Tensor({1}, 2.0f));
  return b;
}

Var PlaceModel::res_forward(const ResBlock& blk, const Var& h, const Var& temb) const {
  const int g = config_.groups;
  Var a = ag::conv3x3(ag::silu(ag::group_norm(h, blk.norm1.gamma, blk.norm1.beta, g)), blk.conv1_w, blk.conv1_b);
  a = ag::add_channel(a, ag::linear(temb, blk.temb_w, blk.temb_b));
  a = ag::conv3x3(ag::silu(ag::group_norm(a, blk.norm2.gamma, blk.norm2.beta, g)), blk.conv2_w, blk.conv2_b);
  const Var skip = blk.cin == blk.cout ? h : ag::linear(h, blk.skip_w, blk.skip_b);
  return ag::add(skip, a);
}

Var PlaceModel::attn_forward(const AttnBlock& blk, const Var& h, const Var& temb, const Var& text,
                             const std::vector<Conditioning>& cond, const std::vector<int>& text_offsets,
                             const ForwardOptions& options, std::vector<BlockTrace>& traces) const {
  const int batch = h.value().dim(0);
  const int res = blk.resolution;
  const int tokens = res * res;
  const int ch = blk.channels;
  const int g = config_.groups;
  const Shape image_shape = h.shape();

  Var x = ag::reshape(ag::group_norm(h, blk.norm1.gamma, blk.norm1.beta, g), {batch, tokens, ch});
  const Var self_attn = ag::attention_probs(ag::linear(x, blk.sq), ag::linear(x, blk.sk),
                                            1.0f / std::sqrt(static_cast<float>(ch)));
  Var o = ag::bmm(self_attn, ag::linear(x, blk.sv));
  Var out = ag::add(h, ag::reshape(ag::linear(o, blk.so, blk.so_b), image_shape));

  ag::FusionBatch fb;
  fb.tokens = tokens;
  fb.domain = config_.domain;
  bool any_adaptive = false;
  for (int b = 0; b < batch; ++b) {
    ag::FusionSample s;
    s.text_offset = text_offsets[b];
    s.text_count = cond[b].prompt.prompt.length();
    if (cond[b].has_layout() && !options.force_alpha_zero) {
      s.layout = cond[b].layouts.at(res);
      if (options.alpha_override) {
        s.mode = ag::AlphaMode::kFixed;
        s.fixed_alpha = *options.alpha_override;
      } else if (config_.adaptive_alpha) {
        s.mode = ag::AlphaMode::kAdaptive;
        any_adaptive = true;
      } else {
        s.mode = ag::AlphaMode::kFixed;
        s.fixed_alpha = config_.fixed_alpha;
      }
    }
    fb.samples.push_back(std::move(s));
  }
  Var alpha;
  if (any_adaptive) alpha = ag::reshape(ag::sigmoid(ag::linear(temb, blk.alpha_w, blk.alpha_b)), {batch});

  Var x2 = ag::reshape(ag::group_norm(out, blk.norm2.gamma, blk.norm2.beta, g), {batch * tokens, ch});
  const Var fusion = ag::fusion_map(ag::linear(x2, blk.cq), ag::linear(text, blk.ck), alpha, fb);
  Var o2 = ag::apply_fusion(fusion, ag::linear(text, blk.cv), fb);
  out = ag::add(out, ag::reshape(ag::linear(o2, blk.co, blk.co_b), image_shape));

  BlockTrace trace;
  trace.resolution = res;
  trace.name = blk.name;
  trace.fusion = fusion;
  trace.self_attn = self_attn;
  trace.alpha = ag::effective_alpha(alpha, fb);
  trace.batch = std::move(fb);
  traces.push_back(std::move(trace));
  return out;
}

Var PlaceModel::time_embedding(const std::vector<int>& timesteps) const {
  const int batch = static_cast<int>(timesteps.size());
  Tensor tfeat({batch, config_.time_features});
  for (int b = 0; b < batch; ++b) {
    if (timesteps[b] < 0 || timesteps[b] >= schedule_.steps()) {
      throw Error(ErrorCode::kTimestepOutOfRange, "t=" + std::to_string(timesteps[b]));
    }
    const auto e = sinusoidal_embedding(timesteps[b], config_.time_features);
    for (int i = 0; i < config_.time_features; ++i) tfeat[b * config_.time_features + i] = static_cast<float>(e[i]);
  }
  const Var hidden = ag::silu(ag::linear(Var::constant(std::move(tfeat)), time_w1_, time_b1_));
  return ag::silu(ag::linear(hidden, time_w2_, time_b2_));
}

std::vector<std::pair<std::string, float>> PlaceModel::block_alphas(int t) const {
  ag::NoGradGuard no_grad;
  const Var temb = time_embedding({t});
  std::vector<std::pair<std::string, float>> out;
  auto visit = [&](const std::optional<AttnBlock>& blk) {
    if (!blk) return;
    const float a = config_.adaptive_alpha
                        ? ag::sigmoid(ag::linear(temb, blk->alpha_w, blk->alpha_b)).value()[0]
                        : config_.fixed_alpha;
    out.emplace_back(blk->name, a);
  };
  for (const auto& blk : down_attn_) visit(blk);
  for (int l = config_.levels() - 2; l >= 0; --l) visit(up_attn_[l]);
  return out;
}

UNetOutput PlaceModel::forward(const Var& z, const std::vector<int>& timesteps, const std::vector<Conditioning>& cond,
                               const ForwardOptions& options) const {
  const Tensor& zv = z.value();
  if (zv.rank() != 4 || zv.dim(1) != config_.image_size || zv.dim(2) != config_.image_size ||
      zv.dim(3) != config_.in_channels) {
    throw Error(ErrorCode::kShapeMismatch, "input " + shape_string(zv.shape()));
  }
  const int batch = zv.dim(0);
  if (static_cast<int>(timesteps.size()) != batch || static_cast<int>(cond.size()) != batch) {
    throw Error(ErrorCode::kShapeMismatch, "timesteps/conditioning count differs from batch");
  }
  if (options.alpha_override && !(*options.alpha_override >= 0.0f && *options.alpha_override <= 1.0f)) {
    throw Error(ErrorCode::kAlphaOutOfRange, "alpha override outside [0, 1]");
  }

  std::vector<int> tokens;
  std::vector<int> offsets;
  for (const Conditioning& c : cond) {
    const int n = c.prompt.prompt.length();
    if (n == 0) throw Error(ErrorCode::kShapeMismatch, "empty prompt");
    if (static_cast<int>(c.prompt.token_classes.size()) != n) {
      throw Error(ErrorCode::kShapeMismatch, "token class map length differs from prompt");
    }
    for (int tok : c.prompt.prompt.tokens) {
      if (tok < 0 || tok >= vocab_.size()) throw Error(ErrorCode::kIndexOutOfRange, "token " + std::to_string(tok));
    }
    if (c.has_layout()) {
      for (int r : config_.attention_resolutions) {
        auto it = c.layouts.find(r);
        if (it == c.layouts.end() || !it->second) {
          throw Error(ErrorCode::kMissingResolutionLcm, "no layout for resolution " + std::to_string(r));
        }
        if (it->second->latent_dims() != Dims{r, r} || it->second->channels() != n) {
          throw Error(ErrorCode::kShapeMismatch, "layout for resolution " + std::to_string(r) + " has wrong shape");
        }
      }
    }
    offsets.push_back(static_cast<int>(tokens.size()));
    tokens.insert(tokens.end(), c.prompt.prompt.tokens.begin(), c.prompt.prompt.tokens.end());
  }

  check_finite(zv, "input latent");
  const Var temb = time_embedding(timesteps);
  const Var text = ag::embedding(text_table_, tokens);

  UNetOutput result;
  const int levels = config_.levels();
  std::vector<Var> skips;
  Var h = ag::conv3x3(z, conv_in_w_, conv_in_b_);
  for (int l = 0; l < levels; ++l) {
    h = res_forward(down_res_[l], h, temb);
    check_finite(h.value(), "down level " + std::to_string(l));
    if (down_attn_[l]) h = attn_forward(*down_attn_[l], h, temb, text, cond, offsets, options, result.blocks);
    skips.push_back(h);
    if (l + 1 < levels) h = ag::avg_pool2(h);
  }
  for (int l = levels - 2; l >= 0; --l) {
    h = ag::concat_channels(ag::upsample2(h), skips[l]);
    h = res_forward(up_res_[l], h, temb);
    check_finite(h.value(), "up level " + std::to_string(l));
    if (up_attn_[l]) h = attn_forward(*up_attn_[l], h, temb, text, cond, offsets, options, result.blocks);
  }
  h = ag::silu(ag::group_norm(h, out_norm_.gamma, out_norm_.beta, config_.groups));
  result.eps = ag::conv3x3(h, conv_out_w_, conv_out_b_);
  check_finite(result.eps.value(), "UNet output");
  return result;
}

}  // namespace place
