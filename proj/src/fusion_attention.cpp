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

#include "place/fusion_attention.hpp"

#include <string>

#include "place/kernels.hpp"

namespace place {

FusionDomain parse_fusion_domain(std::string_view name) {
  if (name == "product") return FusionDomain::kProduct;
  if (name == "logit") return FusionDomain::kLogit;
  throw std::invalid_argument("fusion domain must be product or logit, got '" + std::string(name) + "'");
}

std::string_view fusion_domain_name(FusionDomain domain) {
  return domain == FusionDomain::kProduct ? "product" : "logit";
}

double AdaptiveAlpha::logit(std::span<const double> emb) const {
  if (emb.size() != weight.size()) {
    throw Error(ErrorCode::kShapeMismatch, "time embedding width does not match alpha weight");
  }
  double z = bias;
  for (std::size_t i = 0; i < emb.size(); ++i) z += weight[i] * emb[i];
  return z;
}

namespace ag {
namespace {

float sample_alpha(const Var& alpha, const FusionSample& s, int b) {
  switch (s.mode) {
    case AlphaMode::kAdaptive: return alpha.value()[b];
    case AlphaMode::kFixed: return s.fixed_alpha;
    case AlphaMode::kForcedZero: return 0.0f;
  }
  return 0.0f;
}

void check_batch(const Var& q, const FusionBatch& batch) {
  const int b = static_cast<int>(batch.samples.size());
  if (q.value().size() % (static_cast<std::size_t>(b) * batch.tokens) != 0) {
    throw Error(ErrorCode::kShapeMismatch, "fusion batch does not match query rows");
  }
  for (const auto& s : batch.samples) {
    if (s.mode != AlphaMode::kForcedZero) {
      if (!s.layout) throw Error(ErrorCode::kMissingResolutionLcm, "layout required unless alpha is forced to 0");
      if (s.layout->tokens() != batch.tokens || s.layout->channels() != s.text_count) {
        throw Error(ErrorCode::kShapeMismatch, "layout control map does not match attention block");
      }
    }
  }
}

}  // namespace

std::vector<float> effective_alpha(const Var& alpha, const FusionBatch& batch) {
  std::vector<float> out;
  for (std::size_t b = 0; b < batch.samples.size(); ++b) {
    out.push_back(sample_alpha(alpha, batch.samples[b], static_cast<int>(b)));
  }
  return out;
}

Var fusion_map(const Var& q, const Var& k, const Var& alpha, const FusionBatch& batch) {
  check_batch(q, batch);
  const int tokens = batch.tokens;
  const int d = q.value().dim(-1);
  const float scale = 1.0f / std::sqrt(static_cast<float>(d));
  const std::size_t total = static_cast<std::size_t>(tokens) * batch.total_text();
  Tensor fused({static_cast<int>(total)});
  // A_ca and the layout term are kept for the backward pass.
  auto probs = std::make_shared<std::vector<float>>(total);
  auto layout_term = std::make_shared<std::vector<float>>(total);
  std::vector<float> logits;
  const auto& kern = kernels::active();
  for (std::size_t b = 0; b < batch.samples.size(); ++b) {
    const FusionSample& s = batch.samples[b];
    const float a = sample_alpha(alpha, s, static_cast<int>(b));
    if (!(a >= 0.0f && a <= 1.0f)) throw Error(ErrorCode::kAlphaOutOfRange, "alpha must lie in [0, 1]");
    const LayoutControlMap* lcm = s.mode == AlphaMode::kForcedZero ? nullptr : s.layout.get();
    logits.resize(s.text_count);
    for (int i = 0; i < tokens; ++i) {
      const float* qi = q.value().data() + (b * tokens + i) * static_cast<std::size_t>(d);
      for (int j = 0; j < s.text_count; ++j) {
        logits[j] = scale * kern.dot(qi, k.value().data() + static_cast<std::size_t>(s.text_offset + j) * d, d);
      }
      const std::size_t off = (static_cast<std::size_t>(s.text_offset) * tokens) + static_cast<std::size_t>(i) * s.text_count;
      softmax_row(logits.data(), s.text_count, probs->data() + off);
      fuse_row(probs->data() + off, logits.data(), lcm ? lcm->value_row(i) : nullptr,
               lcm ? lcm->mask_row(i) : nullptr, s.text_count, a, batch.domain, layout_term->data() + off,
               fused.data() + off);
    }
  }
  std::vector<Var> parents{q, k};
  if (alpha.defined()) parents.push_back(alpha);
  return Var::make(std::move(fused), std::move(parents),
                   [q, k, alpha, batch, probs, layout_term, scale, d, tokens](Node& self) {
    std::vector<float> d_logits;
    for (std::size_t b = 0; b < batch.samples.size(); ++b) {
      const FusionSample& s = batch.samples[b];
      const float a = sample_alpha(alpha, s, static_cast<int>(b));
      const LayoutControlMap* lcm = s.mode == AlphaMode::kForcedZero ? nullptr : s.layout.get();
      float d_alpha = 0.0f;
      d_logits.resize(s.text_count);
      for (int i = 0; i < tokens; ++i) {
        const std::size_t off = (static_cast<std::size_t>(s.text_offset) * tokens) + static_cast<std::size_t>(i) * s.text_count;
        std::fill(d_logits.begin(), d_logits.end(), 0.0f);
        d_alpha += fuse_row_backward(probs->data() + off, layout_term->data() + off,
                                     lcm ? lcm->value_row(i) : nullptr, lcm ? lcm->mask_row(i) : nullptr,
                                     s.text_count, a, batch.domain, self.grad.data() + off, d_logits.data());
        const std::size_t qrow = (b * tokens + i) * static_cast<std::size_t>(d);
        for (int j = 0; j < s.text_count; ++j) {
          const float ds = d_logits[j] * scale;
          if (ds == 0.0f) continue;
          const std::size_t krow = static_cast<std::size_t>(s.text_offset + j) * d;
          if (q.requires_grad()) {
            kernels::active().axpy(d, ds, k.value().data() + krow, q.node()->ensure_grad().data() + qrow);
          }
          if (k.requires_grad()) {
            kernels::active().axpy(d, ds, q.value().data() + qrow, k.node()->ensure_grad().data() + krow);
          }
        }
      }
      if (s.mode == AlphaMode::kAdaptive && alpha.requires_grad()) {
        alpha.node()->ensure_grad()[b] += d_alpha;
      }
    }
  });
}

Var apply_fusion(const Var& fusion, const Var& v, const FusionBatch& batch) {
  const int tokens = batch.tokens;
  const int dm = v.value().dim(-1);
  const int nb = static_cast<int>(batch.samples.size());
  Tensor out({nb * tokens, dm});
  const auto& kern = kernels::active();
  for (int b = 0; b < nb; ++b) {
    const FusionSample& s = batch.samples[b];
    for (int i = 0; i < tokens; ++i) {
      const float* f = fusion.value().data() + static_cast<std::size_t>(s.text_offset) * tokens +
                       static_cast<std::size_t>(i) * s.text_count;
      float* o = out.data() + (static_cast<std::size_t>(b) * tokens + i) * dm;
      for (int j = 0; j < s.text_count; ++j) {
        kern.axpy(dm, f[j], v.value().data() + static_cast<std::size_t>(s.text_offset + j) * dm, o);
      }
    }
  }
  return Var::make(std::move(out), {fusion, v}, [fusion, v, batch, tokens, dm, nb](Node& self) {
    const auto& kern = kernels::active();
    for (int b = 0; b < nb; ++b) {
      const FusionSample& s = batch.samples[b];
      for (int i = 0; i < tokens; ++i) {
        const std::size_t foff = static_cast<std::size_t>(s.text_offset) * tokens + static_cast<std::size_t>(i) * s.text_count;
        const float* g = self.grad.data() + (static_cast<std::size_t>(b) * tokens + i) * dm;
        for (int j = 0; j < s.text_count; ++j) {
          const std::size_t vrow = static_cast<std::size_t>(s.text_offset + j) * dm;
          if (fusion.requires_grad()) {
            fusion.node()->ensure_grad()[foff + j] += kern.dot(g, v.value().data() + vrow, dm);
          }
          if (v.requires_grad()) {
            kern.axpy(dm, fusion.value()[foff + j], g, v.node()->ensure_grad().data() + vrow);
          }
        }
      }
    }
  });
}

}  // namespace ag
}  // namespace place
