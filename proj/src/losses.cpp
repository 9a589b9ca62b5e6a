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

#include "place/losses.hpp"

#include <string>

namespace place {

LossReport total_loss(double ldm, double sa, double lfp, double lambda_sa, double lambda_lfp) {
  if (ldm < 0.0 || sa < 0.0 || lfp < 0.0) {
    throw Error(ErrorCode::kNegativeComponent, "loss components must be non-negative");
  }
  LossReport report;
  report.ldm = ldm;
  report.sa = sa;
  report.lfp = lfp;
  report.lambda_sa = lambda_sa;
  report.lambda_lfp = lambda_lfp;
  report.total = ldm + lambda_sa * sa + lambda_lfp * lfp;
  return report;
}

namespace ag {

Var sa_loss(const Var& fusion, const Var& self_attn, const FusionBatch& batch) {
  const int tokens = batch.tokens;
  if (self_attn.value().rank() != 3 || self_attn.value().dim(0) != static_cast<int>(batch.samples.size()) ||
      self_attn.value().dim(1) != tokens || self_attn.value().dim(2) != tokens) {
    throw Error(ErrorCode::kShapeMismatch, "self-attention " + shape_string(self_attn.shape()) +
                                               " does not match fusion batch");
  }
  std::vector<int> active;
  for (std::size_t b = 0; b < batch.samples.size(); ++b) {
    if (batch.samples[b].mode != AlphaMode::kForcedZero) active.push_back(static_cast<int>(b));
  }
  const std::size_t plane = static_cast<std::size_t>(tokens) * tokens;
  double total = 0.0;
  for (int b : active) {
    const auto& s = batch.samples[b];
    total += place::sa_loss(fusion.value().data() + static_cast<std::size_t>(s.text_offset) * tokens,
                            self_attn.value().data() + b * plane, tokens, s.text_count);
  }
  const float mean = active.empty() ? 0.0f : static_cast<float>(total / active.size());
  return Var::make(Tensor({1}, {mean}), {fusion, self_attn}, [fusion, self_attn, batch, active, tokens, plane](Node& self) {
    if (active.empty()) return;
    const float g = self.grad[0] / static_cast<float>(active.size());
    float* df = fusion.requires_grad() ? fusion.node()->ensure_grad().data() : nullptr;
    float* da = self_attn.requires_grad() ? self_attn.node()->ensure_grad().data() : nullptr;
    for (int b : active) {
      const auto& s = batch.samples[b];
      const std::size_t foff = static_cast<std::size_t>(s.text_offset) * tokens;
      sa_loss_backward(fusion.value().data() + foff, self_attn.value().data() + b * plane, tokens, s.text_count,
                       g, df ? df + foff : nullptr, da ? da + b * plane : nullptr);
    }
  });
}

}  // namespace ag
}  // namespace place
