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

#include <span>
#include <vector>

#include "place/error.hpp"
#include "place/fusion_attention.hpp"
#include "place/tensor.hpp"

namespace place {

// Mean squared error over all elements.
template <typename T>
T ldm_loss(std::span<const T> eps_true, std::span<const T> eps_pred) {
  if (eps_true.size() != eps_pred.size() || eps_true.empty()) {
    throw Error(ErrorCode::kShapeMismatch, "noise tensors differ in size");
  }
  T sum = T(0);
  for (std::size_t i = 0; i < eps_true.size(); ++i) {
    const T d = eps_true[i] - eps_pred[i];
    sum += d * d;
  }
  return sum / static_cast<T>(eps_true.size());
}

// d ldm / d eps_pred scaled by d_loss, accumulated into d_pred.
template <typename T>
void ldm_loss_backward(std::span<const T> eps_true, std::span<const T> eps_pred, T d_loss, std::span<T> d_pred) {
  if (eps_true.size() != eps_pred.size() || d_pred.size() != eps_pred.size() || eps_true.empty()) {
    throw Error(ErrorCode::kShapeMismatch, "noise tensors differ in size");
  }
  const T g = T(2) * d_loss / static_cast<T>(eps_true.size());
  for (std::size_t i = 0; i < eps_pred.size(); ++i) d_pred[i] += g * (eps_pred[i] - eps_true[i]);
}

// Same formula as ldm_loss; the prediction must come from the layout-free
// path with every block's alpha forced to 0.
template <typename T>
T lfp_loss(std::span<const T> eps_true, std::span<const T> eps_pred_alpha0, bool alpha_forced_zero) {
  if (!alpha_forced_zero) {
    throw Error(ErrorCode::kAlphaNotForcedToZero, "LFP prediction was not produced with alpha = 0");
  }
  return ldm_loss(eps_true, eps_pred_alpha0);
}

// Semantic alignment loss for one block. fusion is hw x n (F), self_attn is
// hw x hw (A^sa, row j = attention of image token j). With F_i the i-th
// column viewed as an image, W_i = sum_j F_i[j] * A^sa[j, :] and the loss is
// sum_i ||W_i - F_i||^2.
template <typename T>
T sa_loss(const T* fusion, const T* self_attn, int hw, int n) {
  std::vector<T> w(static_cast<std::size_t>(n) * hw, T(0));
  for (int j = 0; j < hw; ++j) {
    const T* arow = self_attn + static_cast<std::size_t>(j) * hw;
    for (int i = 0; i < n; ++i) {
      const T f = fusion[static_cast<std::size_t>(j) * n + i];
      if (f == T(0)) continue;
      T* wrow = w.data() + static_cast<std::size_t>(i) * hw;
      for (int p = 0; p < hw; ++p) wrow[p] += f * arow[p];
    }
  }
  T loss = T(0);
  for (int i = 0; i < n; ++i) {
    for (int p = 0; p < hw; ++p) {
      const T r = w[static_cast<std::size_t>(i) * hw + p] - fusion[static_cast<std::size_t>(p) * n + i];
      loss += r * r;
    }
  }
  return loss;
}

// Accumulates d_loss * d(sa_loss) into d_fusion and d_self_attn (either may
// be null).
template <typename T>
void sa_loss_backward(const T* fusion, const T* self_attn, int hw, int n, T d_loss, T* d_fusion,
                      T* d_self_attn) {
  std::vector<T> r(static_cast<std::size_t>(n) * hw, T(0));
  for (int j = 0; j < hw; ++j) {
    const T* arow = self_attn + static_cast<std::size_t>(j) * hw;
    for (int i = 0; i < n; ++i) {
      const T f = fusion[static_cast<std::size_t>(j) * n + i];
      if (f == T(0)) continue;
      T* rrow = r.data() + static_cast<std::size_t>(i) * hw;
      for (int p = 0; p < hw; ++p) rrow[p] += f * arow[p];
    }
  }
  for (int i = 0; i < n; ++i) {
    for (int p = 0; p < hw; ++p) {
      T& v = r[static_cast<std::size_t>(i) * hw + p];
      v = T(2) * d_loss * (v - fusion[static_cast<std::size_t>(p) * n + i]);
    }
  }
  for (int j = 0; j < hw; ++j) {
    const T* arow = self_attn + static_cast<std::size_t>(j) * hw;
    for (int i = 0; i < n; ++i) {
      const T* rrow = r.data() + static_cast<std::size_t>(i) * hw;
      const T f = fusion[static_cast<std::size_t>(j) * n + i];
      if (d_fusion) {
        T s = T(0);
        for (int p = 0; p < hw; ++p) s += rrow[p] * arow[p];
        d_fusion[static_cast<std::size_t>(j) * n + i] += s - rrow[j];
      }
      if (d_self_attn && f != T(0)) {
        T* drow = d_self_attn + static_cast<std::size_t>(j) * hw;
        for (int p = 0; p < hw; ++p) drow[p] += f * rrow[p];
      }
    }
  }
}

template <typename T>
T sa_loss(const Matrix<T>& fusion, const Matrix<T>& self_attn) {
  if (self_attn.rows != fusion.rows || self_attn.cols != fusion.rows) {
    throw Error(ErrorCode::kShapeMismatch, "self-attention map must be hw x hw for an hw x N fusion map");
  }
  return sa_loss(fusion.data.data(), self_attn.data.data(), fusion.rows, fusion.cols);
}

struct LossReport {
  double ldm = 0.0;
  double sa = 0.0;
  double lfp = 0.0;
  double total = 0.0;
  double lambda_sa = 1.0;
  double lambda_lfp = 1.0;
};

// total = ldm + lambda_sa * sa + lambda_lfp * lfp
LossReport total_loss(double ldm, double sa, double lfp, double lambda_sa = 1.0, double lambda_lfp = 1.0);

namespace ag {

// Mean of the per-sample semantic alignment loss over samples that carry a
// layout. fusion is the flat output of fusion_map; self_attn is [B, T, T].
Var sa_loss(const Var& fusion, const Var& self_attn, const FusionBatch& batch);

}  // namespace ag
}  // namespace place
