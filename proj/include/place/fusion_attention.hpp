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

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <memory>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "place/error.hpp"
#include "place/layout_control.hpp"
#include "place/tensor.hpp"

namespace place {

template <typename T>
struct Matrix {
  int rows = 0;
  int cols = 0;
  std::vector<T> data;

  Matrix() = default;
  Matrix(int r, int c, T fill = T(0)) : rows(r), cols(c), data(static_cast<std::size_t>(r) * c, fill) {}

  T& operator()(int r, int c) { return data[static_cast<std::size_t>(r) * cols + c]; }
  T operator()(int r, int c) const { return data[static_cast<std::size_t>(r) * cols + c]; }
  T* row(int r) { return data.data() + static_cast<std::size_t>(r) * cols; }
  const T* row(int r) const { return data.data() + static_cast<std::size_t>(r) * cols; }
};

// How "L (.) A" treats the layout: kProduct multiplies coverage into the
// post-softmax attention; kLogit adds log-coverage to the raw logits. MASKED
// entries are excluded from the layout softmax in both.
enum class FusionDomain { kProduct, kLogit };

FusionDomain parse_fusion_domain(std::string_view name);
std::string_view fusion_domain_name(FusionDomain domain);

template <typename T>
struct AttentionMaps {
  Matrix<T> raw_logits;  // Q K^T / sqrt(d)
  Matrix<T> probs;       // row softmax of raw_logits (A_ca)
};

template <typename T>
struct Projections {
  Matrix<T> w_q;  // d_model x d
  Matrix<T> w_k;  // d_text x d
  Matrix<T> w_v;  // d_text x d_model
};

template <typename T>
struct CrossAttention {
  AttentionMaps<T> maps;
  Matrix<T> q;  // hw x d
  Matrix<T> k;  // N x d
  Matrix<T> v;  // N x d_model
};

// alpha(t) = logistic(weight . emb(t) + bias)
struct AdaptiveAlpha {
  std::vector<double> weight;
  double bias = 2.0;

  double logit(std::span<const double> emb) const;
  double value(std::span<const double> emb) const { return 1.0 / (1.0 + std::exp(-logit(emb))); }
};

template <typename T>
struct FusionMap {
  Matrix<T> data;         // F, hw x N
  Matrix<T> layout_term;  // softmax(L (.) A_ca), zero where MASKED
  T alpha = T(0);
};

// ---------------------------------------------------------------------------
// Row kernels. `masked == nullptr` means no layout: F = A_ca.

template <typename T>
void softmax_row(const T* logits, int n, T* out) {
  T mx = logits[0];
  for (int j = 1; j < n; ++j) mx = std::max(mx, logits[j]);
  T sum = T(0);
  for (int j = 0; j < n; ++j) {
    out[j] = std::exp(logits[j] - mx);
    sum += out[j];
  }
  for (int j = 0; j < n; ++j) out[j] /= sum;
}

template <typename T>
void fuse_row(const T* probs, const T* logits, const double* coverage, const std::uint8_t* masked,
              int n, T alpha, FusionDomain domain, T* layout_term, T* fused) {
  if (masked == nullptr) {
    std::copy_n(probs, n, fused);
    std::fill_n(layout_term, n, T(0));
    return;
  }
  T mx = -std::numeric_limits<T>::infinity();
  for (int j = 0; j < n; ++j) {
    if (masked[j]) continue;
    const T cov = static_cast<T>(coverage[j]);
    layout_term[j] = domain == FusionDomain::kProduct ? cov * probs[j] : logits[j] + std::log(cov);
    mx = std::max(mx, layout_term[j]);
  }
  if (mx == -std::numeric_limits<T>::infinity()) {
    throw Error(ErrorCode::kAllMaskedRow, "every channel of a layout row is MASKED");
  }
  T sum = T(0);
  for (int j = 0; j < n; ++j) {
    if (masked[j]) {
      layout_term[j] = T(0);
    } else {
      layout_term[j] = std::exp(layout_term[j] - mx);
      sum += layout_term[j];
    }
  }
  for (int j = 0; j < n; ++j) {
    layout_term[j] /= sum;
    fused[j] = alpha * layout_term[j] + (T(1) - alpha) * probs[j];
  }
}

// Given dL/dF for one row, accumulates dL/d(raw logits) into d_logits and
// returns dL/d(alpha).
template <typename T>
T fuse_row_backward(const T* probs, const T* layout_term, const double* coverage,
                    const std::uint8_t* masked, int n, T alpha, FusionDomain domain, const T* d_fused,
                    T* d_logits) {
  constexpr int kStack = 16;
  T buf[kStack];
  std::vector<T> heap;
  T* d_probs = buf;
  if (n > kStack) {
    heap.resize(n);
    d_probs = heap.data();
  }
  T d_alpha = T(0);
  if (masked == nullptr) {
    std::copy_n(d_fused, n, d_probs);
  } else {
    T inner = T(0);
    for (int j = 0; j < n; ++j) {
      d_alpha += d_fused[j] * (layout_term[j] - probs[j]);
      inner += layout_term[j] * alpha * d_fused[j];
    }
    for (int j = 0; j < n; ++j) {
      d_probs[j] = (T(1) - alpha) * d_fused[j];
      if (masked[j]) continue;
      const T d_layout = layout_term[j] * (alpha * d_fused[j] - inner);
      if (domain == FusionDomain::kProduct) {
        d_probs[j] += d_layout * static_cast<T>(coverage[j]);
      } else {
        d_logits[j] += d_layout;
      }
    }
  }
  T inner = T(0);
  for (int j = 0; j < n; ++j) inner += probs[j] * d_probs[j];
  for (int j = 0; j < n; ++j) d_logits[j] += probs[j] * (d_probs[j] - inner);
  return d_alpha;
}

// ---------------------------------------------------------------------------
// Matrix-level API (used directly by tests and diagnostics).

namespace detail {

template <typename T>
void check_finite(const Matrix<T>& m, const char* what) {
  for (T v : m.data) {
    if (!std::isfinite(v)) throw Error(ErrorCode::kNonFiniteInput, what);
  }
}

// c = a * b
template <typename T>
Matrix<T> matmul(const Matrix<T>& a, const Matrix<T>& b) {
  Matrix<T> c(a.rows, b.cols);
  for (int i = 0; i < a.rows; ++i) {
    for (int p = 0; p < a.cols; ++p) {
      const T av = a(i, p);
      for (int j = 0; j < b.cols; ++j) c(i, j) += av * b(p, j);
    }
  }
  return c;
}

}  // namespace detail

template <typename T>
CrossAttention<T> cross_attention_maps(const Matrix<T>& image_feats, const Matrix<T>& text_feats,
                                       const Projections<T>& proj) {
  detail::check_finite(image_feats, "image features");
  detail::check_finite(text_feats, "text features");
  if (image_feats.cols != proj.w_q.rows || text_feats.cols != proj.w_k.rows ||
      text_feats.cols != proj.w_v.rows || proj.w_q.cols != proj.w_k.cols) {
    throw Error(ErrorCode::kShapeMismatch, "cross-attention projection shapes");
  }
  CrossAttention<T> out;
  out.q = detail::matmul(image_feats, proj.w_q);
  out.k = detail::matmul(text_feats, proj.w_k);
  out.v = detail::matmul(text_feats, proj.w_v);
  const int hw = image_feats.rows;
  const int n = text_feats.rows;
  const T scale = T(1) / std::sqrt(static_cast<T>(proj.w_q.cols));
  out.maps.raw_logits = Matrix<T>(hw, n);
  out.maps.probs = Matrix<T>(hw, n);
  for (int i = 0; i < hw; ++i) {
    for (int j = 0; j < n; ++j) {
      T s = T(0);
      for (int p = 0; p < out.q.cols; ++p) s += out.q(i, p) * out.k(j, p);
      out.maps.raw_logits(i, j) = s * scale;
    }
    softmax_row(out.maps.raw_logits.row(i), n, out.maps.probs.row(i));
  }
  return out;
}

// F = alpha * softmax(L (.) A_ca) + (1 - alpha) * A_ca. A null layout means
// the layout-free path, where F = A_ca and alpha must be 0.
template <typename T>
FusionMap<T> fuse(const LayoutControlMap* lcm, const AttentionMaps<T>& maps, T alpha,
                  FusionDomain domain = FusionDomain::kProduct) {
  if (!(alpha >= T(0) && alpha <= T(1))) {
    throw Error(ErrorCode::kAlphaOutOfRange, "alpha must lie in [0, 1]");
  }
  const int hw = maps.probs.rows;
  const int n = maps.probs.cols;
  if (lcm && (lcm->tokens() != hw || lcm->channels() != n)) {
    throw Error(ErrorCode::kShapeMismatch, "layout control map does not match attention map");
  }
  if (!lcm && alpha != T(0)) {
    throw Error(ErrorCode::kAlphaNotForcedToZero, "layout-free fusion requires alpha = 0");
  }
  FusionMap<T> out;
  out.alpha = alpha;
  out.data = Matrix<T>(hw, n);
  out.layout_term = Matrix<T>(hw, n);
  for (int i = 0; i < hw; ++i) {
    fuse_row(maps.probs.row(i), maps.raw_logits.row(i), lcm ? lcm->value_row(i) : nullptr,
             lcm ? lcm->mask_row(i) : nullptr, n, alpha, domain, out.layout_term.row(i), out.data.row(i));
  }
  return out;
}

template <typename T>
FusionMap<T> fuse(const LayoutControlMap& lcm, const AttentionMaps<T>& maps, T alpha,
                  FusionDomain domain = FusionDomain::kProduct) {
  return fuse(&lcm, maps, alpha, domain);
}

template <typename T>
struct PlaceAttentionParams {
  Projections<T> proj;
  AdaptiveAlpha alpha;
  FusionDomain domain = FusionDomain::kProduct;
};

template <typename T>
struct PlaceAttentionOutput {
  Matrix<T> output;  // O = F V, hw x d_model
  FusionMap<T> fusion;
  CrossAttention<T> attention;
};

// One PLACE block. Without a layout alpha is forced to 0; `alpha_override`
// replaces the adaptive value (fixed-alpha variants and tests).
template <typename T>
PlaceAttentionOutput<T> place_attention_forward(const Matrix<T>& image_feats, const Matrix<T>& text_feats,
                                                const LayoutControlMap* lcm, std::span<const double> time_emb,
                                                const PlaceAttentionParams<T>& params,
                                                std::optional<T> alpha_override = std::nullopt) {
  PlaceAttentionOutput<T> out;
  out.attention = cross_attention_maps(image_feats, text_feats, params.proj);
  T alpha = T(0);
  if (lcm) alpha = alpha_override ? *alpha_override : static_cast<T>(params.alpha.value(time_emb));
  out.fusion = fuse(lcm, out.attention.maps, alpha, params.domain);
  out.output = detail::matmul(out.fusion.data, out.attention.v);
  return out;
}

template <typename T>
struct PlaceAttentionGrads {
  Matrix<T> d_image;
  Matrix<T> d_text;
  Matrix<T> d_wq;
  Matrix<T> d_wk;
  Matrix<T> d_wv;
  std::vector<T> d_alpha_weight;
  T d_alpha_bias = T(0);
};

template <typename T>
PlaceAttentionGrads<T> place_attention_backward(const Matrix<T>& image_feats, const Matrix<T>& text_feats,
                                                const LayoutControlMap* lcm, std::span<const double> time_emb,
                                                const PlaceAttentionParams<T>& params,
                                                const PlaceAttentionOutput<T>& fwd, const Matrix<T>& d_output,
                                                bool alpha_overridden = false) {
  const auto& att = fwd.attention;
  const int hw = image_feats.rows;
  const int n = text_feats.rows;
  const int d = att.q.cols;
  const int dm = att.v.cols;
  const T scale = T(1) / std::sqrt(static_cast<T>(d));
  PlaceAttentionGrads<T> g;

  // O = F V
  Matrix<T> d_fused(hw, n);
  Matrix<T> d_v(n, dm);
  for (int i = 0; i < hw; ++i) {
    for (int j = 0; j < n; ++j) {
      T s = T(0);
      for (int p = 0; p < dm; ++p) {
        s += d_output(i, p) * att.v(j, p);
        d_v(j, p) += fwd.fusion.data(i, j) * d_output(i, p);
      }
      d_fused(i, j) = s;
    }
  }

  Matrix<T> d_logits(hw, n);
  T d_alpha = T(0);
  for (int i = 0; i < hw; ++i) {
    d_alpha += fuse_row_backward(att.maps.probs.row(i), fwd.fusion.layout_term.row(i),
                                 lcm ? lcm->value_row(i) : nullptr, lcm ? lcm->mask_row(i) : nullptr, n,
                                 fwd.fusion.alpha, params.domain, d_fused.row(i), d_logits.row(i));
  }

  Matrix<T> d_q(hw, d);
  Matrix<T> d_k(n, d);
  for (int i = 0; i < hw; ++i) {
    for (int j = 0; j < n; ++j) {
      const T ds = d_logits(i, j) * scale;
      for (int p = 0; p < d; ++p) {
        d_q(i, p) += ds * att.k(j, p);
        d_k(j, p) += ds * att.q(i, p);
      }
    }
  }

  auto transpose_times = [](const Matrix<T>& a, const Matrix<T>& b) {  // a^T b
    Matrix<T> c(a.cols, b.cols);
    for (int r = 0; r < a.rows; ++r) {
      for (int i = 0; i < a.cols; ++i) {
        for (int j = 0; j < b.cols; ++j) c(i, j) += a(r, i) * b(r, j);
      }
    }
    return c;
  };
  auto times_transpose = [](const Matrix<T>& a, const Matrix<T>& b) {  // a b^T
    Matrix<T> c(a.rows, b.rows);
    for (int i = 0; i < a.rows; ++i) {
      for (int j = 0; j < b.rows; ++j) {
        T s = T(0);
        for (int p = 0; p < a.cols; ++p) s += a(i, p) * b(j, p);
        c(i, j) = s;
      }
    }
    return c;
  };

  g.d_image = times_transpose(d_q, params.proj.w_q);
  g.d_wq = transpose_times(image_feats, d_q);
  g.d_text = times_transpose(d_k, params.proj.w_k);
  const Matrix<T> d_text_v = times_transpose(d_v, params.proj.w_v);
  for (std::size_t i = 0; i < g.d_text.data.size(); ++i) g.d_text.data[i] += d_text_v.data[i];
  g.d_wk = transpose_times(text_feats, d_k);
  g.d_wv = transpose_times(text_feats, d_v);

  g.d_alpha_weight.assign(params.alpha.weight.size(), T(0));
  if (lcm && !alpha_overridden) {
    const T a = fwd.fusion.alpha;
    const T dz = d_alpha * a * (T(1) - a);
    for (std::size_t i = 0; i < g.d_alpha_weight.size(); ++i) {
      g.d_alpha_weight[i] = dz * static_cast<T>(time_emb[i]);
    }
    g.d_alpha_bias = dz;
  }
  return g;
}

// ---------------------------------------------------------------------------
// Batched autodiff ops used inside the UNet.

namespace ag {

enum class AlphaMode { kAdaptive, kFixed, kForcedZero };

struct FusionSample {
  int text_offset = 0;  // first row of this sample in the concatenated text
  int text_count = 0;
  std::shared_ptr<const LayoutControlMap> layout;  // null only when kForcedZero
  AlphaMode mode = AlphaMode::kForcedZero;
  float fixed_alpha = 1.0f;
};

struct FusionBatch {
  int tokens = 0;  // image tokens per sample
  std::vector<FusionSample> samples;
  FusionDomain domain = FusionDomain::kProduct;

  int total_text() const {
    return samples.empty() ? 0 : samples.back().text_offset + samples.back().text_count;
  }
};

// F for every sample, flattened: sample b occupies tokens x text_count
// entries starting at tokens * text_offset. q is [B * tokens, d], k is
// [total_text, d], alpha is [B] (read for kAdaptive samples only; may be
// undefined when no sample is adaptive).
Var fusion_map(const Var& q, const Var& k, const Var& alpha, const FusionBatch& batch);

// O[b * tokens + i] = sum_j F_b[i, j] * v[text_offset_b + j]
Var apply_fusion(const Var& fusion, const Var& v, const FusionBatch& batch);

// Effective alpha per sample after forcing/fixing, for logging.
std::vector<float> effective_alpha(const Var& alpha, const FusionBatch& batch);

}  // namespace ag
}  // namespace place
