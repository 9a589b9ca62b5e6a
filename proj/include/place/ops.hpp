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

#include <vector>

#include "place/tensor.hpp"

namespace place::ag {

// Differentiable tensor ops. Image tensors are NHWC: [batch, height, width,
// channels]. Matrices are row-major.

Var add(const Var& a, const Var& b);
Var scale(const Var& a, float s);
Var reshape(const Var& x, Shape shape);

// x[..., k] * w[k, n] (+ b[n])
Var linear(const Var& x, const Var& w, const Var& b);
Var linear(const Var& x, const Var& w);

// 3x3 convolution, stride 1, zero "same" padding. w is [9 * cin, cout] with
// row index (ky * 3 + kx) * cin + ci.
Var conv3x3(const Var& x, const Var& w, const Var& b);

Var group_norm(const Var& x, const Var& gamma, const Var& beta, int groups, float eps = 1e-5f);
Var silu(const Var& x);
Var sigmoid(const Var& x);

// x[b, h, w, c] + v[b, c]
Var add_channel(const Var& x, const Var& v);
Var avg_pool2(const Var& x);
Var upsample2(const Var& x);
Var concat_channels(const Var& a, const Var& b);

// Rows of table[v, d] selected by indices; result [indices.size(), d].
Var embedding(const Var& table, const std::vector<int>& indices);

// softmax(q k^T * scale) per batch: q, k [b, t, d] -> [b, t, t].
Var attention_probs(const Var& q, const Var& k, float scale);
// a[b, m, k] * c[b, k, n] -> [b, m, n]
Var bmm(const Var& a, const Var& c);

// mean((pred - target)^2) over all elements.
Var mse(const Var& pred, const Tensor& target);

// Sum of weighted scalar terms.
Var weighted_sum(const std::vector<Var>& terms, const std::vector<float>& weights);

}  // namespace place::ag
