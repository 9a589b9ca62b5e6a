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

#include "place/diffusion.hpp"

#include <cmath>
#include <deque>

#include "place/error.hpp"

namespace place {

NoiseSchedule NoiseSchedule::linear(int steps, double beta_start, double beta_end) {
  if (steps < 2) throw std::invalid_argument("schedule needs at least 2 steps");
  NoiseSchedule s;
  s.betas_.resize(steps);
  s.alphas_cumprod_.resize(steps);
  double prod = 1.0;
  for (int t = 0; t < steps; ++t) {
    s.betas_[t] = beta_start + (beta_end - beta_start) * t / (steps - 1);
    prod *= 1.0 - s.betas_[t];
    s.alphas_cumprod_[t] = prod;
  }
  return s;
}

Tensor q_sample(const NoiseSchedule& schedule, const Tensor& x0, int t, const Tensor& eps) {
  if (t < 0 || t >= schedule.steps()) {
    throw Error(ErrorCode::kTimestepOutOfRange, "t=" + std::to_string(t));
  }
  if (x0.shape() != eps.shape()) throw Error(ErrorCode::kShapeMismatch, "q_sample: noise shape");
  const double ab = schedule.alpha_cumprod(t);
  const float a = static_cast<float>(std::sqrt(ab));
  const float s = static_cast<float>(std::sqrt(1.0 - ab));
  Tensor out(x0.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a * x0[i] + s * eps[i];
  return out;
}

Tensor q_sample_batch(const NoiseSchedule& schedule, const Tensor& x0, const std::vector<int>& t,
                      const Tensor& eps) {
  if (x0.shape() != eps.shape()) throw Error(ErrorCode::kShapeMismatch, "q_sample: noise shape");
  if (x0.dim(0) != static_cast<int>(t.size())) throw Error(ErrorCode::kShapeMismatch, "q_sample: timesteps");
  const std::size_t per = x0.size() / t.size();
  Tensor out(x0.shape());
  for (std::size_t b = 0; b < t.size(); ++b) {
    if (t[b] < 0 || t[b] >= schedule.steps()) {
      throw Error(ErrorCode::kTimestepOutOfRange, "t=" + std::to_string(t[b]));
    }
    const double ab = schedule.alpha_cumprod(t[b]);
    const float a = static_cast<float>(std::sqrt(ab));
    const float s = static_cast<float>(std::sqrt(1.0 - ab));
    for (std::size_t i = b * per; i < (b + 1) * per; ++i) out[i] = a * x0[i] + s * eps[i];
  }
  return out;
}

std::vector<double> sinusoidal_embedding(double t, int dim) {
  const int half = dim / 2;
  std::vector<double> emb(dim, 0.0);
  for (int i = 0; i < half; ++i) {
    const double freq = std::exp(-std::log(10000.0) * i / half);
    emb[i] = std::cos(t * freq);
    emb[half + i] = std::sin(t * freq);
  }
  return emb;
}

Tensor predicted_clean(const NoiseSchedule& schedule, const Tensor& z_t, int t, const Tensor& eps) {
  const double ab = schedule.alpha_cumprod(t);
  const float s = static_cast<float>(std::sqrt(1.0 - ab));
  const float inv = static_cast<float>(1.0 / std::sqrt(ab));
  Tensor out(z_t.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = (z_t[i] - s * eps[i]) * inv;
  return out;
}

std::vector<int> plms_timesteps(const NoiseSchedule& schedule, int steps) {
  if (steps < 1) throw std::invalid_argument("sampling needs at least one step");
  if (steps > schedule.steps()) {
    throw Error(ErrorCode::kStepsExceedSchedule,
                std::to_string(steps) + " > " + std::to_string(schedule.steps()));
  }
  const int stride = schedule.steps() / steps;
  std::vector<int> ts(steps);
  for (int i = 0; i < steps; ++i) ts[i] = i * stride;
  return ts;
}

namespace {

// x_prev = sqrt(a_prev) * x0_hat + sqrt(1 - a_prev) * eps (deterministic DDIM step)
Tensor step_from(const Tensor& x, const Tensor& eps, double a_t, double a_prev, Tensor* x0_out) {
  const float st = static_cast<float>(std::sqrt(1.0 - a_t));
  const float inv = static_cast<float>(1.0 / std::sqrt(a_t));
  const float sp = static_cast<float>(std::sqrt(a_prev));
  const float dp = static_cast<float>(std::sqrt(1.0 - a_prev));
  Tensor x0(x.shape());
  Tensor out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) {
    x0[i] = (x[i] - st * eps[i]) * inv;
    out[i] = sp * x0[i] + dp * eps[i];
  }
  if (x0_out) *x0_out = std::move(x0);
  return out;
}

}  // namespace

Tensor plms_loop(const NoiseSchedule& schedule, int steps, Tensor x, const EpsFn& eps_fn,
                 const PlmsCallback& on_step) {
  const std::vector<int> ts = plms_timesteps(schedule, steps);
  std::deque<Tensor> old_eps;
  for (int i = 0; i < steps; ++i) {
    const int index = steps - 1 - i;
    const int t = ts[index];
    const double a_t = schedule.alpha_cumprod(t);
    const double a_prev = index > 0 ? schedule.alpha_cumprod(ts[index - 1]) : schedule.alpha_cumprod(0);
    Tensor e_t = eps_fn(x, t);
    Tensor e_prime(x.shape());
    if (old_eps.empty()) {
      const Tensor x_mid = step_from(x, e_t, a_t, a_prev, nullptr);
      const int t_next = index > 0 ? ts[index - 1] : ts[0];
      const Tensor e_next = eps_fn(x_mid, t_next);
      for (std::size_t k = 0; k < x.size(); ++k) e_prime[k] = (e_t[k] + e_next[k]) / 2.0f;
    } else if (old_eps.size() == 1) {
      const Tensor& e1 = old_eps[0];
      for (std::size_t k = 0; k < x.size(); ++k) e_prime[k] = (3.0f * e_t[k] - e1[k]) / 2.0f;
    } else if (old_eps.size() == 2) {
      const Tensor& e1 = old_eps[1];
      const Tensor& e2 = old_eps[0];
      for (std::size_t k = 0; k < x.size(); ++k) {
        e_prime[k] = (23.0f * e_t[k] - 16.0f * e1[k] + 5.0f * e2[k]) / 12.0f;
      }
    } else {
      const Tensor& e1 = old_eps[2];
      const Tensor& e2 = old_eps[1];
      const Tensor& e3 = old_eps[0];
      for (std::size_t k = 0; k < x.size(); ++k) {
        e_prime[k] = (55.0f * e_t[k] - 59.0f * e1[k] + 37.0f * e2[k] - 9.0f * e3[k]) / 24.0f;
      }
    }
    Tensor x0;
    x = step_from(x, e_prime, a_t, a_prev, &x0);
    old_eps.push_back(std::move(e_t));
    if (old_eps.size() > 3) old_eps.pop_front();
    if (on_step) on_step(PlmsStepInfo{i, t, &x0});
  }
  return x;
}

}  // namespace place
