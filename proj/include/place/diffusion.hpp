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

#include <functional>
#include <vector>

#include "place/tensor.hpp"

namespace place {

// Linear-beta DDPM schedule.
class NoiseSchedule {
 public:
  static NoiseSchedule linear(int steps = 1000, double beta_start = 1e-4, double beta_end = 0.02);

  int steps() const { return static_cast<int>(betas_.size()); }
  double beta(int t) const { return betas_.at(t); }
  double alpha_cumprod(int t) const { return alphas_cumprod_.at(t); }
  const std::vector<double>& alphas_cumprod() const { return alphas_cumprod_; }

 private:
  std::vector<double> betas_;
  std::vector<double> alphas_cumprod_;
};

// sqrt(abar_t) * x0 + sqrt(1 - abar_t) * eps
Tensor q_sample(const NoiseSchedule& schedule, const Tensor& x0, int t, const Tensor& eps);
// Per-sample timesteps along the leading axis.
Tensor q_sample_batch(const NoiseSchedule& schedule, const Tensor& x0, const std::vector<int>& t,
                      const Tensor& eps);

// Sinusoidal features [cos(t f_0..f_{k-1}), sin(t f_0..f_{k-1})] with
// f_i = 10000^(-i/k), k = dim / 2.
std::vector<double> sinusoidal_embedding(double t, int dim);

// x0 estimate from a noisy sample and predicted noise.
Tensor predicted_clean(const NoiseSchedule& schedule, const Tensor& z_t, int t, const Tensor& eps);

// PLMS over a uniform stride of the schedule: timesteps 0, c, 2c, ... with
// c = T / steps, visited in reverse. The first step uses the pseudo improved
// Euler update, then the 2nd/3rd/4th-order multistep combinations.
std::vector<int> plms_timesteps(const NoiseSchedule& schedule, int steps);

struct PlmsStepInfo {
  int step = 0;
  int t = 0;
  const Tensor* x0_estimate = nullptr;
};

// eps_fn(x, t) predicts noise for a whole batch at a single timestep.
using EpsFn = std::function<Tensor(const Tensor& x, int t)>;
using PlmsCallback = std::function<void(const PlmsStepInfo&)>;

Tensor plms_loop(const NoiseSchedule& schedule, int steps, Tensor x, const EpsFn& eps_fn,
                 const PlmsCallback& on_step = nullptr);

}  // namespace place
