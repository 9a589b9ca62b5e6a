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
#include <vector>

#include "place/unet.hpp"

namespace place {

struct SamplerOptions {
  int steps = 50;
  double guidance = 2.0;
};

// Per-step x0 estimates, batch-major as produced by the sampler.
struct SampleTrace {
  std::vector<int> timesteps;
  std::vector<Tensor> x0;
};

// Initial noise for one image, drawn from its own seed.
Tensor initial_noise(std::uint64_t seed, int size, int channels);

// Classifier-free guided noise prediction for one timestep:
// eps_u + s * (eps_c - eps_u), with the unconditional branch on the null
// prompt and alpha forced to 0.
Tensor guided_eps(const PlaceModel& model, const Tensor& x, int t, const std::vector<Conditioning>& cond,
                  double guidance);

// PLMS sampling of one image per conditioning entry; output [B, S, S, C] in
// model range. Images depend only on their own seed and conditioning, not on
// the batch they are sampled with.
Tensor sample_images(const PlaceModel& model, const std::vector<Conditioning>& cond,
                     const std::vector<std::uint64_t>& seeds, const SamplerOptions& options = {},
                     SampleTrace* trace = nullptr);

}  // namespace place
