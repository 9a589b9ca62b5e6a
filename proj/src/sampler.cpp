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

#include "place/sampler.hpp"

#include "place/error.hpp"

namespace place {

Tensor initial_noise(std::uint64_t seed, int size, int channels) {
  Rng rng(derive_seed(seed, 0x5a3b1e));
  Tensor x({1, size, size, channels});
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = static_cast<float>(rng.normal());
  return x;
}

Tensor guided_eps(const PlaceModel& model, const Tensor& x, int t, const std::vector<Conditioning>& cond,
                  double guidance) {
  ag::NoGradGuard no_grad;
  const int b = x.dim(0);
  const std::size_t per = x.size() / b;
  Shape doubled = x.shape();
  doubled[0] = 2 * b;
  Tensor both(doubled);
  std::copy(x.storage().begin(), x.storage().end(), both.data());
  std::copy(x.storage().begin(), x.storage().end(), both.data() + x.size());
  std::vector<Conditioning> all = cond;
  for (int i = 0; i < b; ++i) all.push_back(null_conditioning());
  const Tensor eps = model.forward(ag::Var::constant(std::move(both)), std::vector<int>(2 * b, t), all).eps.value();
  Tensor out(x.shape());
  const float s = static_cast<float>(guidance);
  for (std::size_t i = 0; i < b * per; ++i) {
    const float ec = eps[i];
    const float eu = eps[b * per + i];
    out[i] = eu + s * (ec - eu);
  }
  return out;
}

Tensor sample_images(const PlaceModel& model, const std::vector<Conditioning>& cond,
                     const std::vector<std::uint64_t>& seeds, const SamplerOptions& options, SampleTrace* trace) {
  if (cond.size() != seeds.size()) throw Error(ErrorCode::kShapeMismatch, "one seed per image is required");
  if (!(options.guidance >= 0.0)) throw Error(ErrorCode::kMalformedConfig, "guidance scale must be non-negative");
  const int b = static_cast<int>(cond.size());
  const int size = model.config().image_size;
  const int ch = model.config().in_channels;
  Tensor x({b, size, size, ch});
  const std::size_t per = static_cast<std::size_t>(size) * size * ch;
  for (int i = 0; i < b; ++i) {
    const Tensor n = initial_noise(seeds[i], size, ch);
    std::copy(n.storage().begin(), n.storage().end(), x.data() + i * per);
  }
  if (b == 0) return x;
  PlmsCallback cb;
  if (trace) {
    trace->timesteps.clear();
    trace->x0.clear();
    cb = [trace](const PlmsStepInfo& info) {
      trace->timesteps.push_back(info.t);
      trace->x0.push_back(*info.x0_estimate);
    };
  }
  return plms_loop(
      model.schedule(), options.steps, std::move(x),
      [&](const Tensor& xt, int t) { return guided_eps(model, xt, t, cond, options.guidance); }, cb);
}

}  // namespace place
