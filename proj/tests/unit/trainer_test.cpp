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

#include <doctest.h>

#include "place/ops.hpp"
#include "place/trainer.hpp"
#include "tiny.hpp"

using namespace place;
using place::testing::error_code_of;
using place::testing::tiny_config;

namespace {

// 32x32 scenes average-pooled to the tiny model's 8x8 canvas; maps stay at
// full resolution for the layouts.
TrainingSet tiny_set(int labeled, int free, std::uint64_t seed, const Vocabulary& vocab) {
  TrainingSet full = synth_training_set(labeled, free, seed, vocab);
  auto pool = [](const std::vector<float>& img) {
    std::vector<float> out(8 * 8 * 3, 0.0f);
    for (int r = 0; r < 32; ++r) {
      for (int c = 0; c < 32; ++c) {
        for (int ch = 0; ch < 3; ++ch) out[((r / 4) * 8 + c / 4) * 3 + ch] += img[(r * 32 + c) * 3 + ch] / 16.0f;
      }
    }
    return out;
  };
  for (auto& e : full.labeled) e.image = pool(e.image);
  for (auto& e : full.layout_free) e.image = pool(e.image);
  return full;
}

std::vector<Tensor> gradients(const PlaceModel& model) {
  std::vector<Tensor> g;
  for (const auto& [name, var] : model.parameters().entries()) {
    g.push_back(var.grad().empty() ? Tensor(var.shape()) : var.grad());
  }
  return g;
}

double max_grad_diff(const std::vector<Tensor>& a, const std::vector<Tensor>& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    for (std::size_t k = 0; k < a[i].size(); ++k) m = std::max(m, double(std::abs(a[i][k] - b[i][k])));
  }
  return m;
}

// Max difference relative to the largest gradient entry, floored at 1, so
// float32 summation order does not dominate for large gradients.
double scaled_grad_diff(const std::vector<Tensor>& a, const std::vector<Tensor>& b) {
  double scale = 1.0;
  for (const Tensor& t : a) {
    for (float v : t.values()) scale = std::max(scale, double(std::abs(v)));
  }
  return max_grad_diff(a, b) / scale;
}

struct Setup {
  UNetConfig config = tiny_config();
  Vocabulary vocab = place::testing::shape_vocab(config.text_dim);
  TrainingSet data = tiny_set(16, 16, 5, vocab);
  PlaceModel model{config, vocab, 3};
  TrainOptions options;
  Setup() {
    options.batch_size = 4;
    options.lf_batch_size = 4;
    options.seed = 9;
    place::testing::jitter_parameters(model, 17, 0.05);
  }
};

}  // namespace

TEST_CASE("synthetic training set") {
  const Vocabulary vocab = place::testing::shape_vocab(8);
  const TrainingSet set = synth_training_set(20, 30, 1, vocab);
  CHECK(set.labeled.size() == 20);
  CHECK(set.layout_free.size() == 30);
  const int heldout = SynthConfig{}.heldout_index();
  for (const auto& e : set.labeled) {
    CHECK(e.image.size() == 32 * 32 * 3);
    for (int v : e.map.grid()) REQUIRE(v != heldout);
  }
  bool saw_heldout = false;
  for (const auto& e : set.layout_free) {
    for (const auto& c : e.prompt.token_classes) saw_heldout |= c == heldout;
  }
  CHECK(saw_heldout);
}

TEST_CASE("zero lambdas reduce to plain denoising training") {
  Setup s;
  Trainer trainer(s.model, s.data, s.options);
  const Batch labeled = trainer.next_labeled_batch();
  const Batch free = trainer.next_layout_free_batch();

  s.model.parameters().zero_grad();
  const LossTerms terms = compute_losses(s.model, labeled, &free, 0.0, 0.0);
  CHECK(!terms.sa.defined());
  CHECK(!terms.lfp.defined());
  ag::backward(terms.total);
  const auto reduced = gradients(s.model);

  s.model.parameters().zero_grad();
  const Tensor zt = q_sample_batch(s.model.schedule(), labeled.x0, labeled.t, labeled.eps);
  ag::backward(ag::mse(s.model.forward(ag::Var::constant(zt), labeled.t, labeled.cond).eps, labeled.eps));
  CHECK(max_grad_diff(reduced, gradients(s.model)) <= 1e-6);
  CHECK(terms.report.total == doctest::Approx(terms.report.ldm));
}

TEST_CASE("total gradient is the weighted sum of term gradients") {
  Setup s;
  Trainer trainer(s.model, s.data, s.options);
  const Batch labeled = trainer.next_labeled_batch();
  const Batch free = trainer.next_layout_free_batch();
  for (bool through : {false, true}) {
    const double l1 = 0.7, l2 = 1.3;
    s.model.parameters().zero_grad();
    ag::backward(compute_losses(s.model, labeled, &free, l1, l2, through).total);
    const auto total = gradients(s.model);

    std::vector<Tensor> sum;
    const char* parts[] = {"ldm", "sa", "lfp"};
    for (const char* part : parts) {
      s.model.parameters().zero_grad();
      const LossTerms t = compute_losses(s.model, labeled, &free, l1, l2, through);
      const std::string p = part;
      if (p == "ldm") ag::backward(t.ldm);
      if (p == "sa") ag::backward(ag::scale(t.sa, static_cast<float>(l1)));
      if (p == "lfp") ag::backward(ag::scale(t.lfp, static_cast<float>(l2)));
      const auto g = gradients(s.model);
      if (sum.empty()) {
        sum = g;
      } else {
        for (std::size_t i = 0; i < g.size(); ++i) {
          for (std::size_t k = 0; k < g[i].size(); ++k) sum[i][k] += g[i][k];
        }
      }
    }
    CHECK(scaled_grad_diff(total, sum) <= 1e-6);
  }
}

TEST_CASE("detached alignment target leaves alpha untouched by the SA term") {
  Setup s;
  Trainer trainer(s.model, s.data, s.options);
  const Batch labeled = trainer.next_labeled_batch();
  s.model.parameters().zero_grad();
  ag::backward(compute_losses(s.model, labeled, nullptr, 1.0, 0.0, false).sa);
  const ag::Var* alpha_b = s.model.parameters().find("down1.attn.alpha.b");
  REQUIRE(alpha_b != nullptr);
  CHECK((alpha_b->grad().empty() || alpha_b->grad()[0] == 0.0f));
  s.model.parameters().zero_grad();
  ag::backward(compute_losses(s.model, labeled, nullptr, 1.0, 0.0, true).sa);
  CHECK(alpha_b->grad()[0] != 0.0f);
}

TEST_CASE("layout-free batch must not carry layouts") {
  Setup s;
  Trainer trainer(s.model, s.data, s.options);
  const Batch labeled = trainer.next_labeled_batch();
  Batch bad = trainer.next_labeled_batch();
  for (auto& c : bad.cond) {
    if (!c.has_layout()) c = labeled.cond[0];
  }
  REQUIRE(bad.cond[0].has_layout());
  CHECK(error_code_of([&] { compute_losses(s.model, labeled, &bad, 1.0, 1.0); }) == ErrorCode::kAlphaNotForcedToZero);
}

TEST_CASE("trainer validation") {
  Setup s;
  TrainingSet empty;
  CHECK(error_code_of([&] { Trainer(s.model, empty, s.options); }) == ErrorCode::kMalformedConfig);
  TrainingSet no_free = s.data;
  no_free.layout_free.clear();
  CHECK(error_code_of([&] { Trainer(s.model, no_free, s.options); }) == ErrorCode::kMalformedConfig);
  TrainingSet wrong = synth_training_set(2, 2, 1, s.vocab);
  CHECK(error_code_of([&] { Trainer(s.model, wrong, s.options); }) == ErrorCode::kShapeMismatch);
}

TEST_CASE("training is deterministic in the seed") {
  auto run = [](std::uint64_t seed) {
    Setup s;
    s.options.seed = seed;
    Trainer trainer(s.model, s.data, s.options);
    std::vector<double> losses;
    for (int i = 0; i < 3; ++i) losses.push_back(trainer.step().report.total);
    losses.push_back(s.model.parameters().entries().front().second.value()[0]);
    return losses;
  };
  CHECK(run(4) == run(4));
  CHECK(run(4) != run(5));
}

TEST_CASE("adam clips the global gradient norm") {
  ParameterStore store;
  ag::Var p = store.add("p", Tensor({2}, std::vector<float>{1.0f, -1.0f}));
  AdamOptions o;
  o.learning_rate = 0.1;
  o.grad_clip = 1.0;
  Adam adam(store, o);
  p.mutable_grad()[0] = 30.0f;
  p.mutable_grad()[1] = -40.0f;
  CHECK(adam.step() == doctest::Approx(50.0));
  // First Adam step moves each coordinate by lr * sign(g), whatever the clip.
  CHECK(p.value()[0] == doctest::Approx(0.9).epsilon(1e-5));
  CHECK(p.value()[1] == doctest::Approx(-0.9).epsilon(1e-5));
  CHECK(adam.steps() == 1);
}

TEST_CASE("overfits a tiny set") {
  // Sixteen fixed (x0, map, prompt, t, eps) tuples plus a fixed layout-free
  // batch, revisited for 200 optimizer steps.
  Setup s;
  s.options.batch_size = 16;
  s.options.caption_dropout = 0.0;
  PlaceModel model(s.config, s.vocab, 11);
  Trainer source(model, s.data, s.options);
  const Batch labeled = source.next_labeled_batch();
  const Batch free = source.next_layout_free_batch();
  AdamOptions adam_options;
  adam_options.learning_rate = 3e-3;
  Adam adam(model.parameters(), adam_options);
  double initial = 0.0, final = 0.0;
  for (int i = 0; i < 200; ++i) {
    model.parameters().zero_grad();
    const LossTerms terms = compute_losses(model, labeled, &free, 1.0, 1.0);
    ag::backward(terms.total);
    adam.step();
    if (i == 0) initial = terms.report.total;
    final = terms.report.total;
  }
  MESSAGE("overfit loss " << initial << " -> " << final);
  CHECK(final < 0.1 * initial);
}
