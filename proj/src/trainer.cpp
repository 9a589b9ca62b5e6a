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

#include "place/trainer.hpp"

#include <cmath>

#include "place/error.hpp"
#include "place/ops.hpp"

namespace place {

TrainingSet synth_training_set(int labeled, int layout_free, std::uint64_t seed, const Vocabulary& vocab,
                               const SynthConfig& config) {
  TrainingSet set;
  const auto& classes = shape_classes();
  for (int i = 0; i < labeled; ++i) {
    Scene s = gen_scene(derive_seed(seed, 2 * static_cast<std::uint64_t>(i)), config, HeldoutPolicy::kExclude);
    set.labeled.push_back({image_to_model(s.image), std::move(s.map)});
  }
  for (int i = 0; i < layout_free; ++i) {
    LayoutFreePair p = gen_layout_free_pair(derive_seed(seed, 2 * static_cast<std::uint64_t>(i) + 1), true, config);
    set.layout_free.push_back({image_to_model(p.image), build_prompt_for_classes(p.classes, classes, vocab)});
  }
  return set;
}

TrainingSet load_training_set(const std::filesystem::path& dir, const Vocabulary& vocab) {
  TrainingSet set;
  const auto& classes = shape_classes();
  for (const ManifestEntry& e : read_manifest(dir)) {
    const RgbImage img = read_ppm(dataset_image_path(dir, e.index));
    if (e.split == "train") {
      const GrayImage g = read_pgm(dataset_map_path(dir, e.index));
      SemanticMap map(g.height, g.width, classes, g.pixels);
      set.labeled.push_back({image_to_model(img), std::move(map)});
    } else if (e.split == "lf") {
      std::vector<int> present;
      for (const std::string& word : split_words(e.caption)) {
        for (int k = 0; k < static_cast<int>(classes.size()); ++k) {
          if (classes[k] == word) present.push_back(k);
        }
      }
      set.layout_free.push_back({image_to_model(img), build_prompt_for_classes(present, classes, vocab)});
    }
  }
  return set;
}

Adam::Adam(ParameterStore& params, AdamOptions options) : params_(params), options_(options) {
  for (const auto& e : params_.entries()) {
    m_.emplace_back(e.second.value().size(), 0.0f);
    v_.emplace_back(e.second.value().size(), 0.0f);
  }
}

double Adam::step() {
  auto& entries = params_.entries();
  double sq = 0.0;
  for (const auto& e : entries) {
    for (float g : e.second.grad().values()) sq += static_cast<double>(g) * g;
  }
  const double norm = std::sqrt(sq);
  if (!std::isfinite(norm)) throw Error(ErrorCode::kNonFiniteActivation, "gradient norm is not finite");
  const double clip = options_.grad_clip > 0.0 && norm > options_.grad_clip ? options_.grad_clip / norm : 1.0;
  ++step_;
  const double b1 = options_.beta1;
  const double b2 = options_.beta2;
  const double c1 = 1.0 - std::pow(b1, step_);
  const double c2 = 1.0 - std::pow(b2, step_);
  for (std::size_t i = 0; i < entries.size(); ++i) {
    ag::Var p = entries[i].second;
    const Tensor& grad = p.grad();
    if (grad.empty()) continue;
    float* w = p.mutable_value().data();
    for (std::size_t k = 0; k < grad.size(); ++k) {
      const double g = grad[k] * clip;
      m_[i][k] = static_cast<float>(b1 * m_[i][k] + (1.0 - b1) * g);
      v_[i][k] = static_cast<float>(b2 * v_[i][k] + (1.0 - b2) * g * g);
      const double mhat = m_[i][k] / c1;
      const double vhat = v_[i][k] / c2;
      w[k] -= static_cast<float>(options_.learning_rate * mhat / (std::sqrt(vhat) + options_.epsilon));
    }
  }
  return norm;
}

LossTerms compute_losses(const PlaceModel& model, const Batch& labeled, const Batch* layout_free, double lambda_sa,
                         double lambda_lfp, bool sa_through_fusion) {
  LossTerms out;
  const UNetOutput fwd = model.forward(ag::Var::constant(q_sample_batch(model.schedule(), labeled.x0, labeled.t, labeled.eps)),
                                       labeled.t, labeled.cond);
  out.ldm = ag::mse(fwd.eps, labeled.eps);

  double alpha_sum = 0.0;
  int alpha_count = 0;
  for (const BlockTrace& b : fwd.blocks) {
    for (std::size_t s = 0; s < b.batch.samples.size(); ++s) {
      if (b.batch.samples[s].mode == ag::AlphaMode::kForcedZero) continue;
      alpha_sum += b.alpha[s];
      ++alpha_count;
    }
  }
  out.alpha_mean = alpha_count ? alpha_sum / alpha_count : 0.0;

  std::vector<ag::Var> terms{out.ldm};
  std::vector<float> weights{1.0f};
  if (lambda_sa != 0.0 && !fwd.blocks.empty()) {
    std::vector<ag::Var> per_block;
    for (const BlockTrace& b : fwd.blocks) {
      const ag::Var target = sa_through_fusion ? b.fusion : ag::Var::constant(b.fusion.value());
      per_block.push_back(ag::sa_loss(target, b.self_attn, b.batch));
    }
    out.sa = ag::weighted_sum(per_block, std::vector<float>(per_block.size(), 1.0f / per_block.size()));
    terms.push_back(out.sa);
    weights.push_back(static_cast<float>(lambda_sa));
  }
  if (layout_free && lambda_lfp != 0.0) {
    for (const Conditioning& c : layout_free->cond) {
      if (c.has_layout()) throw Error(ErrorCode::kAlphaNotForcedToZero, "layout-free batch carries a layout");
    }
    const UNetOutput lf = model.forward(
        ag::Var::constant(q_sample_batch(model.schedule(), layout_free->x0, layout_free->t, layout_free->eps)),
        layout_free->t, layout_free->cond);
    out.lfp = ag::mse(lf.eps, layout_free->eps);
    terms.push_back(out.lfp);
    weights.push_back(static_cast<float>(lambda_lfp));
  }
  out.total = ag::weighted_sum(terms, weights);
  out.report = total_loss(out.ldm.value()[0], out.sa.defined() ? out.sa.value()[0] : 0.0,
                          out.lfp.defined() ? out.lfp.value()[0] : 0.0, lambda_sa, lambda_lfp);
  return out;
}

Trainer::Trainer(PlaceModel& model, const TrainingSet& data, TrainOptions options)
    : model_(model),
      data_(data),
      options_(options),
      adam_(model.parameters(), options.adam),
      rng_(derive_seed(options.seed, 0x7a11)) {
  if (data_.labeled.empty()) throw Error(ErrorCode::kMalformedConfig, "training needs labeled examples");
  if (options_.lambda_lfp != 0.0 && data_.layout_free.empty()) {
    throw Error(ErrorCode::kMalformedConfig, "layout-free loss enabled without layout-free examples");
  }
  if (options_.batch_size < 1 || (options_.lambda_lfp != 0.0 && options_.lf_batch_size < 1)) {
    throw Error(ErrorCode::kMalformedConfig, "batch sizes must be positive");
  }
  const std::size_t per = static_cast<std::size_t>(model_.config().image_size) * model_.config().image_size * 3;
  for (const auto& ex : data_.labeled) {
    if (ex.image.size() != per) throw Error(ErrorCode::kShapeMismatch, "training image does not match model size");
  }
  for (const auto& ex : data_.layout_free) {
    if (ex.image.size() != per) throw Error(ErrorCode::kShapeMismatch, "training image does not match model size");
  }
  for (const LabeledExample& ex : data_.labeled) {
    labeled_cond_.push_back(layout_conditioning(ex.map, model_.vocab(), model_.config(), options_.layout_mode));
  }
}

namespace {

Batch assemble(int count, int size, Rng& rng, int schedule_steps,
               const std::function<const std::vector<float>&(int)>& image,
               const std::function<Conditioning(int)>& cond, int pool) {
  Batch b;
  const int per = size * size * 3;
  b.x0 = Tensor({count, size, size, 3});
  b.eps = Tensor({count, size, size, 3});
  for (int i = 0; i < count; ++i) {
    const int idx = rng.uniform_int(0, pool - 1);
    const auto& img = image(idx);
    std::copy(img.begin(), img.end(), b.x0.data() + static_cast<std::size_t>(i) * per);
    b.t.push_back(rng.uniform_int(0, schedule_steps - 1));
    b.cond.push_back(cond(idx));
    for (int k = 0; k < per; ++k) b.eps[static_cast<std::size_t>(i) * per + k] = static_cast<float>(rng.normal());
  }
  return b;
}

}  // namespace

Batch Trainer::next_labeled_batch() {
  return assemble(
      options_.batch_size, model_.config().image_size, rng_, model_.schedule().steps(),
      [&](int i) -> const std::vector<float>& { return data_.labeled[i].image; },
      [&](int i) { return rng_.uniform() < options_.caption_dropout ? null_conditioning() : labeled_cond_[i]; },
      static_cast<int>(data_.labeled.size()));
}

Batch Trainer::next_layout_free_batch() {
  return assemble(
      options_.lf_batch_size, model_.config().image_size, rng_, model_.schedule().steps(),
      [&](int i) -> const std::vector<float>& { return data_.layout_free[i].image; },
      [&](int i) { return layout_free_conditioning(data_.layout_free[i].prompt); },
      static_cast<int>(data_.layout_free.size()));
}

StepResult Trainer::step() {
  const Batch labeled = next_labeled_batch();
  Batch free;
  const bool use_free = options_.lambda_lfp != 0.0;
  if (use_free) free = next_layout_free_batch();
  model_.parameters().zero_grad();
  LossTerms terms = compute_losses(model_, labeled, use_free ? &free : nullptr, options_.lambda_sa, options_.lambda_lfp,
                                    options_.sa_through_fusion);
  ag::backward(terms.total);
  StepResult r;
  r.report = terms.report;
  r.alpha_mean = terms.alpha_mean;
  terms = LossTerms{};
  r.grad_norm = adam_.step();
  r.step = adam_.steps();
  return r;
}

}  // namespace place
