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

#include "place/cli.hpp"

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

#include <CLI11.hpp>
#include <json.hpp>

#include "place/checkpoint.hpp"
#include "place/config.hpp"
#include "place/error.hpp"
#include "place/evaluation.hpp"
#include "place/kernels.hpp"
#include "place/sampler.hpp"
#include "place/synth_data.hpp"
#include "place/trainer.hpp"

#ifndef PLACE_GIT_DESCRIBE
#define PLACE_GIT_DESCRIBE "unknown"
#endif

namespace place::cli {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

// Thrown for argument combinations CLI11 cannot express; maps to exit 2.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::uint64_t resolve_seed(const std::optional<std::uint64_t>& flag, const std::optional<std::uint64_t>& config) {
  if (flag) return *flag;
  if (config) return *config;
  if (const char* env = std::getenv("PLACE_SEED")) {
    try {
      std::size_t used = 0;
      const unsigned long long v = std::stoull(env, &used);
      if (used == std::string(env).size()) return v;
    } catch (const std::exception&) {
    }
    throw UsageError("PLACE_SEED must be an unsigned integer");
  }
  return 0;
}

void make_out_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error(ErrorCode::kIoFailure, "cannot create " + dir.string() + ": " + ec.message());
}

void write_json(const fs::path& path, const json& j) {
  std::ofstream out(path, std::ios::binary);
  out << j.dump(2) << "\n";
  if (!out) throw Error(ErrorCode::kIoFailure, "cannot write " + path.string());
}

void write_run_json(const fs::path& out, const std::string& command, json body) {
  body["command"] = command;
  body["git_describe"] = PLACE_GIT_DESCRIBE;
  write_json(out / "run.json", body);
}

Dims parse_dims(const std::string& text) {
  const auto x = text.find('x');
  try {
    if (x == std::string::npos) throw std::invalid_argument("no x");
    std::size_t a = 0;
    std::size_t b = 0;
    const int h = std::stoi(text.substr(0, x), &a);
    const int w = std::stoi(text.substr(x + 1), &b);
    if (a != x || b != text.size() - x - 1 || h < 1 || w < 1) throw std::invalid_argument("bad");
    return {h, w};
  } catch (const std::exception&) {
    throw UsageError("--latent expects HxW, got '" + text + "'");
  }
}

// Parsed config file minus run metadata, noting whether it carried a seed.
json read_config_json(const std::string& path, std::optional<std::uint64_t>& config_seed) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIoFailure, "cannot read " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kMalformedConfig, path + ": " + e.what());
  }
  if (!j.is_object()) throw Error(ErrorCode::kMalformedConfig, path + ": expected an object");
  for (const char* meta : {"command", "git_describe", "inputs"}) j.erase(meta);
  if (j.contains("seed") && j["seed"].is_number_unsigned()) config_seed = j["seed"].get<std::uint64_t>();
  return j;
}

std::vector<int> alpha_grid(int schedule_steps) {
  std::vector<int> ts;
  for (int k = 0; k <= 10; ++k) ts.push_back(static_cast<int>(std::lround(k / 10.0 * (schedule_steps - 1))));
  return ts;
}

void append_alpha_rows(std::ostream& out, const PlaceModel& model, int step, const std::vector<int>& ts) {
  for (int t : ts) {
    for (const auto& [name, a] : model.block_alphas(t)) out << name << ',' << step << ',' << t << ',' << a << '\n';
  }
}

// ---------------------------------------------------------------- gen-data

void add_gen_data(CLI::App& app, std::function<int()>& action) {
  auto* cmd = app.add_subcommand("gen-data", "Write a synthetic shapes dataset");
  struct Opts {
    std::string out;
    int count = 0;
    std::optional<std::uint64_t> seed;
    int jobs = 1;
    int size = 32;
    std::string heldout = "triangle";
    DatasetSplits splits;
  };
  auto o = std::make_shared<Opts>();
  cmd->add_option("--out", o->out, "Output directory")->required();
  cmd->add_option("--count", o->count, "Number of entries")->required()->check(CLI::NonNegativeNumber);
  cmd->add_option("--seed", o->seed, "Base seed");
  cmd->add_option("--jobs", o->jobs, "Generation threads")->check(CLI::PositiveNumber);
  cmd->add_option("--size", o->size, "Canvas side")->check(CLI::Range(8, 1024));
  cmd->add_option("--heldout", o->heldout, "Class kept out of labeled splits");
  cmd->add_option("--val-fraction", o->splits.val_fraction)->check(CLI::Range(0.0, 1.0));
  cmd->add_option("--lf-fraction", o->splits.lf_fraction)->check(CLI::Range(0.0, 1.0));
  cmd->add_option("--novel-fraction", o->splits.novel_fraction)->check(CLI::Range(0.0, 1.0));
  cmd->callback([o, &action] {
    action = [o] {
      SynthConfig sc;
      sc.size = o->size;
      sc.heldout_class = o->heldout;
      sc.heldout_index();
      if (o->splits.val_fraction + o->splits.lf_fraction + o->splits.novel_fraction > 1.0) {
        throw UsageError("split fractions exceed 1");
      }
      const std::uint64_t seed = resolve_seed(o->seed, std::nullopt);
      make_out_dir(o->out);
      write_dataset(o->count, o->out, seed, sc, o->splits, o->jobs);
      write_run_json(o->out, "gen-data",
                     {{"seed", seed}, {"count", o->count}, {"size", o->size}, {"heldout", o->heldout},
                      {"val_fraction", o->splits.val_fraction}, {"lf_fraction", o->splits.lf_fraction},
                      {"novel_fraction", o->splits.novel_fraction}});
      std::cout << "wrote " << o->count << " entries to " << o->out << "\n";
      return 0;
    };
  });
}

// ------------------------------------------------------------- compute-lcm

void add_compute_lcm(CLI::App& app, std::function<int()>& action) {
  auto* cmd = app.add_subcommand("compute-lcm", "Write per-class layout slices for one semantic map");
  struct Opts {
    std::string map, sidecar, latent, out, mode = "lcm", words;
  };
  auto o = std::make_shared<Opts>();
  cmd->add_option("--map", o->map, "Semantic map PGM")->required()->check(CLI::ExistingFile);
  cmd->add_option("--sidecar", o->sidecar, "Class-name JSON sidecar")->required()->check(CLI::ExistingFile);
  cmd->add_option("--latent", o->latent, "Latent size HxW")->required();
  cmd->add_option("--out", o->out, "Output directory")->required();
  cmd->add_option("--mode", o->mode, "lcm or nearest")->check(CLI::IsMember({"lcm", "nearest"}));
  cmd->add_option("--words", o->words, "Extra prompt words appended without a region");
  cmd->callback([o, &action] {
    action = [o] {
      const Dims latent = parse_dims(o->latent);
      const SemanticMap map = load_semantic_map(o->map, o->sidecar);
      const Vocabulary vocab = Vocabulary::from_classes(map.classes(), split_words(o->words));
      const auto extra = split_words(o->words);
      const ConditionedPrompt cp = build_prompt(map, vocab, extra);
      const LayoutControlMap lcm = make_layout(parse_layout_mode(o->mode), map, latent, cp.token_classes);
      make_out_dir(o->out);
      write_layout_slices(o->out, lcm, cp.token_classes, map.classes());
      write_run_json(o->out, "compute-lcm",
                     {{"inputs", {{"map", o->map}, {"sidecar", o->sidecar}}},
                      {"latent", o->latent},
                      {"mode", o->mode},
                      {"prompt", prompt_text(cp.prompt, vocab)}});
      return 0;
    };
  });
}

// ------------------------------------------------------------------ train

struct TrainFlags {
  std::string config, data, out, layout, alpha, fusion_domain;
  std::optional<std::uint64_t> seed;
  std::optional<int> steps, batch_size, lf_batch_size, variant_row, log_every;
  std::optional<double> lr, lambda_sa, lambda_lfp;
  bool no_sa = false;
  bool no_lfp = false;
};

void add_train(CLI::App& app, std::function<int()>& action) {
  auto* cmd = app.add_subcommand("train", "Train a model and write a checkpoint");
  auto o = std::make_shared<TrainFlags>();
  cmd->add_option("--config", o->config, "Run config JSON")->check(CLI::ExistingFile);
  cmd->add_option("--data", o->data, "Dataset directory (default: synthesize in memory)");
  cmd->add_option("--out", o->out, "Output directory")->required();
  cmd->add_option("--seed", o->seed);
  cmd->add_option("--train-steps", o->steps)->check(CLI::NonNegativeNumber);
  cmd->add_option("--batch-size", o->batch_size)->check(CLI::PositiveNumber);
  cmd->add_option("--lf-batch-size", o->lf_batch_size)->check(CLI::PositiveNumber);
  cmd->add_option("--lr", o->lr)->check(CLI::PositiveNumber);
  cmd->add_option("--lambda-sa", o->lambda_sa)->check(CLI::NonNegativeNumber);
  cmd->add_option("--lambda-lfp", o->lambda_lfp)->check(CLI::NonNegativeNumber);
  cmd->add_option("--layout", o->layout)->check(CLI::IsMember({"lcm", "nearest"}));
  cmd->add_option("--alpha", o->alpha)->check(CLI::IsMember({"adaptive", "fixed"}));
  cmd->add_option("--fusion-domain", o->fusion_domain)->check(CLI::IsMember({"product", "logit"}));
  cmd->add_option("--variant-row", o->variant_row)->check(CLI::Range(1, 8));
  cmd->add_option("--log-every", o->log_every, "Steps between alpha snapshots")->check(CLI::PositiveNumber);
  cmd->add_flag("--no-sa", o->no_sa);
  cmd->add_flag("--no-lfp", o->no_lfp);
  cmd->callback([o, &action] {
    action = [o] {
      std::optional<std::uint64_t> config_seed;
      // Flags are folded into the config JSON so conflicts are caught by the
      // same rules as in files.
      json j = o->config.empty() ? json::object() : read_config_json(o->config, config_seed);
      const bool toggles = !o->layout.empty() || !o->alpha.empty() || o->no_sa || o->no_lfp;
      if (toggles && !o->variant_row && j.contains("variant_row")) {
        // Flags beat the file: spell the preset out so they can override it.
        const json preset = config_to_json(variant_row(j["variant_row"].get<int>()));
        for (const char* k : {"layout", "alpha", "sa", "lfp"}) {
          if (!j.contains(k)) j[k] = preset[k];
        }
        j.erase("variant_row");
      }
      if (o->variant_row) {
        for (const char* k : {"layout", "alpha", "sa", "lfp", "lambda_sa", "lambda_lfp", "fixed_alpha"}) j.erase(k);
        j["variant_row"] = *o->variant_row;
      }
      if (!o->layout.empty()) j["layout"] = o->layout;
      if (!o->alpha.empty()) {
        j["alpha"] = o->alpha;
        if (o->alpha == "adaptive") j.erase("fixed_alpha");
      }
      if (!o->fusion_domain.empty()) j["fusion_domain"] = o->fusion_domain;
      if (o->no_sa) {
        j["sa"] = false;
        j.erase("lambda_sa");
      }
      if (o->no_lfp) {
        j["lfp"] = false;
        j.erase("lambda_lfp");
      }
      if (o->lambda_sa) j["lambda_sa"] = *o->lambda_sa;
      if (o->lambda_lfp) j["lambda_lfp"] = *o->lambda_lfp;
      if (!o->data.empty()) j["data"] = o->data;
      json& t = j["train"];
      if (!t.is_object()) t = json::object();
      if (o->steps) t["steps"] = *o->steps;
      if (o->batch_size) t["batch_size"] = *o->batch_size;
      if (o->lf_batch_size) t["lf_batch_size"] = *o->lf_batch_size;
      if (o->lr) t["learning_rate"] = *o->lr;
      j.erase("seed");
      RunConfig cfg = config_from_json(j);
      cfg.seed = resolve_seed(o->seed, config_seed);

      const Vocabulary vocab = Vocabulary::from_classes(shape_classes(), {}, cfg.model.text_dim);
      const TrainingSet data = cfg.data_dir.empty()
                                   ? synth_training_set(cfg.labeled_count, cfg.layout_free_count,
                                                        derive_seed(cfg.seed, 0xda7a), vocab,
                                                        SynthConfig{.size = cfg.model.image_size})
                                   : load_training_set(cfg.data_dir, vocab);
      PlaceModel model(cfg.resolved_model(), vocab, derive_seed(cfg.seed, 0x30de1));
      Trainer trainer(model, data, cfg.train_options());

      make_out_dir(o->out);
      const fs::path out(o->out);
      write_run_json(out, "train", config_to_json(cfg));
      std::ofstream log(out / "train_log.csv", std::ios::binary);
      std::ofstream alpha(out / "alpha.csv", std::ios::binary);
      log << "step,ldm,sa,lfp,total,alpha_mean\n";
      alpha << "block,step,t,alpha\n";
      const auto grid = alpha_grid(model.schedule().steps());
      const int every = o->log_every.value_or(100);
      append_alpha_rows(alpha, model, 0, grid);
      for (int s = 0; s < cfg.train_steps; ++s) {
        const StepResult r = trainer.step();
        log << r.step << ',' << r.report.ldm << ',' << r.report.sa << ',' << r.report.lfp << ',' << r.report.total
            << ',' << r.alpha_mean << '\n';
        if (r.step % every == 0 || r.step == cfg.train_steps) append_alpha_rows(alpha, model, r.step, grid);
      }
      save_checkpoint(out / "checkpoint.ckpt", model, {{"run", config_to_json(cfg)}});
      if (!log || !alpha) throw Error(ErrorCode::kIoFailure, "cannot write training logs");
      std::cout << "trained " << cfg.train_steps << " steps; checkpoint at " << (out / "checkpoint.ckpt").string()
                << "\n";
      return 0;
    };
  });
}

// ----------------------------------------------------------------- sample

struct SampleFlags {
  std::string checkpoint, out, map, sidecar, data, split = "val", prompt, layout;
  std::optional<std::uint64_t> seed;
  int steps = 50;
  double guidance = 2.0;
  int count = -1;
  int batch = 16;
};

struct SampleJob {
  std::vector<Conditioning> cond;
  std::vector<std::uint64_t> seeds;
  std::vector<std::string> names;
};

void add_sample(CLI::App& app, std::function<int()>& action) {
  auto* cmd = app.add_subcommand("sample", "Generate images from a checkpoint");
  auto o = std::make_shared<SampleFlags>();
  cmd->add_option("--checkpoint", o->checkpoint)->required()->check(CLI::ExistingFile);
  cmd->add_option("--out", o->out)->required();
  cmd->add_option("--map", o->map, "Semantic map PGM")->check(CLI::ExistingFile);
  cmd->add_option("--sidecar", o->sidecar, "Class-name sidecar for --map")->check(CLI::ExistingFile);
  cmd->add_option("--data", o->data, "Dataset directory; samples every map of --split");
  cmd->add_option("--split", o->split)->check(CLI::IsMember({"train", "val", "novel"}));
  cmd->add_option("--count", o->count, "Limit on dataset entries")->check(CLI::NonNegativeNumber);
  cmd->add_option("--prompt", o->prompt, "Layout-free prompt, e.g. \"background circle\"");
  cmd->add_option("--layout", o->layout, "Override the checkpoint's layout mode")->check(CLI::IsMember({"lcm", "nearest"}));
  cmd->add_option("--seed", o->seed);
  cmd->add_option("--steps", o->steps)->check(CLI::PositiveNumber);
  cmd->add_option("--guidance", o->guidance)->check(CLI::NonNegativeNumber);
  cmd->add_option("--batch", o->batch, "Images per forward pass")->check(CLI::PositiveNumber);
  cmd->callback([o, &action] {
    const int sources = !o->map.empty() + !o->data.empty() + !o->prompt.empty();
    if (sources != 1) throw CLI::ValidationError("exactly one of --map, --data, --prompt is required");
    if (!o->map.empty() && o->sidecar.empty()) throw CLI::ValidationError("--map requires --sidecar");
    action = [o] {
      const std::uint64_t seed = resolve_seed(o->seed, std::nullopt);
      LoadedCheckpoint ck = load_checkpoint(o->checkpoint);
      const PlaceModel& model = *ck.model;
      LayoutMode mode = LayoutMode::kCoverage;
      if (ck.extra.contains("run") && ck.extra["run"].contains("layout")) {
        mode = parse_layout_mode(ck.extra["run"]["layout"].get<std::string>());
      }
      if (!o->layout.empty()) mode = parse_layout_mode(o->layout);

      SampleJob job;
      if (!o->map.empty()) {
        const SemanticMap map = load_semantic_map(o->map, o->sidecar);
        job.cond.push_back(layout_conditioning(map, model.vocab(), model.config(), mode));
        job.seeds.push_back(derive_seed(seed, 0));
        job.names.push_back("sample.ppm");
      } else if (!o->prompt.empty()) {
        Prompt p;
        for (const std::string& w : split_words(o->prompt)) p.tokens.push_back(model.vocab().index_of(w));
        job.cond.push_back(layout_free_conditioning({p, TokenClassMap(p.tokens.size())}));
        job.seeds.push_back(derive_seed(seed, 0));
        job.names.push_back("sample.ppm");
      } else {
        for (const ManifestEntry& e : read_manifest(o->data)) {
          if (e.split != o->split || !e.has_map) continue;
          if (o->count >= 0 && static_cast<int>(job.cond.size()) >= o->count) break;
          const GrayImage g = read_pgm(dataset_map_path(o->data, e.index));
          const SemanticMap map(g.height, g.width, shape_classes(), g.pixels);
          job.cond.push_back(layout_conditioning(map, model.vocab(), model.config(), mode));
          job.seeds.push_back(derive_seed(seed, static_cast<std::uint64_t>(e.index)));
          job.names.push_back(dataset_image_path("", e.index).filename().string());
        }
      }
      make_out_dir(o->out);
      const int size = model.config().image_size;
      const std::size_t per = static_cast<std::size_t>(size) * size * model.config().in_channels;
      SamplerOptions so{o->steps, o->guidance};
      for (std::size_t b0 = 0; b0 < job.cond.size(); b0 += o->batch) {
        const std::size_t b1 = std::min(job.cond.size(), b0 + o->batch);
        std::vector<Conditioning> cond(job.cond.begin() + b0, job.cond.begin() + b1);
        std::vector<std::uint64_t> seeds(job.seeds.begin() + b0, job.seeds.begin() + b1);
        const Tensor images = sample_images(model, cond, seeds, so);
        for (std::size_t k = 0; k < cond.size(); ++k) {
          write_ppm(fs::path(o->out) / job.names[b0 + k], model_to_image(images.data() + k * per, size));
        }
      }
      write_run_json(o->out, "sample",
                     {{"seed", seed},
                      {"steps", o->steps},
                      {"guidance", o->guidance},
                      {"layout", layout_mode_name(mode)},
                      {"inputs",
                       {{"checkpoint", o->checkpoint}, {"map", o->map}, {"sidecar", o->sidecar}, {"data", o->data},
                        {"split", o->split}, {"count", o->count}, {"prompt", o->prompt}}}});
      std::cout << "wrote " << job.cond.size() << " images to " << o->out << "\n";
      return 0;
    };
  });
}

// ------------------------------------------------------------------- eval

struct EvalFlags {
  std::string data, samples, out, split = "val";
  int jobs = 1;
  bool fidelity = false;
  int fidelity_count = 100;
  int fidelity_size = 64;
  std::vector<int> factors = {2, 4, 8};
  std::optional<std::uint64_t> seed;
};

int run_fidelity(const EvalFlags& o) {
  const std::uint64_t seed = resolve_seed(o.seed, std::nullopt);
  std::vector<SemanticMap> maps;
  for (int i = 0; i < o.fidelity_count; ++i) maps.push_back(thin_structure_map(derive_seed(seed, i), o.fidelity_size));
  const auto rows = layout_fidelity_report(maps, o.factors);
  make_out_dir(o.out);
  write_fidelity_csv(fs::path(o.out) / "fidelity.csv", rows);
  json summary = json::object();
  for (int f : o.factors) {
    double lcm = 0.0, nearest = 0.0;
    int n = 0, strictly_better = 0;
    for (const auto& r : rows) {
      if (r.factor != f) continue;
      lcm += r.lcm_accuracy;
      nearest += r.nearest_accuracy;
      strictly_better += r.lcm_accuracy > r.nearest_accuracy;
      ++n;
    }
    summary[std::to_string(f)] = {{"lcm_accuracy", n ? lcm / n : 0.0},
                                  {"nearest_accuracy", n ? nearest / n : 0.0},
                                  {"maps_strictly_better", strictly_better}};
  }
  write_json(fs::path(o.out) / "fidelity.json", summary);
  write_run_json(o.out, "eval", {{"seed", seed}, {"fidelity", true}, {"count", o.fidelity_count},
                                 {"size", o.fidelity_size}, {"factors", o.factors}});
  std::cout << summary.dump(2) << "\n";
  return 0;
}

void add_eval(CLI::App& app, std::function<int()>& action) {
  auto* cmd = app.add_subcommand("eval", "Score samples with the color oracle, or run the layout fidelity report");
  auto o = std::make_shared<EvalFlags>();
  cmd->add_option("--data", o->data, "Dataset directory with ground-truth maps");
  cmd->add_option("--samples", o->samples, "Directory of NNNN.ppm samples");
  cmd->add_option("--out", o->out)->required();
  cmd->add_option("--split", o->split)->check(CLI::IsMember({"train", "val", "novel"}));
  cmd->add_option("--jobs", o->jobs)->check(CLI::PositiveNumber);
  cmd->add_flag("--fidelity", o->fidelity, "Compare coverage and nearest layouts on thin-structure maps");
  cmd->add_option("--count", o->fidelity_count)->check(CLI::PositiveNumber);
  cmd->add_option("--size", o->fidelity_size)->check(CLI::Range(8, 4096));
  cmd->add_option("--factors", o->factors)->check(CLI::PositiveNumber)->delimiter(',');
  cmd->add_option("--seed", o->seed);
  cmd->callback([o, &action] {
    if (!o->fidelity && (o->data.empty() || o->samples.empty())) {
      throw CLI::ValidationError("eval needs --data and --samples (or --fidelity)");
    }
    action = [o] {
      if (o->fidelity) return run_fidelity(*o);
      struct Item {
        int index;
        SemanticMap gt;
        SemanticMap pred;
      };
      std::vector<int> indices;
      for (const ManifestEntry& e : read_manifest(o->data)) {
        if (e.split == o->split && e.has_map && fs::exists(fs::path(o->samples) / dataset_image_path("", e.index).filename())) {
          indices.push_back(e.index);
        }
      }
      if (indices.empty()) throw Error(ErrorCode::kIoFailure, "no samples matched split '" + o->split + "'");
      std::vector<std::optional<Item>> items(indices.size());
      auto work = [&](std::size_t begin, std::size_t stride) {
        for (std::size_t i = begin; i < indices.size(); i += stride) {
          const int idx = indices[i];
          const GrayImage g = read_pgm(dataset_map_path(o->data, idx));
          SemanticMap gt(g.height, g.width, shape_classes(), g.pixels);
          const RgbImage img = read_ppm(fs::path(o->samples) / dataset_image_path("", idx).filename());
          items[i] = Item{idx, std::move(gt), oracle_segment(img)};
        }
      };
      const int jobs = std::max(1, std::min<int>(o->jobs, static_cast<int>(indices.size())));
      std::vector<std::thread> pool;
      std::vector<std::exception_ptr> errors(jobs);
      for (int j = 0; j < jobs; ++j) {
        pool.emplace_back([&, j] {
          try {
            work(j, jobs);
          } catch (...) {
            errors[j] = std::current_exception();
          }
        });
      }
      for (auto& t : pool) t.join();
      for (auto& e : errors) {
        if (e) std::rethrow_exception(e);
      }

      const auto& classes = shape_classes();
      IouAccumulator acc(static_cast<int>(classes.size()));
      make_out_dir(o->out);
      std::ofstream csv(fs::path(o->out) / "per_image.csv", std::ios::binary);
      csv << "index,miou";
      for (const auto& c : classes) csv << ',' << c;
      csv << '\n';
      for (const auto& it : items) {
        acc.add(it->pred, it->gt);
        const SegmentationResult r = miou(it->pred, it->gt);
        csv << it->index << ',' << r.miou;
        for (const auto& v : r.per_class) {
          csv << ',';
          if (v) csv << *v;
        }
        csv << '\n';
      }
      const SegmentationResult total = acc.result();
      json per_class = json::object();
      for (std::size_t k = 0; k < classes.size(); ++k) {
        per_class[classes[k]] = total.per_class[k] ? json(*total.per_class[k]) : json(nullptr);
      }
      const json summary{{"miou", total.miou}, {"per_class", per_class}, {"n_images", acc.images()}};
      write_json(fs::path(o->out) / "eval.json", summary);
      write_run_json(o->out, "eval", {{"inputs", {{"data", o->data}, {"samples", o->samples}}}, {"split", o->split}});
      std::cout << summary.dump(2) << "\n";
      return 0;
    };
  });
}

// ---------------------------------------------------------------- inspect

struct InspectFlags {
  std::string checkpoint, out, map, sidecar, layout;
  std::optional<std::uint64_t> seed;
  int steps = 50;
  double guidance = 2.0;
  double t_fraction = 0.5;
};

void add_inspect(CLI::App& app, std::function<int()>& action) {
  auto* cmd = app.add_subcommand("inspect", "Alpha-vs-timestep CSV, fusion-map PGMs and the x0 strip");
  auto o = std::make_shared<InspectFlags>();
  cmd->add_option("--checkpoint", o->checkpoint)->required()->check(CLI::ExistingFile);
  cmd->add_option("--out", o->out)->required();
  cmd->add_option("--map", o->map)->required()->check(CLI::ExistingFile);
  cmd->add_option("--sidecar", o->sidecar)->required()->check(CLI::ExistingFile);
  cmd->add_option("--layout", o->layout)->check(CLI::IsMember({"lcm", "nearest"}));
  cmd->add_option("--seed", o->seed);
  cmd->add_option("--steps", o->steps)->check(CLI::PositiveNumber);
  cmd->add_option("--guidance", o->guidance)->check(CLI::NonNegativeNumber);
  cmd->add_option("--t", o->t_fraction, "Normalized timestep for fusion maps")->check(CLI::Range(0.0, 1.0));
  cmd->callback([o, &action] {
    action = [o] {
      const std::uint64_t seed = resolve_seed(o->seed, std::nullopt);
      LoadedCheckpoint ck = load_checkpoint(o->checkpoint);
      const PlaceModel& model = *ck.model;
      LayoutMode mode = LayoutMode::kCoverage;
      if (ck.extra.contains("run") && ck.extra["run"].contains("layout")) {
        mode = parse_layout_mode(ck.extra["run"]["layout"].get<std::string>());
      }
      if (!o->layout.empty()) mode = parse_layout_mode(o->layout);
      const SemanticMap map = load_semantic_map(o->map, o->sidecar);
      const Conditioning cond = layout_conditioning(map, model.vocab(), model.config(), mode);

      SampleTrace trace;
      const Tensor image = sample_images(model, {cond}, {derive_seed(seed, 0)}, {o->steps, o->guidance}, &trace);
      const fs::path out(o->out);
      make_out_dir(out);
      make_out_dir(out / "fusion");
      write_ppm(out / "sample.ppm", model_to_image(image.data(), model.config().image_size));

      std::ofstream alpha(out / "alpha_vs_t.csv", std::ios::binary);
      alpha << "block,step,t,alpha\n";
      for (std::size_t s = 0; s < trace.timesteps.size(); ++s) {
        for (const auto& [name, a] : model.block_alphas(trace.timesteps[s])) {
          alpha << name << ',' << s << ',' << trace.timesteps[s] << ',' << a << '\n';
        }
      }

      const int size = model.config().image_size;
      RgbImage strip(size * static_cast<int>(trace.x0.size()), size);
      for (std::size_t s = 0; s < trace.x0.size(); ++s) {
        const RgbImage frame = model_to_image(trace.x0[s].data(), size);
        for (int r = 0; r < size; ++r) {
          for (int c = 0; c < size; ++c) {
            for (int ch = 0; ch < 3; ++ch) strip.at(r, static_cast<int>(s) * size + c, ch) = frame.at(r, c, ch);
          }
        }
      }
      write_ppm(out / "x0_strip.ppm", strip);

      // Fusion maps of the final sample re-noised to the requested timestep.
      const int t = static_cast<int>(std::lround(o->t_fraction * (model.schedule().steps() - 1)));
      const Tensor noise = initial_noise(derive_seed(seed, 1), size, model.config().in_channels);
      const Tensor zt = q_sample(model.schedule(), image, t, noise);
      ag::NoGradGuard no_grad;
      const UNetOutput fwd = model.forward(ag::Var::constant(zt), {t}, {cond});
      for (const BlockTrace& b : fwd.blocks) {
        const int res = b.resolution;
        const int n = cond.prompt.prompt.length();
        for (int j = 0; j < n; ++j) {
          GrayImage g{res, res, std::vector<std::uint8_t>(static_cast<std::size_t>(res) * res)};
          for (int i = 0; i < res * res; ++i) g.pixels[i] = quantize_unit(b.fusion.value()[static_cast<std::size_t>(i) * n + j]);
          const std::string word = model.vocab().word(cond.prompt.prompt.tokens[j]);
          write_pgm(out / "fusion" / (b.name + "_" + std::to_string(j) + "_" + word + ".pgm"), g);
        }
      }
      write_run_json(out, "inspect",
                     {{"seed", seed}, {"steps", o->steps}, {"guidance", o->guidance}, {"t", t},
                      {"layout", layout_mode_name(mode)},
                      {"inputs", {{"checkpoint", o->checkpoint}, {"map", o->map}, {"sidecar", o->sidecar}}}});
      return 0;
    };
  });
}

}  // namespace

int run(int argc, char** argv) {
  CLI::App app{"Layout-controlled diffusion toolkit"};
  app.require_subcommand(1);
  std::string kernels;
  app.add_option("--kernels", kernels, "Kernel backend: scalar | avx2 | auto")->check(CLI::IsMember({"scalar", "avx2", "auto"}));
  std::function<int()> action;
  add_gen_data(app, action);
  add_compute_lcm(app, action);
  add_train(app, action);
  add_sample(app, action);
  add_eval(app, action);
  add_inspect(app, action);
  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }
  try {
    if (!kernels.empty() && kernels != "auto") kernels::select_backend(kernels::parse_backend(kernels));
    return action ? action() : 2;
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace place::cli
