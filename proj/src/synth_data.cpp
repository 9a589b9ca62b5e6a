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

#include "place/synth_data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <thread>

#include <json.hpp>

#include "place/error.hpp"

namespace place {

namespace fs = std::filesystem;

const std::vector<std::string>& shape_classes() {
  static const std::vector<std::string> kClasses = {"background", "circle", "square", "triangle", "stripe"};
  return kClasses;
}

const std::vector<Color>& canonical_colors() {
  static const std::vector<Color> kColors = {
      {0.0f, 0.0f, 0.0f}, {1.0f, 0.0f, 0.0f}, {0.0f, 1.0f, 0.0f}, {0.0f, 0.0f, 1.0f}, {1.0f, 1.0f, 0.0f}};
  return kColors;
}

int SynthConfig::heldout_index() const {
  if (heldout_class.empty()) return -1;
  const auto& names = shape_classes();
  for (int i = 1; i < static_cast<int>(names.size()); ++i) {
    if (names[i] == heldout_class) return i;
  }
  throw Error(ErrorCode::kMalformedConfig, "unknown held-out class '" + heldout_class + "'");
}

namespace {

ShapeKind kind_of(int class_index) { return static_cast<ShapeKind>(class_index - 1); }

Color jittered(const Color& base, float jitter, Rng& rng) {
  Color c{};
  for (int i = 0; i < 3; ++i) {
    c[i] = std::clamp(base[i] + static_cast<float>(rng.uniform(-jitter, jitter)), 0.0f, 1.0f);
  }
  return c;
}

// Geometry scales with the canvas; sizes below are for 32 pixels.
ShapeInstance sample_geometry(int class_index, int size, Rng& rng) {
  const double s = size / 32.0;
  auto scaled = [&](int v) { return std::max(1, static_cast<int>(std::lround(v * s))); };
  ShapeInstance sh;
  sh.class_index = class_index;
  sh.kind = kind_of(class_index);
  switch (sh.kind) {
    case ShapeKind::kCircle: {
      sh.size = rng.uniform_int(scaled(3), scaled(7));
      sh.center_row = sh.size + rng.uniform() * (size - 2 * sh.size);
      sh.center_col = sh.size + rng.uniform() * (size - 2 * sh.size);
      break;
    }
    case ShapeKind::kSquare:
    case ShapeKind::kTriangle: {
      const bool square = sh.kind == ShapeKind::kSquare;
      sh.size = square ? rng.uniform_int(scaled(5), scaled(12)) : rng.uniform_int(scaled(7), scaled(14));
      const int top = rng.uniform_int(0, size - sh.size);
      const int left = rng.uniform_int(0, size - sh.size);
      sh.center_row = top + sh.size / 2.0;
      sh.center_col = left + sh.size / 2.0;
      break;
    }
    case ShapeKind::kStripe: {
      sh.size = rng.uniform_int(scaled(10), scaled(24));
      sh.thickness = rng.uniform_int(1, 2);
      sh.vertical = rng.uniform() < 0.5;
      const int along = rng.uniform_int(0, size - sh.size);
      const int across = rng.uniform_int(0, size - sh.thickness);
      const double c_along = along + sh.size / 2.0;
      const double c_across = across + sh.thickness / 2.0;
      sh.center_row = sh.vertical ? c_along : c_across;
      sh.center_col = sh.vertical ? c_across : c_along;
      break;
    }
  }
  return sh;
}

}  // namespace

std::vector<int> rasterize(const ShapeInstance& shape, int size) {
  std::vector<int> pixels;
  auto emit = [&](int r, int c) {
    if (r >= 0 && r < size && c >= 0 && c < size) pixels.push_back(r * size + c);
  };
  switch (shape.kind) {
    case ShapeKind::kCircle: {
      const double r2 = static_cast<double>(shape.size) * shape.size;
      for (int r = 0; r < size; ++r) {
        for (int c = 0; c < size; ++c) {
          const double dy = r + 0.5 - shape.center_row;
          const double dx = c + 0.5 - shape.center_col;
          if (dx * dx + dy * dy <= r2) emit(r, c);
        }
      }
      break;
    }
    case ShapeKind::kSquare: {
      const int top = static_cast<int>(std::lround(shape.center_row - shape.size / 2.0));
      const int left = static_cast<int>(std::lround(shape.center_col - shape.size / 2.0));
      for (int r = top; r < top + shape.size; ++r) {
        for (int c = left; c < left + shape.size; ++c) emit(r, c);
      }
      break;
    }
    case ShapeKind::kTriangle: {
      // Apex at the top centre, base along the bottom edge.
      const double top = std::lround(shape.center_row - shape.size / 2.0);
      const double half = shape.size / 2.0;
      for (int r = static_cast<int>(top); r < static_cast<int>(top) + shape.size; ++r) {
        const double y = r + 0.5 - top;
        const double reach = half * y / shape.size;
        for (int c = 0; c < size; ++c) {
          if (std::abs(c + 0.5 - shape.center_col) <= reach) emit(r, c);
        }
      }
      break;
    }
    case ShapeKind::kStripe: {
      const int rows = shape.vertical ? shape.size : shape.thickness;
      const int cols = shape.vertical ? shape.thickness : shape.size;
      const int top = static_cast<int>(std::lround(shape.center_row - rows / 2.0));
      const int left = static_cast<int>(std::lround(shape.center_col - cols / 2.0));
      for (int r = top; r < top + rows; ++r) {
        for (int c = left; c < left + cols; ++c) emit(r, c);
      }
      break;
    }
  }
  return pixels;
}

Scene gen_scene(std::uint64_t seed, const SynthConfig& config, HeldoutPolicy policy) {
  if (config.size < 8 || config.min_shapes < 1 || config.max_shapes < config.min_shapes) {
    throw Error(ErrorCode::kMalformedConfig, "invalid scene configuration");
  }
  const int heldout = config.heldout_index();
  std::vector<int> allowed;
  for (int c = 1; c < static_cast<int>(shape_classes().size()); ++c) {
    if (c == heldout && policy == HeldoutPolicy::kExclude) continue;
    allowed.push_back(c);
  }
  if (policy == HeldoutPolicy::kRequire && heldout < 0) {
    throw Error(ErrorCode::kMalformedConfig, "no held-out class configured");
  }

  Rng rng(seed);
  const int size = config.size;
  int count = rng.uniform_int(config.min_shapes, config.max_shapes);
  std::vector<ShapeInstance> shapes;
  std::vector<std::vector<int>> pixels;
  while (true) {
    shapes.clear();
    pixels.clear();
    std::vector<std::uint8_t> used(static_cast<std::size_t>(size) * size, 0);
    bool ok = true;
    for (int k = 0; k < count && ok; ++k) {
      const int cls = (k == 0 && policy == HeldoutPolicy::kRequire)
                          ? heldout
                          : allowed[rng.uniform_int(0, static_cast<int>(allowed.size()) - 1)];
      ok = false;
      for (int attempt = 0; attempt < config.placement_attempts; ++attempt) {
        ShapeInstance sh = sample_geometry(cls, size, rng);
        std::vector<int> px = rasterize(sh, size);
        if (px.empty()) continue;
        bool free = true;
        for (int p : px) free = free && !used[p];
        if (!free) continue;
        for (int p : px) used[p] = 1;
        sh.color = jittered(canonical_colors()[cls], config.jitter, rng);
        shapes.push_back(sh);
        pixels.push_back(std::move(px));
        ok = true;
        break;
      }
    }
    if (ok) break;
    if (--count < 1) throw Error(ErrorCode::kPlacementFailure, "could not place any shape");
  }

  Scene scene{seed, shapes, SemanticMap(size, size, shape_classes(), std::vector<std::uint8_t>(size * size, 0)),
              RgbImage(size, size), ""};
  std::vector<std::uint8_t> grid(static_cast<std::size_t>(size) * size, 0);
  const Color bg = jittered(canonical_colors()[0], config.jitter, rng);
  for (int p = 0; p < size * size; ++p) {
    for (int ch = 0; ch < 3; ++ch) scene.image.pixels[p * 3 + ch] = bg[ch];
  }
  for (std::size_t s = 0; s < shapes.size(); ++s) {
    for (int p : pixels[s]) {
      grid[p] = static_cast<std::uint8_t>(shapes[s].class_index);
      for (int ch = 0; ch < 3; ++ch) scene.image.pixels[p * 3 + ch] = shapes[s].color[ch];
    }
  }
  scene.map = SemanticMap(size, size, shape_classes(), std::move(grid));
  const Vocabulary vocab = Vocabulary::from_classes(shape_classes());
  scene.caption = prompt_text(build_prompt(scene.map, vocab).prompt, vocab);
  return scene;
}

LayoutFreePair gen_layout_free_pair(std::uint64_t seed, bool heldout_allowed, const SynthConfig& config) {
  Scene s = gen_scene(seed, config, heldout_allowed ? HeldoutPolicy::kAllow : HeldoutPolicy::kExclude);
  return LayoutFreePair{seed, std::move(s.image), std::move(s.caption), present_classes(s.map)};
}

fs::path dataset_image_path(const fs::path& dir, int index) {
  char name[32];
  std::snprintf(name, sizeof(name), "%04d.ppm", index);
  return dir / "images" / name;
}

fs::path dataset_map_path(const fs::path& dir, int index) {
  char name[32];
  std::snprintf(name, sizeof(name), "%04d.pgm", index);
  return dir / "maps" / name;
}

std::vector<ManifestEntry> write_dataset(int count, const fs::path& out_dir, std::uint64_t seed,
                                         const SynthConfig& config, const DatasetSplits& splits, int jobs) {
  if (count < 0) throw Error(ErrorCode::kMalformedConfig, "negative dataset size");
  const int n_val = static_cast<int>(std::lround(count * splits.val_fraction));
  const int n_novel = static_cast<int>(std::lround(count * splits.novel_fraction));
  const int n_lf = static_cast<int>(std::lround(count * splits.lf_fraction));
  const int n_train = count - n_val - n_novel - n_lf;
  if (n_train < 0) throw Error(ErrorCode::kMalformedConfig, "split fractions exceed 1");

  std::error_code ec;
  fs::create_directories(out_dir / "images", ec);
  fs::create_directories(out_dir / "maps", ec);
  if (ec) throw Error(ErrorCode::kIoFailure, "cannot create " + out_dir.string());

  std::vector<ManifestEntry> entries(count);
  for (int i = 0; i < count; ++i) {
    ManifestEntry& e = entries[i];
    e.index = i;
    e.seed = derive_seed(seed, static_cast<std::uint64_t>(i));
    e.split = i < n_train ? "train" : i < n_train + n_val ? "val" : i < n_train + n_val + n_novel ? "novel" : "lf";
    e.has_map = e.split != "lf";
  }
  auto work = [&](int begin, int stride) {
    for (int i = begin; i < count; i += stride) {
      ManifestEntry& e = entries[i];
      const HeldoutPolicy policy = e.split == "lf"      ? HeldoutPolicy::kAllow
                                   : e.split == "novel" ? HeldoutPolicy::kRequire
                                                        : HeldoutPolicy::kExclude;
      const Scene s = gen_scene(e.seed, config, policy);
      e.caption = s.caption;
      write_ppm(dataset_image_path(out_dir, i), s.image);
      if (e.has_map) {
        GrayImage g{s.map.width(), s.map.height(), s.map.grid()};
        write_pgm(dataset_map_path(out_dir, i), g);
      }
    }
  };
  jobs = std::max(1, jobs);
  if (jobs == 1) {
    work(0, 1);
  } else {
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
  }

  nlohmann::ordered_json manifest;
  manifest["format"] = "place-dataset";
  manifest["version"] = 1;
  manifest["seed"] = seed;
  manifest["size"] = config.size;
  manifest["classes"] = shape_classes();
  manifest["heldout_class"] = config.heldout_class;
  manifest["entries"] = nlohmann::json::array();
  for (const auto& e : entries) {
    nlohmann::ordered_json j;
    j["index"] = e.index;
    j["seed"] = e.seed;
    j["split"] = e.split;
    j["caption"] = e.caption;
    j["image"] = dataset_image_path("", e.index).generic_string();
    j["map"] = e.has_map ? nlohmann::ordered_json(dataset_map_path("", e.index).generic_string())
                         : nlohmann::ordered_json(nullptr);
    manifest["entries"].push_back(std::move(j));
  }
  std::ofstream out(out_dir / "manifest.json", std::ios::binary);
  out << manifest.dump(2) << "\n";
  std::ofstream sidecar(out_dir / "maps" / "classes.json", std::ios::binary);
  sidecar << class_sidecar_json(shape_classes()) << "\n";
  if (!out || !sidecar) throw Error(ErrorCode::kIoFailure, "cannot write manifest in " + out_dir.string());
  return entries;
}

std::vector<ManifestEntry> read_manifest(const fs::path& dir) {
  std::ifstream in(dir / "manifest.json", std::ios::binary);
  if (!in) throw Error(ErrorCode::kIoFailure, "cannot read " + (dir / "manifest.json").string());
  nlohmann::json j;
  try {
    in >> j;
    std::vector<ManifestEntry> entries;
    for (const auto& e : j.at("entries")) {
      ManifestEntry m;
      m.index = e.at("index").get<int>();
      m.seed = e.at("seed").get<std::uint64_t>();
      m.split = e.at("split").get<std::string>();
      m.caption = e.at("caption").get<std::string>();
      m.has_map = !e.at("map").is_null();
      entries.push_back(std::move(m));
    }
    return entries;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kMalformedHeader, std::string("manifest: ") + e.what());
  }
}

SemanticMap thin_structure_map(std::uint64_t seed, int size) {
  Rng rng(seed);
  std::vector<std::uint8_t> grid(static_cast<std::size_t>(size) * size, 0);
  const int lines = rng.uniform_int(6, 12);
  for (int l = 0; l < lines; ++l) {
    const bool vertical = rng.uniform() < 0.5;
    const int pos = rng.uniform_int(0, size - 1);
    const int length = rng.uniform_int(size / 4, size);
    const int start = rng.uniform_int(0, size - length);
    for (int k = start; k < start + length; ++k) {
      const int r = vertical ? k : pos;
      const int c = vertical ? pos : k;
      grid[static_cast<std::size_t>(r) * size + c] = vertical ? 2 : 1;
    }
  }
  return SemanticMap(size, size, {"background", "wire", "pole"}, std::move(grid));
}

std::vector<float> image_to_model(const RgbImage& image) {
  std::vector<float> out(image.pixels.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = image.pixels[i] * 2.0f - 1.0f;
  return out;
}

RgbImage model_to_image(const float* data, int size) {
  RgbImage img(size, size);
  for (std::size_t i = 0; i < img.pixels.size(); ++i) img.pixels[i] = std::clamp((data[i] + 1.0f) * 0.5f, 0.0f, 1.0f);
  return img;
}

}  // namespace place
