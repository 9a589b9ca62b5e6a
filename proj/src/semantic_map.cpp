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

#include "place/semantic_map.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <json.hpp>

#include "place/error.hpp"
#include "place/image_io.hpp"

namespace place {

SemanticMap::SemanticMap(int height, int width, std::vector<std::string> classes,
                         std::vector<std::uint8_t> grid)
    : height_(height), width_(width), classes_(std::move(classes)), grid_(std::move(grid)) {
  if (height_ <= 0 || width_ <= 0) {
    throw Error(ErrorCode::kDimMismatch, "semantic map must be non-empty");
  }
  if (grid_.size() != static_cast<std::size_t>(height_) * width_) {
    throw Error(ErrorCode::kDimMismatch, "grid size does not match dimensions");
  }
  if (classes_.empty() || classes_.size() > 256) {
    throw Error(ErrorCode::kMalformedHeader, "class count must be in [1, 256]");
  }
  std::set<std::string> seen;
  for (const auto& name : classes_) {
    if (name.empty()) throw Error(ErrorCode::kMalformedHeader, "empty class name");
    if (!seen.insert(name).second) {
      throw Error(ErrorCode::kMalformedHeader, "duplicate class name '" + name + "'");
    }
  }
  for (std::uint8_t v : grid_) {
    if (v >= classes_.size()) {
      throw Error(ErrorCode::kMissingClass,
                  "pixel value " + std::to_string(v) + " has no class (C=" +
                      std::to_string(classes_.size()) + ")");
    }
  }
}

std::vector<std::string> parse_class_sidecar(const std::string& json_text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(json_text);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorCode::kMalformedHeader, std::string("sidecar is not JSON: ") + e.what());
  }
  if (!doc.is_object()) throw Error(ErrorCode::kMalformedHeader, "sidecar must be a JSON object");
  std::map<int, std::string> by_index;
  for (const auto& [key, value] : doc.items()) {
    int index = -1;
    const auto [ptr, ec] = std::from_chars(key.data(), key.data() + key.size(), index);
    if (ec != std::errc() || ptr != key.data() + key.size() || index < 0) {
      throw Error(ErrorCode::kMalformedHeader, "sidecar key '" + key + "' is not a class index");
    }
    if (!value.is_string()) {
      throw Error(ErrorCode::kMalformedHeader, "sidecar value for '" + key + "' is not a string");
    }
    by_index[index] = value.get<std::string>();
  }
  std::vector<std::string> classes;
  for (const auto& [index, name] : by_index) {
    if (index != static_cast<int>(classes.size())) {
      throw Error(ErrorCode::kNonContiguousIndices,
                  "class indices must be contiguous from 0; missing " + std::to_string(classes.size()));
    }
    classes.push_back(name);
  }
  if (classes.empty()) throw Error(ErrorCode::kMalformedHeader, "sidecar lists no classes");
  return classes;
}

std::string class_sidecar_json(const std::vector<std::string>& classes) {
  // Keys are written in index order rather than nlohmann's lexicographic order.
  std::ostringstream out;
  out << "{";
  for (std::size_t i = 0; i < classes.size(); ++i) {
    out << (i ? ", " : "") << "\"" << i << "\": " << nlohmann::json(classes[i]).dump();
  }
  out << "}\n";
  return out.str();
}

SemanticMap load_semantic_map(const std::filesystem::path& pgm_path,
                              const std::filesystem::path& sidecar_path) {
  const GrayImage image = read_pgm(pgm_path);
  std::ifstream in(sidecar_path);
  if (!in) throw Error(ErrorCode::kIoFailure, "cannot open " + sidecar_path.string());
  std::stringstream text;
  text << in.rdbuf();
  auto classes = parse_class_sidecar(text.str());
  return SemanticMap(image.height, image.width, std::move(classes), image.pixels);
}

void save_semantic_map(const SemanticMap& map, const std::filesystem::path& pgm_path,
                       const std::filesystem::path& sidecar_path) {
  write_pgm(pgm_path, GrayImage{map.width(), map.height(), map.grid()});
  std::ofstream out(sidecar_path);
  if (!out) throw Error(ErrorCode::kIoFailure, "cannot create " + sidecar_path.string());
  out << class_sidecar_json(map.classes());
}

OneHotLayout one_hot_layout(const SemanticMap& map) {
  OneHotLayout layout;
  layout.rows = map.height() * map.width();
  layout.cols = map.num_classes();
  layout.data.assign(static_cast<std::size_t>(layout.rows) * layout.cols, 0);
  for (int r = 0; r < layout.rows; ++r) {
    layout.data[static_cast<std::size_t>(r) * layout.cols + map.grid()[r]] = 1;
  }
  return layout;
}

std::vector<int> present_classes(const SemanticMap& map) {
  std::vector<bool> seen(map.num_classes(), false);
  for (std::uint8_t v : map.grid()) seen[v] = true;
  std::vector<int> out;
  for (int c = 0; c < map.num_classes(); ++c) {
    if (seen[c]) out.push_back(c);
  }
  return out;
}

}  // namespace place
