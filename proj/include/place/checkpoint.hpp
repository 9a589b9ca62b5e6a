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

#include <filesystem>
#include <memory>

#include <json.hpp>

#include "place/unet.hpp"

namespace place {

// "PLACE-CKPT v1": 8-byte magic, u64 little-endian header length, JSON
// header {format, version, config, vocabulary, tensors[{name, shape, dtype}],
// extra}, then every tensor as little-endian f32 in header order.
inline constexpr char kCheckpointMagic[8] = {'P', 'L', 'A', 'C', 'E', 'C', 'K', '1'};

nlohmann::json unet_config_to_json(const UNetConfig& config);
UNetConfig unet_config_from_json(const nlohmann::json& j);

void save_checkpoint(const std::filesystem::path& path, const PlaceModel& model,
                     const nlohmann::json& extra = nlohmann::json::object());

struct LoadedCheckpoint {
  std::unique_ptr<PlaceModel> model;
  nlohmann::json extra;
};

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace place
