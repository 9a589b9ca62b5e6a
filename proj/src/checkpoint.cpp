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

#include "place/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "place/error.hpp"

namespace place {

using nlohmann::json;

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

json unet_config_to_json(const UNetConfig& c) {
  return json{{"image_size", c.image_size},
              {"in_channels", c.in_channels},
              {"base_channels", c.base_channels},
              {"channel_mult", c.channel_mult},
              {"attention_resolutions", c.attention_resolutions},
              {"groups", c.groups},
              {"time_features", c.time_features},
              {"time_embed_dim", c.time_embed_dim},
              {"text_dim", c.text_dim},
              {"fusion_domain", std::string(fusion_domain_name(c.domain))},
              {"adaptive_alpha", c.adaptive_alpha},
              {"fixed_alpha", c.fixed_alpha},
              {"schedule_steps", c.schedule_steps},
              {"beta_start", c.beta_start},
              {"beta_end", c.beta_end}};
}

UNetConfig unet_config_from_json(const json& j) {
  UNetConfig c;
  try {
    c.image_size = j.value("image_size", c.image_size);
    c.in_channels = j.value("in_channels", c.in_channels);
    c.base_channels = j.value("base_channels", c.base_channels);
    c.channel_mult = j.value("channel_mult", c.channel_mult);
    c.attention_resolutions = j.value("attention_resolutions", c.attention_resolutions);
    c.groups = j.value("groups", c.groups);
    c.time_features = j.value("time_features", c.time_features);
    c.time_embed_dim = j.value("time_embed_dim", c.time_embed_dim);
    c.text_dim = j.value("text_dim", c.text_dim);
    c.domain = parse_fusion_domain(j.value("fusion_domain", std::string(fusion_domain_name(c.domain))));
    c.adaptive_alpha = j.value("adaptive_alpha", c.adaptive_alpha);
    c.fixed_alpha = j.value("fixed_alpha", c.fixed_alpha);
    c.schedule_steps = j.value("schedule_steps", c.schedule_steps);
    c.beta_start = j.value("beta_start", c.beta_start);
    c.beta_end = j.value("beta_end", c.beta_end);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kMalformedConfig, std::string("model config: ") + e.what());
  }
  c.validate();
  return c;
}

void save_checkpoint(const std::filesystem::path& path, const PlaceModel& model, const json& extra) {
  json header;
  header["format"] = "PLACE-CKPT";
  header["version"] = 1;
  header["config"] = unet_config_to_json(model.config());
  std::vector<std::string> words(model.vocab().words().begin() + 1, model.vocab().words().end());
  header["vocabulary"] = {{"words", words}, {"embedding_dim", model.vocab().embedding_dim()}};
  header["tensors"] = json::array();
  for (const auto& [name, var] : model.parameters().entries()) {
    header["tensors"].push_back({{"name", name}, {"shape", var.shape()}, {"dtype", "f32"}});
  }
  header["extra"] = extra;
  const std::string text = header.dump();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::kIoFailure, "cannot write " + path.string());
  out.write(kCheckpointMagic, sizeof(kCheckpointMagic));
  const std::uint64_t len = text.size();
  out.write(reinterpret_cast<const char*>(&len), sizeof(len));
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const auto& entry : model.parameters().entries()) {
    const Tensor& v = entry.second.value();
    out.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(float)));
  }
  if (!out) throw Error(ErrorCode::kIoFailure, "short write to " + path.string());
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIoFailure, "cannot read " + path.string());
  char magic[8];
  std::uint64_t len = 0;
  in.read(magic, sizeof(magic));
  in.read(reinterpret_cast<char*>(&len), sizeof(len));
  if (!in || std::memcmp(magic, kCheckpointMagic, sizeof(magic)) != 0) {
    throw Error(ErrorCode::kMalformedHeader, path.string() + " is not a checkpoint");
  }
  if (len > (std::uint64_t{1} << 30)) throw Error(ErrorCode::kMalformedHeader, "checkpoint header too large");
  std::string text(len, '\0');
  in.read(text.data(), static_cast<std::streamsize>(len));
  if (!in) throw Error(ErrorCode::kMalformedHeader, "truncated checkpoint header");

  json header;
  try {
    header = json::parse(text);
    if (header.at("format") != "PLACE-CKPT" || header.at("version") != 1) {
      throw Error(ErrorCode::kMalformedHeader, "unsupported checkpoint version");
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kMalformedHeader, std::string("checkpoint header: ") + e.what());
  }
  const UNetConfig config = unet_config_from_json(header.at("config"));
  const auto& vj = header.at("vocabulary");
  Vocabulary vocab(vj.at("words").get<std::vector<std::string>>(), vj.at("embedding_dim").get<int>());

  LoadedCheckpoint out;
  out.model = std::make_unique<PlaceModel>(config, std::move(vocab), 0);
  out.extra = header.value("extra", json::object());
  const auto& entries = out.model->parameters().entries();
  const auto& tensors = header.at("tensors");
  if (tensors.size() != entries.size()) {
    throw Error(ErrorCode::kMalformedHeader, "checkpoint tensor count does not match the model");
  }
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const auto& t = tensors[i];
    ag::Var var = entries[i].second;
    if (t.at("name") != entries[i].first || t.at("dtype") != "f32" || t.at("shape").get<Shape>() != var.shape()) {
      throw Error(ErrorCode::kMalformedHeader, "checkpoint tensor " + t.at("name").get<std::string>() +
                                                   " does not match " + entries[i].first);
    }
    Tensor& v = var.mutable_value();
    in.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(float)));
    if (!in) throw Error(ErrorCode::kMalformedHeader, "truncated checkpoint payload");
  }
  return out;
}

}  // namespace place
