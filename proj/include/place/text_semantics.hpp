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

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "place/semantic_map.hpp"
#include "place/tensor.hpp"

namespace place {

// Word list with stable indices. Index 0 is the null (unconditional) token.
class Vocabulary {
 public:
  static constexpr int kNullToken = 0;
  static constexpr std::string_view kNullWord = "<null>";
  static constexpr int kDefaultEmbeddingDim = 64;

  // `words` must not contain the null word; it is prepended.
  explicit Vocabulary(const std::vector<std::string>& words,
                      int embedding_dim = kDefaultEmbeddingDim);

  // Every space-separated word of every class name, then extra words, in
  // first-seen order.
  static Vocabulary from_classes(const std::vector<std::string>& class_names,
                                 const std::vector<std::string>& extra_words = {},
                                 int embedding_dim = kDefaultEmbeddingDim);

  int size() const { return static_cast<int>(words_.size()); }
  int embedding_dim() const { return embedding_dim_; }
  const std::string& word(int index) const { return words_.at(index); }
  // Includes the null word at index 0.
  const std::vector<std::string>& words() const { return words_; }

  std::optional<int> find(std::string_view word) const;
  int index_of(std::string_view word) const;

 private:
  std::vector<std::string> words_;
  std::unordered_map<std::string, int> index_;
  int embedding_dim_;
};

struct Prompt {
  std::vector<int> tokens;
  int length() const { return static_cast<int>(tokens.size()); }
  bool operator==(const Prompt&) const = default;
};

// Semantic channel of each text token; nullopt for tokens without a region.
using TokenClassMap = std::vector<std::optional<int>>;

struct ConditionedPrompt {
  Prompt prompt;
  TokenClassMap token_classes;
  bool operator==(const ConditionedPrompt&) const = default;
};

std::vector<std::string> split_words(std::string_view text);

// Names of the present classes in ascending index order, split into words;
// each word maps to its class. Extra words are appended unmapped.
ConditionedPrompt build_prompt(const SemanticMap& map, const Vocabulary& vocab,
                               std::span<const std::string> extra_words = {});

ConditionedPrompt build_prompt_for_classes(std::span<const int> classes,
                                           const std::vector<std::string>& class_names,
                                           const Vocabulary& vocab,
                                           std::span<const std::string> extra_words = {});

// A single null token with no class.
ConditionedPrompt unconditional_prompt();

std::string prompt_text(const Prompt& prompt, const Vocabulary& vocab);

// Rows of the learned embedding table [vocab.size(), embedding_dim] for
// each token; differentiable with respect to the table.
ag::Var embed_prompt(const Prompt& prompt, const Vocabulary& vocab, const ag::Var& table);

}  // namespace place
