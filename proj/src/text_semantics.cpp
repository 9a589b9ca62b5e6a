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

#include "place/text_semantics.hpp"

#include <sstream>

#include "place/error.hpp"
#include "place/ops.hpp"

namespace place {

Vocabulary::Vocabulary(const std::vector<std::string>& words, int embedding_dim)
    : embedding_dim_(embedding_dim) {
  if (embedding_dim <= 0) throw std::invalid_argument("embedding_dim must be positive");
  words_.emplace_back(kNullWord);
  index_.emplace(std::string(kNullWord), kNullToken);
  for (const auto& w : words) {
    if (w.empty() || w.find(' ') != std::string::npos) {
      throw std::invalid_argument("vocabulary word must be a single non-empty token: '" + w + "'");
    }
    if (!index_.emplace(w, size()).second) {
      throw std::invalid_argument("duplicate vocabulary word '" + w + "'");
    }
    words_.push_back(w);
  }
}

Vocabulary Vocabulary::from_classes(const std::vector<std::string>& class_names,
                                    const std::vector<std::string>& extra_words, int embedding_dim) {
  std::vector<std::string> words;
  std::unordered_map<std::string, bool> seen;
  auto add = [&](const std::string& w) {
    if (seen.emplace(w, true).second) words.push_back(w);
  };
  for (const auto& name : class_names) {
    for (const auto& w : split_words(name)) add(w);
  }
  for (const auto& extra : extra_words) {
    for (const auto& w : split_words(extra)) add(w);
  }
  return Vocabulary(words, embedding_dim);
}

std::optional<int> Vocabulary::find(std::string_view word) const {
  const auto it = index_.find(std::string(word));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

int Vocabulary::index_of(std::string_view word) const {
  const auto found = find(word);
  if (!found) throw Error(ErrorCode::kWordNotInVocabulary, "'" + std::string(word) + "'");
  return *found;
}

std::vector<std::string> split_words(std::string_view text) {
  std::vector<std::string> words;
  std::istringstream in{std::string(text)};
  std::string w;
  while (in >> w) words.push_back(w);
  return words;
}

ConditionedPrompt build_prompt_for_classes(std::span<const int> classes,
                                           const std::vector<std::string>& class_names,
                                           const Vocabulary& vocab,
                                           std::span<const std::string> extra_words) {
  ConditionedPrompt out;
  for (int c : classes) {
    for (const auto& w : split_words(class_names.at(c))) {
      out.prompt.tokens.push_back(vocab.index_of(w));
      out.token_classes.emplace_back(c);
    }
  }
  for (const auto& extra : extra_words) {
    for (const auto& w : split_words(extra)) {
      out.prompt.tokens.push_back(vocab.index_of(w));
      out.token_classes.emplace_back(std::nullopt);
    }
  }
  if (out.prompt.tokens.empty()) return unconditional_prompt();
  return out;
}

ConditionedPrompt build_prompt(const SemanticMap& map, const Vocabulary& vocab,
                               std::span<const std::string> extra_words) {
  const auto present = present_classes(map);
  return build_prompt_for_classes(present, map.classes(), vocab, extra_words);
}

ConditionedPrompt unconditional_prompt() {
  ConditionedPrompt out;
  out.prompt.tokens = {Vocabulary::kNullToken};
  out.token_classes = {std::nullopt};
  return out;
}

std::string prompt_text(const Prompt& prompt, const Vocabulary& vocab) {
  std::string text;
  for (std::size_t i = 0; i < prompt.tokens.size(); ++i) {
    if (i) text += ' ';
    text += vocab.word(prompt.tokens[i]);
  }
  return text;
}

ag::Var embed_prompt(const Prompt& prompt, const Vocabulary& vocab, const ag::Var& table) {
  if (table.value().rank() != 2 || table.value().dim(0) != vocab.size() ||
      table.value().dim(1) != vocab.embedding_dim()) {
    throw Error(ErrorCode::kShapeMismatch, "embedding table " + shape_string(table.shape()) +
                                               " does not match vocabulary");
  }
  return ag::embedding(table, prompt.tokens);
}

}  // namespace place
