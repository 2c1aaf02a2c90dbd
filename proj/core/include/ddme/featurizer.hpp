// Copyright 2026 The DDME Authors
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

#include <cstdint>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

#include "ddme/hash.hpp"

namespace ddme {

struct FeaturizerConfig {
  std::uint64_t bucket_count = 1ull << 21;
  int word_ngram_max = 2;
  int char_ngram_min = 3;
  int char_ngram_max = 6;
  int min_word_count = 1;
  bool lowercase = true;

  /// Throws Error on invariant violations (bucket_count >= 2,
  /// char_ngram_min <= char_ngram_max, word_ngram_max >= 1, ...).
  void validate() const;

  bool operator==(const FeaturizerConfig&) const = default;
};

/// Hashed feature multiset for one query. Indices lie in [0, bucket_count);
/// duplicates are meaningful (they weight the embedding average).
struct FeatureBag {
  std::vector<std::uint32_t> indices;

  std::size_t token_count() const { return indices.size(); }
};

/// Words (by FNV-1a of the lowercased token) that survive a min_word_count
/// cut. Words outside the set lose their word-level features; their
/// character n-grams are still emitted.
using WordFilter = std::unordered_set<std::uint64_t>;

/// Splits on ASCII whitespace, lowercasing if the config says so.
std::vector<std::string> split_tokens(std::string_view text,
                                      const FeaturizerConfig& cfg);

// Feature extraction: one index per word, per word n-gram (tokens joined by
// '_', n up to word_ngram_max) and per character n-gram of each word wrapped
// in '<' '>' boundary markers. index = fnv1a64(feature) % bucket_count.
FeatureBag featurize(std::string_view text, const FeaturizerConfig& cfg,
                     const WordFilter* keep_words = nullptr);

}  // namespace ddme
