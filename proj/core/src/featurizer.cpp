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

#include "ddme/featurizer.hpp"

#include <cctype>

#include "ddme/error.hpp"

namespace ddme {

void FeaturizerConfig::validate() const {
  if (bucket_count < 2) {
    throw Error("featurizer: bucket_count must be >= 2");
  }
  if (word_ngram_max < 1) {
    throw Error("featurizer: word_ngram_max must be >= 1");
  }
  if (char_ngram_min < 1 || char_ngram_min > char_ngram_max) {
    throw Error("featurizer: need 1 <= char_ngram_min <= char_ngram_max");
  }
  if (min_word_count < 1) {
    throw Error("featurizer: min_word_count must be >= 1");
  }
}

std::vector<std::string> split_tokens(std::string_view text,
                                      const FeaturizerConfig& cfg) {
  std::vector<std::string> tokens;
  std::string current;
  auto flush = [&] {
    if (!current.empty()) {
      tokens.push_back(std::move(current));
      current.clear();
    }
  };
  for (char c : text) {
    if (c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\v' ||
        c == '\f') {
      flush();
    } else {
      current.push_back(
          cfg.lowercase
              ? static_cast<char>(std::tolower(static_cast<unsigned char>(c)))
              : c);
    }
  }
  flush();
  return tokens;
}

namespace {

inline std::uint32_t bucket(std::string_view feature, std::uint64_t buckets) {
  return static_cast<std::uint32_t>(fnv1a64(feature) % buckets);
}

}  // namespace

FeatureBag featurize(std::string_view text, const FeaturizerConfig& cfg,
                     const WordFilter* keep_words) {
  const std::vector<std::string> tokens = split_tokens(text, cfg);

  // Words cut by min_word_count lose their word-level features but keep
  // their character n-grams, so rare surface forms contribute subwords only.
  std::vector<bool> word_ok(tokens.size(), true);
  if (keep_words != nullptr) {
    for (std::size_t i = 0; i < tokens.size(); ++i) {
      word_ok[i] = keep_words->contains(fnv1a64(tokens[i]));
    }
  }

  FeatureBag bag;
  const std::uint64_t buckets = cfg.bucket_count;

  // word unigrams
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (word_ok[i]) bag.indices.push_back(bucket(tokens[i], buckets));
  }

  // word n-grams, tokens joined by '_'
  std::string joined;
  for (int n = 2; n <= cfg.word_ngram_max; ++n) {
    if (static_cast<int>(tokens.size()) < n) break;
    for (std::size_t i = 0; i + n <= tokens.size(); ++i) {
      bool ok = true;
      for (int j = 0; j < n; ++j) ok = ok && word_ok[i + j];
      if (!ok) continue;
      joined = tokens[i];
      for (int j = 1; j < n; ++j) {
        joined.push_back('_');
        joined += tokens[i + j];
      }
      bag.indices.push_back(bucket(joined, buckets));
    }
  }

  // character n-grams over '<token>' (byte windows)
  std::string padded;
  for (const auto& t : tokens) {
    padded.clear();
    padded.push_back('<');
    padded += t;
    padded.push_back('>');
    for (int n = cfg.char_ngram_min; n <= cfg.char_ngram_max; ++n) {
      if (static_cast<int>(padded.size()) < n) break;
      for (std::size_t i = 0; i + n <= padded.size(); ++i) {
        bag.indices.push_back(
            bucket(std::string_view(padded).substr(i, n), buckets));
      }
    }
  }

  return bag;
}

}  // namespace ddme
