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

#include <doctest.h>

#include <algorithm>
#include <set>

#include "ddme/featurizer.hpp"
#include "ddme/rng.hpp"

using namespace ddme;

TEST_CASE("fnv1a64 empty input is the offset basis") {
  CHECK(fnv1a64("") == 14695981039346656037ull);
}

TEST_CASE("fnv1a64 single byte follows the published definition") {
  // (basis XOR 'a') * prime mod 2^64, computed independently here
  const std::uint64_t expected =
      (14695981039346656037ull ^ 0x61ull) * 1099511628211ull;
  CHECK(fnv1a64("a") == expected);
  CHECK(fnv1a64("a") == 0xaf63dc4c8601ec8cull);
}

TEST_CASE("fnv1a64 is order sensitive") {
  std::uint64_t ab = fnv1a64("");
  for (char c : {'a', 'b'}) {
    ab ^= static_cast<std::uint64_t>(c);
    ab *= 1099511628211ull;
  }
  CHECK(fnv1a64("ab") == ab);
  CHECK(fnv1a64("ab") != fnv1a64("ba"));
}

TEST_CASE("featurize of empty text is empty") {
  FeaturizerConfig cfg;
  const FeatureBag bag = featurize("", cfg);
  CHECK(bag.token_count() == 0);
}

TEST_CASE("featurize is deterministic") {
  FeaturizerConfig cfg;
  const FeatureBag a = featurize("Red Dress size 42", cfg);
  const FeatureBag b = featurize("Red Dress size 42", cfg);
  CHECK(a.indices == b.indices);
}

TEST_CASE("featurize enumerates words, word bigrams and char n-grams") {
  FeaturizerConfig cfg;
  cfg.bucket_count = 1 << 20;
  cfg.word_ngram_max = 2;
  cfg.char_ngram_min = 3;
  cfg.char_ngram_max = 3;

  // independent enumeration of the expected feature strings
  const std::vector<std::string> features = {
      "red",  "dress",                                    // words
      "red_dress",                                        // bigram
      "<re",  "red", "ed>",                               // <red>
      "<dr",  "dre", "res", "ess", "ss>",                 // <dress>
  };
  std::multiset<std::uint32_t> expected;
  for (const auto& f : features) {
    expected.insert(static_cast<std::uint32_t>(fnv1a64(f) % cfg.bucket_count));
  }

  const FeatureBag bag = featurize("red dress", cfg);
  const std::multiset<std::uint32_t> got(bag.indices.begin(),
                                         bag.indices.end());
  CHECK(got == expected);
}

TEST_CASE("featurize lowercases when configured") {
  FeaturizerConfig cfg;
  CHECK(featurize("RED", cfg).indices == featurize("red", cfg).indices);
  cfg.lowercase = false;
  CHECK(featurize("RED", cfg).indices != featurize("red", cfg).indices);
}

TEST_CASE("indices stay below the bucket count") {
  FeaturizerConfig cfg;
  cfg.bucket_count = 64;
  Rng rng(11);
  for (int trial = 0; trial < 200; ++trial) {
    std::string text;
    const int words = static_cast<int>(rng.below(6));
    for (int w = 0; w < words; ++w) {
      if (w > 0) text.push_back(' ');
      for (int c = 0; c < static_cast<int>(rng.below(9)) + 1; ++c) {
        text.push_back(static_cast<char>('a' + rng.below(26)));
      }
    }
    for (std::uint32_t idx : featurize(text, cfg).indices) {
      CHECK(idx < cfg.bucket_count);
    }
  }
}

TEST_CASE("appending a token never shrinks the bag") {
  FeaturizerConfig cfg;
  std::string text;
  std::size_t last = 0;
  for (const char* word : {"alpha", "beta", "gamma", "delta"}) {
    if (!text.empty()) text.push_back(' ');
    text += word;
    const std::size_t count = featurize(text, cfg).token_count();
    CHECK(count >= last);
    last = count;
  }
}

TEST_CASE("word filter removes word-level features only") {
  FeaturizerConfig cfg;
  cfg.word_ngram_max = 2;
  cfg.char_ngram_min = 3;
  cfg.char_ngram_max = 3;
  WordFilter keep = {fnv1a64("red")};  // "dress" is filtered

  const FeatureBag bag = featurize("red dress", cfg, &keep);
  const auto idx_of = [&](std::string_view f) {
    return static_cast<std::uint32_t>(fnv1a64(f) % cfg.bucket_count);
  };
  const auto has = [&](std::string_view f) {
    return std::find(bag.indices.begin(), bag.indices.end(), idx_of(f)) !=
           bag.indices.end();
  };
  CHECK(has("red"));
  CHECK_FALSE(has("dress"));
  CHECK_FALSE(has("red_dress"));
  CHECK(has("<dr"));  // char n-grams of the filtered word survive
  CHECK(has("ess"));
}

TEST_CASE("config validation rejects bad ranges") {
  FeaturizerConfig cfg;
  cfg.bucket_count = 1;
  CHECK_THROWS(cfg.validate());
  cfg = {};
  cfg.char_ngram_min = 5;
  cfg.char_ngram_max = 4;
  CHECK_THROWS(cfg.validate());
  cfg = {};
  cfg.word_ngram_max = 0;
  CHECK_THROWS(cfg.validate());
}
