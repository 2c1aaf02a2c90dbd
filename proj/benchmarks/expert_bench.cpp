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

#include <benchmark/benchmark.h>

#include "ddme/corpus.hpp"
#include "ddme/experts.hpp"

namespace {

struct Fixture {
  ddme::ClickDataset ds;
  ddme::ExpertModel model;
  std::vector<std::string> queries;

  Fixture() {
    ddme::SyntheticSpec spec;
    spec.n_queries = 2000;
    spec.k_categories = 100;
    spec.vocab_size = 600;
    spec.seed = 4;
    ds = ddme::generate_synthetic(spec).observed;
    ddme::FeaturizerConfig feat;
    feat.bucket_count = 1ull << 17;
    feat.word_ngram_max = 1;
    feat.char_ngram_min = 3;
    feat.char_ngram_max = 4;
    ddme::ExpertTrainConfig cfg;
    cfg.epochs = 2;
    cfg.seed = 4;
    model = ddme::train_expert(ds, ddme::ExpertMode::uniform, cfg, feat);
    for (const auto& r : ds.records) queries.push_back(r.text);
  }
};

const Fixture& fixture() {
  static Fixture f;
  return f;
}

void BM_ExpertScoreAll(benchmark::State& state) {
  const Fixture& f = fixture();
  std::size_t i = 0;
  for (auto _ : state) {
    const auto scores = ddme::expert_score_all(f.model, f.queries[i]);
    benchmark::DoNotOptimize(scores.data());
    i = (i + 1) % f.queries.size();
  }
  state.SetItemsProcessed(state.iterations());
}

void BM_ExpertPredictSet(benchmark::State& state) {
  const Fixture& f = fixture();
  std::size_t i = 0;
  for (auto _ : state) {
    const auto labels = ddme::expert_predict(f.model, f.queries[i], 0.25, 5);
    benchmark::DoNotOptimize(labels.data());
    i = (i + 1) % f.queries.size();
  }
  state.SetItemsProcessed(state.iterations());
}

}  // namespace

BENCHMARK(BM_ExpertScoreAll);
BENCHMARK(BM_ExpertPredictSet);

BENCHMARK_MAIN();
