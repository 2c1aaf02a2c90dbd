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

#include <cmath>
#include <filesystem>
#include <numeric>

#include "ddme/corpus.hpp"
#include "ddme/error.hpp"
#include "ddme/experts.hpp"
#include "ddme/io.hpp"
#include "ddme/rng.hpp"

using namespace ddme;
namespace fs = std::filesystem;

namespace {

QueryRecord record_with_pv(std::vector<std::int32_t> labels,
                           std::vector<double> pv) {
  return {0, "q", std::move(labels), std::move(pv)};
}

FeaturizerConfig tiny_featurizer() {
  FeaturizerConfig cfg;
  cfg.bucket_count = 2048;
  cfg.word_ngram_max = 1;
  cfg.char_ngram_min = 3;
  cfg.char_ngram_max = 4;
  return cfg;
}

// Plain scalar re-derivation of the three losses, independent of the
// library's vectorized path.
double scalar_expert_loss(const QueryRecord& rec, std::int32_t k,
                          const ExpertLossConfig& cfg,
                          const std::vector<double>& yhat) {
  double loss = 0;
  const double mass = rec.total_pv();
  for (std::int32_t j = 0; j < k; ++j) {
    const double y = rec.has_label(j) ? 1.0 : 0.0;
    const double w = mass > 0 ? rec.pv_of(j) / mass : 0.0;
    double c = 1.0;
    switch (cfg.mode) {
      case ExpertMode::uniform: c = 1.0; break;
      case ExpertMode::backward: c = (1.0 - w) / (k - 1); break;
      case ExpertMode::forward:
        c = (cfg.scheme == NegativeWeightScheme::literal || y == 1.0)
                ? w
                : cfg.alpha / k;
        break;
    }
    const double p = std::clamp(yhat[static_cast<std::size_t>(j)], 1e-7,
                                1.0 - 1e-7);
    loss -= c * (y * std::log(p) + (1 - y) * std::log(1 - p));
  }
  return loss;
}

}  // namespace

TEST_CASE("pv weights follow the forward and reverse definitions") {
  const QueryRecord rec = record_with_pv({0, 1, 2}, {3, 1, 0});
  const PVWeights w = compute_pv_weights(rec, 3);
  CHECK(w.forward[0] == doctest::Approx(0.75));
  CHECK(w.forward[1] == doctest::Approx(0.25));
  CHECK(w.forward[2] == doctest::Approx(0.0));
  CHECK(w.backward[0] == doctest::Approx(0.125));
  CHECK(w.backward[1] == doctest::Approx(0.375));
  CHECK(w.backward[2] == doctest::Approx(0.5));
}

TEST_CASE("all-zero pv rows degrade to the documented uniform case") {
  const QueryRecord rec = record_with_pv({1}, {0});
  const PVWeights w = compute_pv_weights(rec, 4);
  for (double v : w.forward) CHECK(v == 0.0);
  for (double v : w.backward) CHECK(v == doctest::Approx(1.0 / 3.0));
}

TEST_CASE("weight sums obey the algebra on random rows") {
  Rng rng(123);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::int32_t k = 2 + static_cast<std::int32_t>(rng.below(19));
    const int n_labels = 1 + static_cast<int>(rng.below(
                                 static_cast<std::uint64_t>(k)));
    std::vector<std::int32_t> labels(static_cast<std::size_t>(k));
    std::iota(labels.begin(), labels.end(), 0);
    rng.shuffle(labels);
    labels.resize(static_cast<std::size_t>(n_labels));
    std::sort(labels.begin(), labels.end());
    std::vector<double> pv;
    pv.reserve(labels.size());
    for (int i = 0; i < n_labels; ++i) pv.push_back(rng.range(0.0, 50.0));
    pv[rng.below(pv.size())] += 0.5;  // ensure positive mass
    const PVWeights w =
        compute_pv_weights({0, "q", std::move(labels), std::move(pv)}, k);

    const double fw = std::accumulate(w.forward.begin(), w.forward.end(), 0.0);
    const double bw =
        std::accumulate(w.backward.begin(), w.backward.end(), 0.0);
    CHECK(std::abs(fw - 1.0) <= 1e-12);
    CHECK(std::abs(bw - 1.0) <= 1e-12);
    for (double v : w.forward) CHECK(v >= 0.0);
    for (double v : w.backward) CHECK(v >= 0.0);
  }
}

TEST_CASE("compute_pv_weights requires k >= 2") {
  CHECK_THROWS(compute_pv_weights(record_with_pv({0}, {1}), 1));
}

TEST_CASE("uniform loss at 0.5 predictions is 2 ln 2 per record") {
  const QueryRecord rec = record_with_pv({0}, {7});
  const std::vector<double> weights =
      expert_term_weights(rec, 2, {ExpertMode::uniform});
  // y=(1,0), yhat=(0.5,0.5); evaluated through the scalar oracle
  CHECK(scalar_expert_loss(rec, 2, {ExpertMode::uniform}, {0.5, 0.5}) ==
        doctest::Approx(2 * std::log(2.0)));
  CHECK(weights == std::vector<double>{1.0, 1.0});
}

TEST_CASE("literal forward weighting zeroes all-zero-pv records") {
  const QueryRecord rec = record_with_pv({0, 2}, {0, 0});
  ExpertLossConfig cfg{ExpertMode::forward, NegativeWeightScheme::literal};
  const std::vector<double> weights = expert_term_weights(rec, 4, cfg);
  for (double w : weights) CHECK(w == 0.0);
  CHECK(scalar_expert_loss(rec, 4, cfg, {0.9, 0.2, 0.4, 0.6}) == 0.0);
}

TEST_CASE("smoothed forward weighting keeps negatives trainable") {
  const QueryRecord rec = record_with_pv({1}, {8});
  ExpertLossConfig cfg{ExpertMode::forward, NegativeWeightScheme::smoothed, 2.0};
  const std::vector<double> weights = expert_term_weights(rec, 4, cfg);
  CHECK(weights[1] == doctest::Approx(1.0));   // w_ij of the only positive
  CHECK(weights[0] == doctest::Approx(0.5));   // alpha / k
  CHECK(weights[2] == doctest::Approx(0.5));
}

TEST_CASE("backward loss matches the hand-computed value") {
  // k=2, pv row (10,0), y=(1,0), yhat=(0.9,0.1): r=(0,1) so the loss is
  // -ln(1-0.1) = 0.10536
  const QueryRecord rec = record_with_pv({0}, {10});
  const double loss =
      scalar_expert_loss(rec, 2, {ExpertMode::backward}, {0.9, 0.1});
  CHECK(loss == doctest::Approx(0.1053605).epsilon(1e-5));

  // and the library weights agree on the same record
  const std::vector<double> weights =
      expert_term_weights(rec, 2, {ExpertMode::backward});
  CHECK(weights[0] == doctest::Approx(0.0));
  CHECK(weights[1] == doctest::Approx(1.0));
}

TEST_CASE("the three loss modes disagree on a non-uniform record") {
  const QueryRecord rec = record_with_pv({0, 1}, {9, 1});
  const std::vector<double> yhat = {0.7, 0.3, 0.2};
  const double f = scalar_expert_loss(
      rec, 3, {ExpertMode::forward, NegativeWeightScheme::smoothed}, yhat);
  const double u = scalar_expert_loss(rec, 3, {ExpertMode::uniform}, yhat);
  const double b = scalar_expert_loss(rec, 3, {ExpertMode::backward}, yhat);
  CHECK(f != u);
  CHECK(u != b);
  CHECK(f != b);
}

TEST_CASE("library record loss equals the scalar oracle") {
  // drive the network forward, read its sigmoid outputs, then compare
  Rng rng(55);
  ExpertParamsT<double> params;
  const std::size_t buckets = 128, d = 6, h = 7, k = 4;
  params.embedding = Matrix<double>(buckets, d);
  params.w1 = Matrix<double>(h, d);
  params.b1.assign(h, 0.1);
  params.w2 = Matrix<double>(k, h);
  params.b2.assign(k, -0.1);
  for (double& v : params.embedding.data()) v = rng.range(-0.4, 0.4);
  for (double& v : params.w1.data()) v = rng.range(-0.4, 0.4);
  for (double& v : params.w2.data()) v = rng.range(-0.4, 0.4);

  FeatureBag bag;
  for (int i = 0; i < 5; ++i) {
    bag.indices.push_back(static_cast<std::uint32_t>(rng.below(buckets)));
  }
  const QueryRecord rec = record_with_pv({0, 2}, {4, 1});

  for (ExpertMode mode :
       {ExpertMode::forward, ExpertMode::uniform, ExpertMode::backward}) {
    const ExpertLossConfig cfg{mode, NegativeWeightScheme::smoothed, 1.0};
    const std::vector<double> weights =
        expert_term_weights(rec, static_cast<std::int32_t>(k), cfg);
    const std::vector<double> targets =
        dense_targets(rec, static_cast<std::int32_t>(k));
    const double lib = expert_record_loss(params, bag, weights, targets);

    ExpertGradWork work;
    expert_record_gradients(params, bag, weights, targets, work);
    std::vector<double> yhat(k);
    // recover sigmoid outputs from the gradient identity g = c (p - y)
    for (std::size_t j = 0; j < k; ++j) {
      yhat[j] = weights[j] != 0
                    ? work.score_grad[j] / weights[j] + targets[j]
                    : 0.5;
    }
    const double oracle =
        scalar_expert_loss(rec, static_cast<std::int32_t>(k), cfg, yhat);
    CHECK(lib == doctest::Approx(oracle).epsilon(1e-9));
  }
}

TEST_CASE("expert gradients match central finite differences in all modes") {
  Rng rng(321);
  const std::size_t buckets = 64, d = 6, h = 5, k = 4;

  for (ExpertMode mode :
       {ExpertMode::forward, ExpertMode::uniform, ExpertMode::backward}) {
    for (int probe = 0; probe < 7; ++probe) {
      ExpertParamsT<double> params;
      params.embedding = Matrix<double>(buckets, d);
      params.w1 = Matrix<double>(h, d);
      params.b1.assign(h, 0.0);
      params.w2 = Matrix<double>(k, h);
      params.b2.assign(k, 0.0);
      for (double& v : params.embedding.data()) v = rng.range(-0.5, 0.5);
      for (double& v : params.w1.data()) v = rng.range(-0.5, 0.5);
      for (double& v : params.w2.data()) v = rng.range(-0.5, 0.5);
      for (double& v : params.b1) v = rng.range(-0.2, 0.2);
      for (double& v : params.b2) v = rng.range(-0.2, 0.2);

      FeatureBag bag;
      for (int i = 0; i < 4 + static_cast<int>(rng.below(4)); ++i) {
        bag.indices.push_back(static_cast<std::uint32_t>(rng.below(buckets)));
      }
      const QueryRecord rec = record_with_pv({0, 2}, {rng.range(1, 9), 1});
      const ExpertLossConfig cfg{mode, NegativeWeightScheme::smoothed, 1.0};
      const std::vector<double> weights =
          expert_term_weights(rec, static_cast<std::int32_t>(k), cfg);
      const std::vector<double> targets =
          dense_targets(rec, static_cast<std::int32_t>(k));

      ExpertGradWork work;
      expert_record_gradients(params, bag, weights, targets, work);

      const double step = 1e-3;
      auto fd_check = [&](double analytic, double& param) {
        const double saved = param;
        param = saved + step;
        const double up = expert_record_loss(params, bag, weights, targets);
        param = saved - step;
        const double down = expert_record_loss(params, bag, weights, targets);
        param = saved;
        const double numeric = (up - down) / (2 * step);
        CHECK(std::abs(analytic - numeric) <=
              1e-4 * std::max({1.0, std::abs(analytic), std::abs(numeric)}));
      };

      const std::size_t j = rng.below(k);
      const std::size_t hh = rng.below(h);
      const std::size_t dd = rng.below(d);
      fd_check(work.score_grad[j] * work.hidden_act[hh],
               params.w2.at(j, hh));
      fd_check(work.score_grad[j], params.b2[j]);
      fd_check(work.preact_grad[hh] * work.input[dd], params.w1.at(hh, dd));
      fd_check(work.preact_grad[hh], params.b1[hh]);
      const std::uint32_t row = bag.indices[rng.below(bag.indices.size())];
      double count = 0;
      for (std::uint32_t idx : bag.indices) count += idx == row ? 1 : 0;
      fd_check(work.input_grad[dd] * count /
                   static_cast<double>(bag.indices.size()),
               params.embedding.at(row, dd));
    }
  }
}

TEST_CASE("three experts land on three distinct parameter sets") {
  SyntheticSpec spec;
  spec.n_queries = 300;
  spec.k_categories = 10;
  spec.vocab_size = 100;
  spec.seed = 17;
  const ClickDataset ds = generate_synthetic(spec).observed;
  ExpertTrainConfig cfg;
  cfg.epochs = 3;
  cfg.embed_dim = 16;
  cfg.hidden_dim = 12;
  cfg.seed = 17;

  const ExpertModel e1 =
      train_expert(ds, ExpertMode::forward, cfg, tiny_featurizer());
  const ExpertModel e2 =
      train_expert(ds, ExpertMode::uniform, cfg, tiny_featurizer());
  const ExpertModel e3 =
      train_expert(ds, ExpertMode::backward, cfg, tiny_featurizer());

  auto diff = [](const ExpertModel& a, const ExpertModel& b) {
    double sum = 0;
    for (std::size_t i = 0; i < a.params.w2.data().size(); ++i) {
      const double d = a.params.w2.data()[i] - b.params.w2.data()[i];
      sum += d * d;
    }
    return std::sqrt(sum);
  };
  CHECK(diff(e1, e2) > 0.0);
  CHECK(diff(e2, e3) > 0.0);
  CHECK(diff(e1, e3) > 0.0);
}

TEST_CASE("expert training reduces the loss") {
  SyntheticSpec spec;
  spec.n_queries = 400;
  spec.k_categories = 10;
  spec.vocab_size = 120;
  spec.seed = 23;
  const ClickDataset ds = generate_synthetic(spec).observed;
  ExpertTrainConfig cfg;
  cfg.epochs = 6;
  cfg.embed_dim = 16;
  cfg.hidden_dim = 12;
  cfg.learning_rate = 1.0;
  cfg.seed = 23;
  TrainLog log;
  train_expert(ds, ExpertMode::uniform, cfg, tiny_featurizer(), &log);
  REQUIRE(log.epoch_loss.size() == 6);
  CHECK(std::isfinite(log.epoch_loss.back()));
  CHECK(log.epoch_loss.back() < log.epoch_loss.front());
}

TEST_CASE("uniform expert memorizes a singleton") {
  ClickDataset ds;
  ds.label_space = LabelSpace({"fruit", "tech"});
  ds.records.push_back({0, "apple pie", {0}, {5}});
  ExpertTrainConfig cfg;
  cfg.epochs = 60;
  cfg.embed_dim = 12;
  cfg.hidden_dim = 8;
  cfg.batch_size = 1;
  cfg.seed = 6;
  const ExpertModel model =
      train_expert(ds, ExpertMode::uniform, cfg, tiny_featurizer());
  const auto top = expert_predict_topk(model, "apple pie", 1, 0.0);
  REQUIRE(top.size() == 1);
  CHECK(top[0].category == 0);
}

TEST_CASE("zero-initialized expert scores 0.5 everywhere") {
  ExpertModel model;
  model.mode = ExpertMode::uniform;
  model.featurizer = tiny_featurizer();
  model.label_space = LabelSpace({"a", "b", "c"});
  model.params.embedding = Matrix<float>(model.featurizer.bucket_count, 4);
  model.params.w1 = Matrix<float>(6, 4);
  model.params.b1.assign(6, 0.0f);
  model.params.w2 = Matrix<float>(3, 6);
  model.params.b2.assign(3, 0.0f);

  SUBCASE("tau just under 1 yields the empty set") {
    CHECK(expert_predict(model, "whatever", 0.999, 5).empty());
  }
  SUBCASE("tau below 0.5 yields everything, truncated to m_cap") {
    const auto all = expert_predict(model, "whatever", 0.4, 5);
    CHECK(all == std::vector<std::int32_t>{0, 1, 2});
    const auto capped = expert_predict(model, "whatever", 0.4, 2);
    CHECK(capped.size() == 2);
  }
  SUBCASE("tau bounds are enforced") {
    CHECK_THROWS(expert_predict(model, "q", 0.0, 5));
    CHECK_THROWS(expert_predict(model, "q", 1.0, 5));
    CHECK_THROWS(expert_predict(model, "q", 0.5, 0));
  }
}

TEST_CASE("expert model file round-trips with its mode byte") {
  SyntheticSpec spec;
  spec.n_queries = 150;
  spec.k_categories = 6;
  spec.vocab_size = 60;
  spec.seed = 40;
  const ClickDataset ds = generate_synthetic(spec).observed;
  ExpertTrainConfig cfg;
  cfg.epochs = 2;
  cfg.embed_dim = 8;
  cfg.hidden_dim = 6;
  cfg.seed = 40;
  const ExpertModel model =
      train_expert(ds, ExpertMode::backward, cfg, tiny_featurizer());

  const fs::path dir = fs::temp_directory_path() / "ddme_expert_test";
  fs::create_directories(dir);
  const fs::path p = dir / "expert.bin";
  save_expert(model, p);
  const ExpertModel back = load_expert(p);
  CHECK(back.mode == ExpertMode::backward);
  CHECK(back.params.embedding == model.params.embedding);
  CHECK(back.params.w1 == model.params.w1);
  CHECK(back.params.b1 == model.params.b1);
  CHECK(back.params.w2 == model.params.w2);
  CHECK(back.params.b2 == model.params.b2);
  CHECK(back.label_space == model.label_space);

  std::string bytes = read_file(p);
  bytes[3] = '?';
  write_file(p, bytes);
  CHECK_THROWS_WITH_AS(load_expert(p), doctest::Contains("magic"), ParseError);
}
