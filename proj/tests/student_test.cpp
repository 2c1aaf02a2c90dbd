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

#include "ddme/corpus.hpp"
#include "ddme/error.hpp"
#include "ddme/io.hpp"
#include "ddme/rng.hpp"
#include "ddme/student.hpp"

using namespace ddme;
namespace fs = std::filesystem;

namespace {

fs::path temp_file(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "ddme_student_test";
  fs::create_directories(dir);
  return dir / name;
}

FeaturizerConfig small_featurizer() {
  FeaturizerConfig cfg;
  cfg.bucket_count = 4096;
  return cfg;
}

ClickDataset singleton_dataset() {
  ClickDataset ds;
  ds.label_space = LabelSpace({"fruit", "tech", "toys"});
  ds.records.push_back({0, "apple", {0}, {10}});
  return ds;
}

}  // namespace

TEST_CASE("a singleton dataset is memorized") {
  SUBCASE("fifty default epochs rank the label first") {
    StudentTrainConfig cfg;
    cfg.epochs = 50;
    cfg.seed = 1;
    const StudentModel model =
        train_student(singleton_dataset(), cfg, small_featurizer());
    const auto preds = predict_topk(model, "apple", 3, 0.0);
    REQUIRE(!preds.empty());
    CHECK(preds[0].category == 0);
  }
  SUBCASE("a fully trained singleton saturates its score") {
    StudentTrainConfig cfg;
    cfg.epochs = 300;
    cfg.learning_rate = 2.0;
    cfg.seed = 1;
    const StudentModel model =
        train_student(singleton_dataset(), cfg, small_featurizer());
    const auto preds = predict_topk(model, "apple", 1, 0.0);
    REQUIRE(preds.size() == 1);
    CHECK(preds[0].category == 0);
    CHECK(preds[0].score > 0.9);
  }
}

TEST_CASE("uniform and log_pv weighting coincide when every pv is zero") {
  ClickDataset ds;
  ds.label_space = LabelSpace({"a", "b"});
  ds.records.push_back({0, "left one", {0}, {0}});
  ds.records.push_back({1, "right two", {1}, {0}});

  StudentTrainConfig cfg;
  cfg.epochs = 10;
  cfg.seed = 42;
  cfg.weight_mode = WeightMode::log_pv;
  const StudentModel a = train_student(ds, cfg, small_featurizer());
  cfg.weight_mode = WeightMode::uniform;
  const StudentModel b = train_student(ds, cfg, small_featurizer());
  CHECK(a.params.embedding == b.params.embedding);
  CHECK(a.params.output == b.params.output);
}

TEST_CASE("a separable two-query toy set trains to near-zero loss") {
  ClickDataset ds;
  ds.label_space = LabelSpace({"a", "b"});
  ds.records.push_back({0, "alpha", {0}, {5}});
  ds.records.push_back({1, "beta", {1}, {5}});

  StudentTrainConfig cfg;
  cfg.epochs = 100;
  cfg.learning_rate = 2.0;
  cfg.seed = 3;
  TrainLog log;
  train_student(ds, cfg, small_featurizer(), &log);
  REQUIRE(log.epoch_loss.size() == 100);
  CHECK(log.epoch_loss.back() < 0.05);
  CHECK(std::isfinite(log.epoch_loss.back()));
}

TEST_CASE("training loss is non-increasing over the first epochs") {
  SyntheticSpec spec;
  spec.n_queries = 600;
  spec.k_categories = 12;
  spec.vocab_size = 150;
  spec.seed = 8;
  const ClickDataset ds = generate_synthetic(spec).observed;
  StudentTrainConfig cfg;
  cfg.epochs = 4;
  cfg.learning_rate = 0.5;
  cfg.seed = 8;
  TrainLog log;
  train_student(ds, cfg, small_featurizer(), &log);
  REQUIRE(log.epoch_loss.size() >= 3);
  CHECK(log.epoch_loss[1] <= log.epoch_loss[0]);
  CHECK(log.epoch_loss[2] <= log.epoch_loss[1]);
}

TEST_CASE("predict_topk respects threshold and ties") {
  const StudentModel model = [] {
    StudentTrainConfig cfg;
    cfg.epochs = 5;
    cfg.seed = 5;
    return train_student(singleton_dataset(), cfg, small_featurizer());
  }();

  SUBCASE("threshold 1.0 returns nothing unless a score is exactly 1") {
    CHECK(predict_topk(model, "apple", 5, 1.0).empty());
  }
  SUBCASE("topk larger than k returns at most k results") {
    CHECK(predict_topk(model, "apple", 5, 0.0).size() <= 3);
  }
  SUBCASE("empty text scores the zero vector") {
    const auto preds = predict_topk(model, "", 3, 0.0);
    CHECK(preds.size() == 3);
    // zero hidden vector gives sigmoid(0) = 0.5 everywhere; ties break by
    // ascending category index
    CHECK(preds[0].category == 0);
    CHECK(preds[1].category == 1);
    CHECK(preds[0].score == doctest::Approx(0.5));
  }
  SUBCASE("raising the threshold never adds a category") {
    const auto low = predict_topk(model, "apple", 3, 0.1);
    const auto high = predict_topk(model, "apple", 3, 0.6);
    for (const auto& p : high) {
      const bool present =
          std::any_of(low.begin(), low.end(), [&](const Prediction& q) {
            return q.category == p.category;
          });
      CHECK(present);
    }
    CHECK(high.size() <= low.size());
  }
}

TEST_CASE("model file round-trips bit-exactly") {
  StudentTrainConfig cfg;
  cfg.epochs = 8;
  cfg.seed = 77;
  SyntheticSpec spec;
  spec.n_queries = 200;
  spec.k_categories = 6;
  spec.vocab_size = 80;
  spec.seed = 77;
  const ClickDataset ds = generate_synthetic(spec).observed;
  const StudentModel model = train_student(ds, cfg, small_featurizer());

  const fs::path p = temp_file("student.bin");
  save_model(model, p);
  const StudentModel back = load_model(p);

  CHECK(back.params.embedding == model.params.embedding);
  CHECK(back.params.output == model.params.output);
  CHECK(back.label_space == model.label_space);
  CHECK(back.featurizer == model.featurizer);

  Rng rng(4);
  for (int i = 0; i < 100; ++i) {
    std::string text;
    for (int w = 0; w < 3; ++w) {
      if (w > 0) text.push_back(' ');
      for (int c = 0; c < 5; ++c) {
        text.push_back(static_cast<char>('a' + rng.below(26)));
      }
    }
    CHECK(predict_topk(model, text, 5, 0.0) == predict_topk(back, text, 5, 0.0));
  }

  // save(load(save(m))) is byte-identical
  const fs::path p2 = temp_file("student2.bin");
  save_model(back, p2);
  CHECK(read_file(p) == read_file(p2));
}

TEST_CASE("model loader rejects damaged files") {
  StudentTrainConfig cfg;
  cfg.epochs = 2;
  cfg.seed = 1;
  const StudentModel model =
      train_student(singleton_dataset(), cfg, small_featurizer());
  const fs::path p = temp_file("damaged.bin");
  save_model(model, p);

  SUBCASE("corrupted magic") {
    std::string bytes = read_file(p);
    bytes[0] = 'X';
    write_file(p, bytes);
    CHECK_THROWS_WITH_AS(load_model(p), doctest::Contains("magic"), ParseError);
  }
  SUBCASE("unsupported version") {
    std::string bytes = read_file(p);
    bytes[8] = 99;
    write_file(p, bytes);
    CHECK_THROWS_WITH_AS(load_model(p), doctest::Contains("version"),
                         ParseError);
  }
  SUBCASE("truncated payload") {
    std::string bytes = read_file(p);
    bytes.resize(bytes.size() / 2);
    write_file(p, bytes);
    CHECK_THROWS(load_model(p));
  }
  SUBCASE("absurd bucket count fails cleanly before allocation") {
    // header-only fixture claiming a 2^55-row embedding table
    BinaryWriter w;
    w.bytes("DDMESTU1");
    w.u32(1);                 // version
    w.u32(64);                // dim
    w.u64(1ull << 55);        // bucket_count
    w.u32(3);                 // k
    w.u32(2), w.u32(3), w.u32(6), w.u32(1);
    w.u8(1);
    w.str("a"), w.str("b"), w.str("c");
    const fs::path fixture = temp_file("huge.bin");
    w.to_file(fixture);
    CHECK_THROWS_WITH_AS(load_model(fixture), doctest::Contains("too small"),
                         Error);
  }
}

TEST_CASE("deterministic training is bit-reproducible") {
  SyntheticSpec spec;
  spec.n_queries = 300;
  spec.k_categories = 8;
  spec.vocab_size = 90;
  spec.seed = 12;
  const ClickDataset ds = generate_synthetic(spec).observed;
  StudentTrainConfig cfg;
  cfg.epochs = 3;
  cfg.seed = 9;
  cfg.deterministic = true;
  const StudentModel a = train_student(ds, cfg, small_featurizer());
  const StudentModel b = train_student(ds, cfg, small_featurizer());
  CHECK(a.params.embedding == b.params.embedding);
  CHECK(a.params.output == b.params.output);
}

TEST_CASE("sampled negative mode still memorizes") {
  StudentTrainConfig cfg;
  cfg.epochs = 60;
  cfg.seed = 2;
  cfg.negative_mode = NegativeMode::sampled;
  cfg.negative_samples = 2;
  const StudentModel model =
      train_student(singleton_dataset(), cfg, small_featurizer());
  const auto preds = predict_topk(model, "apple", 1, 0.0);
  REQUIRE(preds.size() == 1);
  CHECK(preds[0].category == 0);
}

TEST_CASE("multi-threaded relaxed training still learns") {
  SyntheticSpec spec;
  spec.n_queries = 400;
  spec.k_categories = 8;
  spec.vocab_size = 90;
  spec.seed = 31;
  const ClickDataset ds = generate_synthetic(spec).observed;
  StudentTrainConfig cfg;
  cfg.epochs = 10;
  cfg.learning_rate = 0.5;
  cfg.seed = 31;
  cfg.deterministic = false;
  cfg.threads = 2;
  TrainLog log;
  const StudentModel model = train_student(ds, cfg, small_featurizer(), &log);
  CHECK(std::isfinite(log.epoch_loss.back()));
  CHECK(log.epoch_loss.back() < log.epoch_loss.front());
  const auto preds = predict_topk(model, ds.records[0].text, 5, 0.0);
  CHECK(!preds.empty());
}

TEST_CASE("student gradients match central finite differences") {
  // float64 instantiation of the same kernels the trainer uses
  Rng rng(2024);
  const std::size_t buckets = 64, dim = 8, k = 5;

  for (int probe = 0; probe < 20; ++probe) {
    StudentParamsT<double> params;
    params.embedding = Matrix<double>(buckets, dim);
    params.output = Matrix<double>(k, dim);
    for (double& v : params.embedding.data()) v = rng.range(-0.5, 0.5);
    for (double& v : params.output.data()) v = rng.range(-0.5, 0.5);

    FeatureBag bag;
    const int n_feat = 3 + static_cast<int>(rng.below(6));
    for (int i = 0; i < n_feat; ++i) {
      bag.indices.push_back(static_cast<std::uint32_t>(rng.below(buckets)));
    }
    std::vector<OvaTerm> terms;
    for (std::size_t j = 0; j < k; ++j) {
      terms.push_back({static_cast<std::int32_t>(j), 0.25 + rng.unit(),
                       rng.bernoulli(0.4) ? 1.0 : 0.0});
    }

    std::vector<double> hidden, score_grad, hidden_grad;
    student_record_gradients(params, bag, terms, hidden, score_grad,
                             hidden_grad);

    const double h = 1e-3;
    // probe one output entry and one touched embedding entry
    {
      const std::size_t j = rng.below(k);
      const std::size_t c = rng.below(dim);
      const double analytic = score_grad[j] * hidden[c];
      const double saved = params.output.at(j, c);
      params.output.at(j, c) = saved + h;
      const double up = student_record_loss(params, bag, terms);
      params.output.at(j, c) = saved - h;
      const double down = student_record_loss(params, bag, terms);
      params.output.at(j, c) = saved;
      const double numeric = (up - down) / (2 * h);
      CHECK(std::abs(analytic - numeric) <=
            1e-4 * std::max({1.0, std::abs(analytic), std::abs(numeric)}));
    }
    {
      const std::uint32_t row = bag.indices[rng.below(bag.indices.size())];
      const std::size_t c = rng.below(dim);
      double count = 0;
      for (std::uint32_t idx : bag.indices) count += idx == row ? 1.0 : 0.0;
      const double analytic =
          hidden_grad[c] * count / static_cast<double>(bag.indices.size());
      const double saved = params.embedding.at(row, c);
      params.embedding.at(row, c) = saved + h;
      const double up = student_record_loss(params, bag, terms);
      params.embedding.at(row, c) = saved - h;
      const double down = student_record_loss(params, bag, terms);
      params.embedding.at(row, c) = saved;
      const double numeric = (up - down) / (2 * h);
      CHECK(std::abs(analytic - numeric) <=
            1e-4 * std::max({1.0, std::abs(analytic), std::abs(numeric)}));
    }
  }
}

TEST_CASE("empty dataset is rejected") {
  ClickDataset ds;
  ds.label_space.add("x");
  StudentTrainConfig cfg;
  CHECK_THROWS_WITH_AS(train_student(ds, cfg, small_featurizer()),
                       doctest::Contains("empty"), Error);
}
