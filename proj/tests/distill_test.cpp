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
#include "ddme/distill.hpp"
#include "ddme/error.hpp"
#include "ddme/io.hpp"
#include "ddme/rng.hpp"

using namespace ddme;
namespace fs = std::filesystem;

namespace {

fs::path temp_file(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "ddme_distill_test";
  fs::create_directories(dir);
  return dir / name;
}

ClickDataset small_dataset() {
  ClickDataset ds;
  ds.label_space = LabelSpace({"a", "b", "c", "d"});
  ds.records.push_back({0, "first query", {0, 1}, {200, 100}});
  ds.records.push_back({1, "second query", {1}, {400}});
  ds.records.push_back({2, "third query", {2}, {300}});
  return ds;
}

InferenceDataset inference_of(std::vector<std::vector<std::int32_t>> unioned) {
  InferenceDataset inf;
  inf.unioned = std::move(unioned);
  return inf;
}

}  // namespace

TEST_CASE("merge_labels keeps historical labels and flags fresh ones") {
  const ClickDataset ds = small_dataset();

  SUBCASE("empty inference is the identity") {
    const MergeResult m = merge_labels(ds, inference_of({{}, {}, {}}));
    for (std::size_t i = 0; i < ds.size(); ++i) {
      CHECK(m.merged[i] == ds.records[i].labels);
      CHECK(m.expert_new[i].empty());
    }
  }
  SUBCASE("inference equal to the labels adds nothing") {
    const MergeResult m =
        merge_labels(ds, inference_of({{0, 1}, {1}, {2}}));
    for (std::size_t i = 0; i < ds.size(); ++i) {
      CHECK(m.merged[i] == ds.records[i].labels);
      CHECK(m.expert_new[i].empty());
    }
  }
  SUBCASE("new categories are merged and flagged") {
    const MergeResult m = merge_labels(ds, inference_of({{0, 3}, {}, {}}));
    CHECK(m.merged[0] == std::vector<std::int32_t>{0, 1, 3});
    CHECK(m.expert_new[0] == std::vector<std::int32_t>{3});
  }
  SUBCASE("superset property holds") {
    const MergeResult m =
        merge_labels(ds, inference_of({{2, 3}, {0, 1}, {1, 2, 3}}));
    for (std::size_t i = 0; i < ds.size(); ++i) {
      for (std::int32_t label : ds.records[i].labels) {
        CHECK(std::binary_search(m.merged[i].begin(), m.merged[i].end(), label));
      }
    }
  }
}

TEST_CASE("allocate_pv implements the prior-preserving unit") {
  // total PV 1000, category b holds 200 -> p_b = 0.2; M = 100, N_b = 4
  ClickDataset ds;
  ds.label_space = LabelSpace({"a", "b", "c", "d", "e"});
  ds.records.push_back({0, "q0", {0}, {800}});
  ds.records.push_back({1, "q1", {1}, {200}});
  ds.records.push_back({2, "q2", {0}, {0}});
  ds.records.push_back({3, "q3", {0}, {0}});
  ds.records.push_back({4, "q4", {0}, {0}});
  const MergeResult m = merge_labels(
      ds, inference_of({{}, {}, {1}, {1}, {1}}));
  // three pairs so far; add one more by reusing record 1's own prediction
  MergeResult m2 = m;
  m2.merged[0] = {0, 1};
  m2.expert_new[0] = {1};

  const auto [aug, report] = allocate_pv(ds, m2, {100.0, 1.0});
  const CategoryAllocation& b = report.categories[1];
  CHECK(b.prior == doctest::Approx(0.2));
  CHECK(b.new_pairs == 4);
  CHECK(b.unit_pv == doctest::Approx(5.0));  // 0.2 * 100 / 4
  CHECK(b.added_mass == doctest::Approx(20.0));
  CHECK(aug.data.records[2].pv_of(1) == doctest::Approx(5.0));
}

TEST_CASE("no expert pairs leaves the PV matrix untouched") {
  const ClickDataset ds = small_dataset();
  const MergeResult m = merge_labels(ds, inference_of({{}, {}, {}}));
  const auto [aug, report] = allocate_pv(ds, m, {50.0, 1.0});
  CHECK(datasets_equal(aug.data, ds));
  CHECK(report.total_added == 0.0);
  CHECK(aug.new_pair_count() == 0);
}

TEST_CASE("full coverage preserves every category share") {
  SyntheticSpec spec;
  spec.n_queries = 2000;
  spec.k_categories = 15;
  spec.vocab_size = 200;
  spec.seed = 77;
  const ClickDataset ds = generate_synthetic(spec).full;
  const auto k = static_cast<std::size_t>(ds.label_space.k());

  // synthetic inference giving every category at least one fresh pair
  Rng rng(99);
  std::vector<std::vector<std::int32_t>> unioned(ds.size());
  for (std::int32_t j = 0; j < ds.label_space.k(); ++j) {
    for (int c = 0; c < 3; ++c) {
      const std::size_t i = rng.below(ds.size());
      if (!ds.records[i].has_label(j)) unioned[i].push_back(j);
    }
  }
  for (auto& u : unioned) {
    std::sort(u.begin(), u.end());
    u.erase(std::unique(u.begin(), u.end()), u.end());
  }
  const MergeResult m = merge_labels(ds, inference_of(std::move(unioned)));

  const double mass = ds.total_pv_mass();
  const double big_m = 0.25 * mass;
  const auto [aug, report] = allocate_pv(ds, m, {big_m, 1.0});

  std::vector<double> pre(k, 0.0), post(k, 0.0);
  for (const auto& r : ds.records) {
    for (std::size_t i = 0; i < r.labels.size(); ++i) {
      pre[static_cast<std::size_t>(r.labels[i])] += r.label_pv[i];
    }
  }
  for (const auto& r : aug.data.records) {
    for (std::size_t i = 0; i < r.labels.size(); ++i) {
      post[static_cast<std::size_t>(r.labels[i])] += r.label_pv[i];
    }
  }
  const double post_mass = aug.data.total_pv_mass();
  bool all_covered = true;
  for (std::size_t j = 0; j < k; ++j) {
    all_covered = all_covered && report.categories[j].new_pairs > 0;
  }
  REQUIRE(all_covered);
  CHECK(std::abs(post_mass - (mass + big_m)) <= 1e-9 * (mass + big_m));
  for (std::size_t j = 0; j < k; ++j) {
    const double pre_share = pre[j] / mass;
    const double post_share = post[j] / post_mass;
    CHECK(std::abs(post_share - pre_share) <= 1e-9 * std::max(pre_share, 1e-300));
  }
}

TEST_CASE("zero-prior categories get the floor PV and are reported") {
  ClickDataset ds;
  ds.label_space = LabelSpace({"a", "ghost"});
  ds.records.push_back({0, "q0", {0}, {100}});
  ds.records.push_back({1, "q1", {0}, {50}});
  const MergeResult m = merge_labels(ds, inference_of({{1}, {}}));
  const auto [aug, report] = allocate_pv(ds, m, {30.0, 2.5});
  CHECK(report.categories[1].floored);
  CHECK(report.floored_pairs == 1);
  CHECK(aug.data.records[0].pv_of(1) == doctest::Approx(2.5));
}

TEST_CASE("allocate_pv validates its inputs") {
  const ClickDataset ds = small_dataset();
  const MergeResult m = merge_labels(ds, inference_of({{}, {}, {}}));
  CHECK_THROWS_WITH_AS(allocate_pv(ds, m, {0.0, 1.0}),
                       doctest::Contains("positive"), Error);
  CHECK_THROWS_WITH_AS(allocate_pv(ds, m, {-3.0, 1.0}),
                       doctest::Contains("positive"), Error);
}

TEST_CASE("emitted augmented data round-trips through its file pair") {
  const ClickDataset ds = small_dataset();
  const MergeResult m = merge_labels(ds, inference_of({{2}, {3}, {}}));
  const auto [aug, report] = allocate_pv(ds, m, {90.0, 1.0});

  const fs::path data = temp_file("aug.tsv");
  const fs::path prov = temp_file("aug.prov");
  emit_augmented(aug, data, prov);

  // provenance line count equals the number of expert_new pairs
  std::size_t lines = 0;
  for (char c : read_file(prov)) lines += c == '\n' ? 1 : 0;
  CHECK(static_cast<std::int64_t>(lines) == aug.new_pair_count());

  const AugmentedDataset back =
      load_augmented(data, prov, &ds.label_space);
  CHECK(back.expert_new == aug.expert_new);
  REQUIRE(back.data.size() == aug.data.size());
  // PVs are written at 6 decimals; a second emit is a byte-exact fixed point
  for (std::size_t i = 0; i < aug.data.size(); ++i) {
    CHECK(back.data.records[i].labels == aug.data.records[i].labels);
    for (std::size_t l = 0; l < aug.data.records[i].label_pv.size(); ++l) {
      CHECK(std::abs(back.data.records[i].label_pv[l] -
                     aug.data.records[i].label_pv[l]) <= 5e-7);
    }
  }
  const fs::path data2 = temp_file("aug2.tsv");
  const fs::path prov2 = temp_file("aug2.prov");
  emit_augmented(back, data2, prov2);
  CHECK(read_file(data) == read_file(data2));
  CHECK(read_file(prov) == read_file(prov2));
}

TEST_CASE("pair count grows under augmentation") {
  const ClickDataset ds = small_dataset();
  const MergeResult m = merge_labels(ds, inference_of({{3}, {0}, {}}));
  const auto [aug, report] = allocate_pv(ds, m, {10.0, 1.0});
  std::int64_t before = 0;
  for (const auto& r : ds.records) {
    before += static_cast<std::int64_t>(r.labels.size());
  }
  CHECK(aug.pair_count() == before + 2);
  CHECK(aug.pair_count() > before);
}

TEST_CASE("augmentation output is deterministic byte for byte") {
  const ClickDataset ds = small_dataset();
  const MergeResult m = merge_labels(ds, inference_of({{2, 3}, {}, {1}}));
  const auto [aug1, r1] = allocate_pv(ds, m, {42.0, 1.0});
  const auto [aug2, r2] = allocate_pv(ds, m, {42.0, 1.0});
  const fs::path a = temp_file("det_a.tsv"), ap = temp_file("det_a.prov");
  const fs::path b = temp_file("det_b.tsv"), bp = temp_file("det_b.prov");
  emit_augmented(aug1, a, ap);
  emit_augmented(aug2, b, bp);
  CHECK(read_file(a) == read_file(b));
  CHECK(read_file(ap) == read_file(bp));
}

TEST_CASE("inference files round-trip label sets in record order") {
  const ClickDataset ds = small_dataset();
  std::vector<std::vector<Prediction>> preds = {
      {{0, 0.91}, {3, 0.55}}, {}, {{2, 0.72}}};
  const fs::path p = temp_file("inference.tsv");
  save_inference(ds, preds, p);
  const auto labels = load_inference_labels(p, ds.label_space);
  REQUIRE(labels.size() == 3);
  CHECK(labels[0] == std::vector<std::int32_t>{0, 3});
  CHECK(labels[1].empty());
  CHECK(labels[2] == std::vector<std::int32_t>{2});
}

TEST_CASE("allocation report renders JSON and a table") {
  const ClickDataset ds = small_dataset();
  const MergeResult m = merge_labels(ds, inference_of({{3}, {}, {}}));
  const auto [aug, report] = allocate_pv(ds, m, {10.0, 1.0});
  const fs::path p = temp_file("alloc.json");
  write_allocation_report_json(report, ds.label_space, p);
  const std::string json = read_file(p);
  CHECK(json.find("\"categories\"") != std::string::npos);
  CHECK(json.find("\"m\":10") != std::string::npos);
  const std::string table = allocation_report_table(report, ds.label_space);
  CHECK(table.find("category") != std::string::npos);
  CHECK(table.find("total:") != std::string::npos);
}
