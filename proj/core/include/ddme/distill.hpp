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
#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "ddme/corpus.hpp"
#include "ddme/experts.hpp"

namespace ddme {

/// Per-query union of the expert predictions, aligned with the source
/// dataset's records; per-expert sets kept for diagnostics.
struct InferenceDataset {
  std::vector<std::vector<std::int32_t>> unioned;
  std::vector<std::vector<std::vector<std::int32_t>>> per_expert;
};

/// Runs every expert over every query and unions the predicted label sets.
/// All experts must share the dataset's label space.
InferenceDataset union_inference(const ClickDataset& ds,
                                 std::span<const ExpertModel* const> experts,
                                 double tau, int m_cap);

/// Merged label sets (historical union inferred) plus, per query, the sorted
/// categories that only the experts contributed.
struct MergeResult {
  std::vector<std::vector<std::int32_t>> merged;
  std::vector<std::vector<std::int32_t>> expert_new;
};

MergeResult merge_labels(const ClickDataset& ds, const InferenceDataset& inf);

/// Historical pairs keep their PV; expert_new pairs carry the allocated mass.
struct AugmentedDataset {
  ClickDataset data;
  std::vector<std::vector<std::int32_t>> expert_new;  // sorted, per record

  std::int64_t pair_count() const;
  std::int64_t new_pair_count() const;
};

struct CategoryAllocation {
  std::int32_t category = 0;
  double prior = 0;           // p_j: historical PV mass share
  std::int64_t new_pairs = 0; // N_j: expert_new pair count
  double unit_pv = 0;         // allocated per pair
  double added_mass = 0;
  bool floored = false;       // zero-prior category given the floor PV
};

struct AllocationReport {
  std::vector<CategoryAllocation> categories;  // one entry per category
  double m = 0;
  double historical_mass = 0;
  double total_added = 0;
  double floor_pv = 0;
  std::int64_t floored_pairs = 0;
};

struct AllocationConfig {
  double m = 0;                 // supplementary PV mass, > 0
  double zero_prior_floor = 1;  // PV given to pairs of categories with p_j = 0
};

// Prior-preserving PV allocation: each expert_new pair of category j receives
// p_j * m / N_j, where p_j is the category's historical mass share and N_j
// the number of expert_new pairs predicted into j. Historical pairs keep
// their original PV. Categories with zero historical prior receive the
// configured floor instead (reported separately).
std::pair<AugmentedDataset, AllocationReport> allocate_pv(
    const ClickDataset& ds, const MergeResult& merge,
    const AllocationConfig& cfg);

// Augmented dataset file: corpus grammar with PVs as 6-decimal fixed point
// (values are rounded to that precision on write). Provenance sidecar:
// "<query_id> TAB <category identifier> TAB expert_new" per expert_new pair.
void emit_augmented(const AugmentedDataset& aug,
                    const std::filesystem::path& dataset_path,
                    const std::filesystem::path& provenance_path);

AugmentedDataset load_augmented(const std::filesystem::path& dataset_path,
                                const std::filesystem::path& provenance_path,
                                const LabelSpace* fixed_space = nullptr);

void write_allocation_report_json(const AllocationReport& report,
                                  const LabelSpace& space,
                                  const std::filesystem::path& path);
std::string allocation_report_table(const AllocationReport& report,
                                    const LabelSpace& space);

// Batch inference file, one line per dataset record (same order):
//   <query_text> TAB <cat>:<score>[,<cat>:<score>]*
// with 6-decimal scores; queries with no prediction keep an empty field.
void save_inference(const ClickDataset& ds,
                    const std::vector<std::vector<Prediction>>& per_query,
                    const std::filesystem::path& path);

/// Reads back the label sets of an inference file (scores dropped), aligned
/// by line order.
std::vector<std::vector<std::int32_t>> load_inference_labels(
    const std::filesystem::path& path, const LabelSpace& space);

}  // namespace ddme
