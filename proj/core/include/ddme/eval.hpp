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
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ddme/corpus.hpp"
#include "ddme/student.hpp"

namespace ddme {

// P@5 averages |top5 ∩ Y| / min(5, |prediction|) over all queries; a query
// with an empty prediction list contributes 0 (and is counted). R@5 averages
// |top5 ∩ Y| / min(5, |Y|) over queries with non-empty truth only.
struct SliceMetrics {
  std::int64_t n = 0;         // queries in the slice
  std::int64_t n_recall = 0;  // queries entering the R@5 mean
  std::int64_t empty_predictions = 0;
  double p_at_5 = 0;
  double r_at_5 = 0;
};

struct EvalResult {
  SliceMetrics overall;
  std::map<Band, SliceMetrics> bands;  // bands with zero queries are absent
};

double precision_at_5(
    std::span<const std::vector<std::int32_t>> ranked_predictions,
    std::span<const std::vector<std::int32_t>> truth_sets);

double recall_at_5(
    std::span<const std::vector<std::int32_t>> ranked_predictions,
    std::span<const std::vector<std::int32_t>> truth_sets);

/// Metrics over arbitrary ranked predictions aligned with ds.records,
/// overall plus per frequency band.
EvalResult evaluate_ranked(
    std::span<const std::vector<std::int32_t>> ranked_predictions,
    const ClickDataset& ds, const BandCuts& cuts);

/// Runs the student over every record and slices by frequency band.
EvalResult band_report(const StudentModel& model, const ClickDataset& ds,
                       const BandCuts& cuts, int topk = 5,
                       double threshold = 0.0);

struct AnnotationPair {
  std::string query;
  std::string category;
  int relevance = 0;  // 0 or 1
  double pv = 0;
};

using AnnotationSet = std::vector<AnnotationPair>;

/// Annotation file: <query> TAB <cat> TAB <rel 0|1> TAB <pv> per line.
AnnotationSet load_annotations(const std::filesystem::path& path);

/// pv_weighted: sum(pv * rel) / sum(pv); unweighted: mean relevance.
double pair_accuracy(const AnnotationSet& ann, bool pv_weighted);

struct EvalReportMeta {
  std::string split;
  std::string dataset_digest;
  std::string model_digest;
};

void write_eval_report_json(const EvalResult& result,
                            const EvalReportMeta& meta,
                            const std::filesystem::path& path);
std::string eval_report_table(const EvalResult& result,
                              const EvalReportMeta& meta);

}  // namespace ddme
