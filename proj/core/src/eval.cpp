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

#include "ddme/eval.hpp"

#include <algorithm>
#include <cmath>

#include "ddme/error.hpp"
#include "ddme/io.hpp"

namespace ddme {

namespace {

constexpr int kAtK = 5;

/// |top-5 of prediction ∩ truth| via sorted-truth binary search.
std::int64_t hits_at_5(const std::vector<std::int32_t>& ranked,
                       const std::vector<std::int32_t>& truth) {
  const std::size_t depth =
      std::min<std::size_t>(ranked.size(), static_cast<std::size_t>(kAtK));
  std::int64_t hits = 0;
  for (std::size_t i = 0; i < depth; ++i) {
    if (std::binary_search(truth.begin(), truth.end(), ranked[i])) ++hits;
  }
  return hits;
}

struct SliceAccumulator {
  std::int64_t n = 0;
  std::int64_t n_recall = 0;
  std::int64_t empty_predictions = 0;
  double p_sum = 0;
  double r_sum = 0;

  void add(const std::vector<std::int32_t>& ranked,
           const std::vector<std::int32_t>& truth) {
    ++n;
    const std::int64_t hits = hits_at_5(ranked, truth);
    if (ranked.empty()) {
      ++empty_predictions;  // 0/0 defined as 0 for P@5
    } else {
      const auto denom = static_cast<double>(
          std::min<std::size_t>(ranked.size(), static_cast<std::size_t>(kAtK)));
      p_sum += static_cast<double>(hits) / denom;
    }
    if (!truth.empty()) {
      ++n_recall;
      const auto denom = static_cast<double>(
          std::min<std::size_t>(truth.size(), static_cast<std::size_t>(kAtK)));
      r_sum += static_cast<double>(hits) / denom;
    }
  }

  SliceMetrics finish() const {
    SliceMetrics m;
    m.n = n;
    m.n_recall = n_recall;
    m.empty_predictions = empty_predictions;
    m.p_at_5 = n > 0 ? p_sum / static_cast<double>(n) : 0.0;
    m.r_at_5 = n_recall > 0 ? r_sum / static_cast<double>(n_recall) : 0.0;
    return m;
  }
};

}  // namespace

double precision_at_5(
    std::span<const std::vector<std::int32_t>> ranked_predictions,
    std::span<const std::vector<std::int32_t>> truth_sets) {
  if (ranked_predictions.size() != truth_sets.size()) {
    throw Error("precision_at_5: prediction/truth size mismatch");
  }
  if (ranked_predictions.empty()) {
    throw Error("precision_at_5: empty query set");
  }
  SliceAccumulator acc;
  for (std::size_t i = 0; i < ranked_predictions.size(); ++i) {
    acc.add(ranked_predictions[i], truth_sets[i]);
  }
  return acc.finish().p_at_5;
}

double recall_at_5(
    std::span<const std::vector<std::int32_t>> ranked_predictions,
    std::span<const std::vector<std::int32_t>> truth_sets) {
  if (ranked_predictions.size() != truth_sets.size()) {
    throw Error("recall_at_5: prediction/truth size mismatch");
  }
  if (ranked_predictions.empty()) {
    throw Error("recall_at_5: empty query set");
  }
  SliceAccumulator acc;
  for (std::size_t i = 0; i < ranked_predictions.size(); ++i) {
    acc.add(ranked_predictions[i], truth_sets[i]);
  }
  return acc.finish().r_at_5;
}

EvalResult evaluate_ranked(
    std::span<const std::vector<std::int32_t>> ranked_predictions,
    const ClickDataset& ds, const BandCuts& cuts) {
  if (ranked_predictions.size() != ds.size()) {
    throw Error("evaluate_ranked: predictions do not align with dataset");
  }
  if (ds.records.empty()) {
    throw Error("evaluate_ranked: empty dataset");
  }
  const std::vector<Band> bands = assign_bands(ds, cuts);
  SliceAccumulator overall;
  std::map<Band, SliceAccumulator> per_band;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    overall.add(ranked_predictions[i], ds.records[i].labels);
    per_band[bands[i]].add(ranked_predictions[i], ds.records[i].labels);
  }
  EvalResult result;
  result.overall = overall.finish();
  for (const auto& [band, acc] : per_band) {
    result.bands.emplace(band, acc.finish());
  }
  return result;
}

EvalResult band_report(const StudentModel& model, const ClickDataset& ds,
                       const BandCuts& cuts, int topk, double threshold) {
  if (!(model.label_space == ds.label_space)) {
    throw Error("band_report: model and dataset label spaces differ");
  }
  std::vector<std::vector<std::int32_t>> ranked(ds.size());
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const auto preds = predict_topk(model, ds.records[i].text, topk, threshold);
    ranked[i].reserve(preds.size());
    for (const auto& p : preds) ranked[i].push_back(p.category);
  }
  return evaluate_ranked(ranked, ds, cuts);
}

AnnotationSet load_annotations(const std::filesystem::path& path) {
  const std::string content = read_file(path);
  AnnotationSet ann;
  std::size_t begin = 0;
  std::size_t line_no = 0;
  while (begin < content.size()) {
    const std::size_t end = content.find('\n', begin);
    std::string_view line(content.data() + begin,
                          (end == std::string::npos ? content.size() : end) -
                              begin);
    begin = (end == std::string::npos) ? content.size() : end + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty() || line.front() == '#') continue;
    std::vector<std::string_view> fields;
    std::size_t pos = 0;
    while (fields.size() < 4 && pos <= line.size()) {
      const std::size_t tab = line.find('\t', pos);
      if (tab == std::string_view::npos) {
        fields.push_back(line.substr(pos));
        break;
      }
      fields.push_back(line.substr(pos, tab - pos));
      pos = tab + 1;
    }
    if (fields.size() != 4) {
      throw ParseError(path.string() + ":" + std::to_string(line_no) +
                       ": expected 4 TAB-separated fields");
    }
    AnnotationPair p;
    p.query = std::string(fields[0]);
    p.category = std::string(fields[1]);
    if (fields[2] == "0") {
      p.relevance = 0;
    } else if (fields[2] == "1") {
      p.relevance = 1;
    } else {
      throw ParseError(path.string() + ":" + std::to_string(line_no) +
                       ": relevance must be 0 or 1");
    }
    try {
      p.pv = std::stod(std::string(fields[3]));
    } catch (const std::exception&) {
      throw ParseError(path.string() + ":" + std::to_string(line_no) +
                       ": bad pv value");
    }
    if (!(p.pv >= 0) || !std::isfinite(p.pv)) {
      throw ParseError(path.string() + ":" + std::to_string(line_no) +
                       ": pv must be non-negative");
    }
    ann.push_back(std::move(p));
  }
  return ann;
}

double pair_accuracy(const AnnotationSet& ann, bool pv_weighted) {
  if (ann.empty()) throw Error("pair_accuracy: empty annotation set");
  if (!pv_weighted) {
    double sum = 0;
    for (const auto& p : ann) sum += p.relevance;
    return sum / static_cast<double>(ann.size());
  }
  double mass = 0, hit = 0;
  for (const auto& p : ann) {
    mass += p.pv;
    hit += p.pv * p.relevance;
  }
  if (!(mass > 0)) {
    throw Error("pair_accuracy: zero total PV in weighted mode");
  }
  return hit / mass;
}

namespace {

void write_slice(JsonWriter& j, const SliceMetrics& m) {
  j.begin_object();
  j.kv("n", static_cast<std::int64_t>(m.n));
  j.kv("n_recall", static_cast<std::int64_t>(m.n_recall));
  j.kv("empty_predictions", static_cast<std::int64_t>(m.empty_predictions));
  j.kv("p_at_5", m.p_at_5);
  j.kv("r_at_5", m.r_at_5);
  j.end_object();
}

}  // namespace

void write_eval_report_json(const EvalResult& result,
                            const EvalReportMeta& meta,
                            const std::filesystem::path& path) {
  JsonWriter j;
  j.begin_object();
  j.kv("split", meta.split);
  j.kv("dataset_digest", meta.dataset_digest);
  j.kv("model_digest", meta.model_digest);
  j.key("overall");
  write_slice(j, result.overall);
  j.key("bands").begin_object();
  for (const auto& [band, metrics] : result.bands) {
    j.key(band_name(band));
    write_slice(j, metrics);
  }
  j.end_object();
  j.end_object();
  write_file(path, j.str() + "\n");
}

std::string eval_report_table(const EvalResult& result,
                              const EvalReportMeta& meta) {
  std::string out;
  out += "split: " + meta.split + "\n";
  out += "dataset: " + meta.dataset_digest + "\n";
  out += "model:   " + meta.model_digest + "\n";
  out += "slice        n      P@5      R@5\n";
  char buf[128];
  std::snprintf(buf, sizeof(buf), "%-8s %7lld %8.4f %8.4f\n", "overall",
                static_cast<long long>(result.overall.n), result.overall.p_at_5,
                result.overall.r_at_5);
  out += buf;
  for (const auto& [band, m] : result.bands) {
    std::snprintf(buf, sizeof(buf), "%-8s %7lld %8.4f %8.4f\n",
                  std::string(band_name(band)).c_str(),
                  static_cast<long long>(m.n), m.p_at_5, m.r_at_5);
    out += buf;
  }
  return out;
}

}  // namespace ddme
