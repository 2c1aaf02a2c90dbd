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

#include "ddme/distill.hpp"

#include <algorithm>
#include <cmath>

#include "ddme/error.hpp"
#include "ddme/io.hpp"

namespace ddme {

std::int64_t AugmentedDataset::pair_count() const {
  std::int64_t n = 0;
  for (const auto& r : data.records) {
    n += static_cast<std::int64_t>(r.labels.size());
  }
  return n;
}

std::int64_t AugmentedDataset::new_pair_count() const {
  std::int64_t n = 0;
  for (const auto& list : expert_new) {
    n += static_cast<std::int64_t>(list.size());
  }
  return n;
}

InferenceDataset union_inference(const ClickDataset& ds,
                                 std::span<const ExpertModel* const> experts,
                                 double tau, int m_cap) {
  if (experts.empty()) throw Error("union_inference: no experts");
  for (const ExpertModel* e : experts) {
    if (e == nullptr) throw Error("union_inference: null expert");
    if (!(e->label_space == ds.label_space)) {
      throw Error("union_inference: expert label space does not match dataset");
    }
  }
  InferenceDataset out;
  out.unioned.resize(ds.size());
  out.per_expert.resize(ds.size());
  for (std::size_t i = 0; i < ds.size(); ++i) {
    out.per_expert[i].reserve(experts.size());
    std::vector<std::int32_t> acc;
    for (const ExpertModel* e : experts) {
      std::vector<std::int32_t> pred =
          expert_predict(*e, ds.records[i].text, tau, m_cap);
      acc.insert(acc.end(), pred.begin(), pred.end());
      out.per_expert[i].push_back(std::move(pred));
    }
    std::sort(acc.begin(), acc.end());
    acc.erase(std::unique(acc.begin(), acc.end()), acc.end());
    out.unioned[i] = std::move(acc);
  }
  return out;
}

MergeResult merge_labels(const ClickDataset& ds, const InferenceDataset& inf) {
  if (inf.unioned.size() != ds.size()) {
    throw Error("merge_labels: inference/dataset size mismatch");
  }
  MergeResult out;
  out.merged.resize(ds.size());
  out.expert_new.resize(ds.size());
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const QueryRecord& rec = ds.records[i];
    std::vector<std::int32_t> merged = rec.labels;
    std::vector<std::int32_t> fresh;
    for (std::int32_t cat : inf.unioned[i]) {
      if (!rec.has_label(cat)) fresh.push_back(cat);
    }
    merged.insert(merged.end(), fresh.begin(), fresh.end());
    std::sort(merged.begin(), merged.end());
    out.merged[i] = std::move(merged);
    out.expert_new[i] = std::move(fresh);  // already sorted (subset of union)
  }
  return out;
}

std::pair<AugmentedDataset, AllocationReport> allocate_pv(
    const ClickDataset& ds, const MergeResult& merge,
    const AllocationConfig& cfg) {
  if (!(cfg.m > 0)) throw Error("allocate_pv: M must be positive");
  if (ds.records.empty()) throw Error("allocate_pv: empty dataset");
  if (merge.merged.size() != ds.size() || merge.expert_new.size() != ds.size()) {
    throw Error("allocate_pv: merge result does not match dataset");
  }
  const auto k = static_cast<std::size_t>(ds.label_space.k());

  // p_j: historical PV mass share per category.
  std::vector<double> category_mass(k, 0.0);
  double total_mass = 0;
  for (const auto& rec : ds.records) {
    for (std::size_t i = 0; i < rec.labels.size(); ++i) {
      category_mass[static_cast<std::size_t>(rec.labels[i])] += rec.label_pv[i];
      total_mass += rec.label_pv[i];
    }
  }
  if (!(total_mass > 0)) {
    throw Error("allocate_pv: dataset has no PV mass");
  }

  // N_j: count of expert_new pairs per category.
  std::vector<std::int64_t> new_pairs(k, 0);
  for (const auto& fresh : merge.expert_new) {
    for (std::int32_t cat : fresh) {
      ++new_pairs[static_cast<std::size_t>(cat)];
    }
  }

  AllocationReport report;
  report.m = cfg.m;
  report.historical_mass = total_mass;
  report.floor_pv = cfg.zero_prior_floor;
  report.categories.resize(k);
  std::vector<double> unit(k, 0.0);
  for (std::size_t j = 0; j < k; ++j) {
    CategoryAllocation& a = report.categories[j];
    a.category = static_cast<std::int32_t>(j);
    a.prior = category_mass[j] / total_mass;
    a.new_pairs = new_pairs[j];
    if (new_pairs[j] > 0) {
      if (a.prior > 0) {
        a.unit_pv = a.prior * cfg.m / static_cast<double>(new_pairs[j]);
      } else {
        a.unit_pv = cfg.zero_prior_floor;
        a.floored = true;
        report.floored_pairs += new_pairs[j];
      }
      a.added_mass = a.unit_pv * static_cast<double>(new_pairs[j]);
      report.total_added += a.added_mass;
    }
    unit[j] = a.unit_pv;
  }

  AugmentedDataset aug;
  aug.data.label_space = ds.label_space;
  aug.data.records.resize(ds.size());
  aug.expert_new = merge.expert_new;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const QueryRecord& src = ds.records[i];
    QueryRecord& dst = aug.data.records[i];
    dst.query_id = src.query_id;
    dst.text = src.text;
    dst.labels = merge.merged[i];
    dst.label_pv.resize(dst.labels.size());
    for (std::size_t l = 0; l < dst.labels.size(); ++l) {
      const std::int32_t cat = dst.labels[l];
      // historical pairs keep their PV, expert_new pairs get the allocation
      dst.label_pv[l] = src.has_label(cat)
                            ? src.pv_of(cat)
                            : unit[static_cast<std::size_t>(cat)];
    }
  }
  aug.data.validate();
  return {std::move(aug), std::move(report)};
}

void emit_augmented(const AugmentedDataset& aug,
                    const std::filesystem::path& dataset_path,
                    const std::filesystem::path& provenance_path) {
  save_dataset(aug.data, dataset_path, 6);
  std::string prov;
  for (std::size_t i = 0; i < aug.data.records.size(); ++i) {
    for (std::int32_t cat : aug.expert_new[i]) {
      prov += std::to_string(aug.data.records[i].query_id);
      prov.push_back('\t');
      prov += aug.data.label_space.name(cat);
      prov += "\texpert_new\n";
    }
  }
  write_file(provenance_path, prov);
}

AugmentedDataset load_augmented(const std::filesystem::path& dataset_path,
                                const std::filesystem::path& provenance_path,
                                const LabelSpace* fixed_space) {
  AugmentedDataset aug;
  aug.data = load_dataset(dataset_path, fixed_space, /*allow_fractional_pv=*/true);
  aug.expert_new.assign(aug.data.size(), {});

  const std::string content = read_file(provenance_path);
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
    const std::size_t t1 = line.find('\t');
    const std::size_t t2 = t1 == std::string_view::npos
                               ? std::string_view::npos
                               : line.find('\t', t1 + 1);
    if (t2 == std::string_view::npos) {
      throw ParseError(provenance_path.string() + ":" +
                       std::to_string(line_no) + ": expected 3 fields");
    }
    std::int64_t qid;
    try {
      qid = std::stoll(std::string(line.substr(0, t1)));
    } catch (const std::exception&) {
      throw ParseError(provenance_path.string() + ":" +
                       std::to_string(line_no) + ": bad query id");
    }
    if (qid < 0 || static_cast<std::size_t>(qid) >= aug.data.size()) {
      throw ParseError(provenance_path.string() + ":" +
                       std::to_string(line_no) + ": query id out of range");
    }
    const std::string cat(line.substr(t1 + 1, t2 - t1 - 1));
    const std::int32_t idx = aug.data.label_space.index_of(cat);
    if (idx < 0) {
      throw ParseError(provenance_path.string() + ":" +
                       std::to_string(line_no) + ": unknown category '" + cat +
                       "'");
    }
    aug.expert_new[static_cast<std::size_t>(qid)].push_back(idx);
  }
  for (auto& list : aug.expert_new) std::sort(list.begin(), list.end());
  return aug;
}

void write_allocation_report_json(const AllocationReport& report,
                                  const LabelSpace& space,
                                  const std::filesystem::path& path) {
  JsonWriter j;
  j.begin_object();
  j.kv("m", report.m);
  j.kv("historical_mass", report.historical_mass);
  j.kv("total_added", report.total_added);
  j.kv("floor_pv", report.floor_pv);
  j.kv("floored_pairs", report.floored_pairs);
  j.key("categories").begin_array();
  for (const auto& a : report.categories) {
    j.begin_object();
    j.kv("category", space.name(a.category));
    j.kv("prior", a.prior);
    j.kv("new_pairs", a.new_pairs);
    j.kv("unit_pv", a.unit_pv);
    j.kv("added_mass", a.added_mass);
    j.kv("floored", a.floored);
    j.end_object();
  }
  j.end_array();
  j.end_object();
  write_file(path, j.str() + "\n");
}

std::string allocation_report_table(const AllocationReport& report,
                                    const LabelSpace& space) {
  std::string out;
  out += "category      prior    N_j   unit_pv     added_mass\n";
  for (const auto& a : report.categories) {
    char buf[128];
    std::snprintf(buf, sizeof(buf), "%-10s %8.5f %6lld %9.4f %14.4f%s\n",
                  space.name(a.category).c_str(), a.prior,
                  static_cast<long long>(a.new_pairs), a.unit_pv, a.added_mass,
                  a.floored ? "  (floor)" : "");
    out += buf;
  }
  char buf[160];
  std::snprintf(buf, sizeof(buf),
                "total: M=%.4f historical=%.4f added=%.4f floored_pairs=%lld\n",
                report.m, report.historical_mass, report.total_added,
                static_cast<long long>(report.floored_pairs));
  out += buf;
  return out;
}

void save_inference(const ClickDataset& ds,
                    const std::vector<std::vector<Prediction>>& per_query,
                    const std::filesystem::path& path) {
  if (per_query.size() != ds.size()) {
    throw Error("save_inference: predictions do not align with dataset");
  }
  std::string out;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    out += ds.records[i].text;
    out.push_back('\t');
    for (std::size_t p = 0; p < per_query[i].size(); ++p) {
      if (p > 0) out.push_back(',');
      out += ds.label_space.name(per_query[i][p].category);
      out.push_back(':');
      out += format_fixed(per_query[i][p].score, 6);
    }
    out.push_back('\n');
  }
  write_file(path, out);
}

std::vector<std::vector<std::int32_t>> load_inference_labels(
    const std::filesystem::path& path, const LabelSpace& space) {
  const std::string content = read_file(path);
  std::vector<std::vector<std::int32_t>> out;
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
    const std::size_t tab = line.find('\t');
    if (tab == std::string_view::npos) {
      throw ParseError(path.string() + ":" + std::to_string(line_no) +
                       ": missing TAB separator");
    }
    std::vector<std::int32_t> labels;
    std::string_view rest = line.substr(tab + 1);
    while (!rest.empty()) {
      const std::size_t comma = rest.find(',');
      std::string_view item = rest.substr(0, comma);
      rest = (comma == std::string_view::npos) ? std::string_view{}
                                               : rest.substr(comma + 1);
      const std::size_t colon = item.find(':');
      if (colon == std::string_view::npos || colon == 0) {
        throw ParseError(path.string() + ":" + std::to_string(line_no) +
                         ": expected <cat>:<score>");
      }
      const std::string cat(item.substr(0, colon));
      const std::int32_t idx = space.index_of(cat);
      if (idx < 0) {
        throw ParseError(path.string() + ":" + std::to_string(line_no) +
                         ": unknown category '" + cat + "'");
      }
      labels.push_back(idx);
    }
    std::sort(labels.begin(), labels.end());
    labels.erase(std::unique(labels.begin(), labels.end()), labels.end());
    out.push_back(std::move(labels));
  }
  return out;
}

}  // namespace ddme
