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
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace ddme {

/// Ordered category vocabulary; index <-> identifier is a bijection.
class LabelSpace {
 public:
  LabelSpace() = default;
  explicit LabelSpace(std::vector<std::string> categories);

  std::int32_t k() const { return static_cast<std::int32_t>(categories_.size()); }
  const std::string& name(std::int32_t index) const { return categories_.at(index); }
  const std::vector<std::string>& categories() const { return categories_; }

  /// -1 when the identifier is unknown.
  std::int32_t index_of(std::string_view name) const;

  /// Appends a new category; throws on duplicates.
  std::int32_t add(std::string name);

  bool operator==(const LabelSpace& other) const {
    return categories_ == other.categories_;
  }

 private:
  std::vector<std::string> categories_;
  std::unordered_map<std::string, std::int32_t> index_;
};

/// One query with its multi-label category set and page-view row. Labels are
/// sorted ascending; label_pv is parallel to labels (a label that was never
/// exposed carries 0).
struct QueryRecord {
  std::int64_t query_id = 0;
  std::string text;
  std::vector<std::int32_t> labels;
  std::vector<double> label_pv;

  double total_pv() const;
  double pv_of(std::int32_t category) const;
  bool has_label(std::int32_t category) const;

  bool operator==(const QueryRecord&) const = default;
};

struct ClickDataset {
  LabelSpace label_space;
  std::vector<QueryRecord> records;

  std::size_t size() const { return records.size(); }
  double total_pv_mass() const;

  /// Checks label indices, id uniqueness and pv/label alignment.
  void validate(bool require_labels = true) const;
};

bool datasets_equal(const ClickDataset& a, const ClickDataset& b);

enum class Band { high, middle, low };
std::string_view band_name(Band b);

/// Total-PV quantile cut points; records below q_low are low band, above
/// q_high are high band.
struct BandCuts {
  double q_low = 0.5;
  double q_high = 0.9;

  void validate() const;
};

/// Band per record (aligned with ds.records). Rank is by total PV ascending,
/// ties broken by query_id ascending; a record ranks low when its position is
/// below floor(q_low * n), high when at or above floor(q_high * n).
std::vector<Band> assign_bands(const ClickDataset& ds, const BandCuts& cuts);

Band band_of(const QueryRecord& record, const ClickDataset& ds,
             const BandCuts& cuts);

// Dataset file format, one record per line:
//   <query_text> TAB <cat>:<pv>[,<cat>:<pv>]*
// '#' lines are comments. PVs are non-negative integers unless
// allow_fractional_pv (the augmented-dataset grammar) is set.
ClickDataset load_dataset(const std::filesystem::path& path,
                          const LabelSpace* fixed_space = nullptr,
                          bool allow_fractional_pv = false);

/// Round-trips against load_dataset. pv_decimals = 0 writes integer PVs and
/// requires integral values; 6 is the augmented-dataset convention.
void save_dataset(const ClickDataset& ds, const std::filesystem::path& path,
                  int pv_decimals = 0);

/// Label-space file: one category identifier per line, order defines indices.
LabelSpace load_label_space(const std::filesystem::path& path);
void save_label_space(const LabelSpace& space,
                      const std::filesystem::path& path);

struct SyntheticSpec {
  std::int64_t n_queries = 1000;
  std::int32_t k_categories = 20;
  double zipf_exponent = 1.1;
  std::int32_t vocab_size = 400;
  double tail_label_dropout = 0.0;
  std::uint64_t seed = 0;

  void validate() const;
};

/// full: ground-truth labels and PVs. observed: full with labels of
/// low-frequency queries dropped at tail_label_dropout (never the last one).
/// heldout_t1 / heldout_t30 carry ground-truth labels; ~92% / ~55% of their
/// queries are drawn from the training queries, the rest are novel.
struct SyntheticCorpus {
  ClickDataset full;
  ClickDataset observed;
  ClickDataset heldout_t1;
  ClickDataset heldout_t30;
};

SyntheticCorpus generate_synthetic(const SyntheticSpec& spec);

}  // namespace ddme
