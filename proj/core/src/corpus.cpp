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

#include "ddme/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <unordered_set>

#include "ddme/error.hpp"
#include "ddme/io.hpp"
#include "ddme/rng.hpp"

namespace ddme {

LabelSpace::LabelSpace(std::vector<std::string> categories) {
  for (auto& c : categories) {
    add(std::move(c));
  }
}

std::int32_t LabelSpace::index_of(std::string_view name) const {
  auto it = index_.find(std::string(name));
  return it == index_.end() ? -1 : it->second;
}

std::int32_t LabelSpace::add(std::string name) {
  if (name.empty()) {
    throw Error("label space: empty category identifier");
  }
  if (name.find_first_of(",:\t\n") != std::string::npos) {
    throw Error("label space: identifier '" + name +
                "' contains a reserved character");
  }
  auto [it, inserted] =
      index_.emplace(name, static_cast<std::int32_t>(categories_.size()));
  if (!inserted) {
    throw Error("label space: duplicate category '" + name + "'");
  }
  categories_.push_back(std::move(name));
  return it->second;
}

double QueryRecord::total_pv() const {
  double sum = 0;
  for (double v : label_pv) sum += v;
  return sum;
}

double QueryRecord::pv_of(std::int32_t category) const {
  auto it = std::lower_bound(labels.begin(), labels.end(), category);
  if (it == labels.end() || *it != category) return 0;
  return label_pv[static_cast<std::size_t>(it - labels.begin())];
}

bool QueryRecord::has_label(std::int32_t category) const {
  return std::binary_search(labels.begin(), labels.end(), category);
}

double ClickDataset::total_pv_mass() const {
  double sum = 0;
  for (const auto& r : records) sum += r.total_pv();
  return sum;
}

void ClickDataset::validate(bool require_labels) const {
  const std::int32_t k = label_space.k();
  std::unordered_set<std::int64_t> seen_ids;
  seen_ids.reserve(records.size());
  for (const auto& r : records) {
    if (require_labels && r.labels.empty()) {
      throw Error("record " + std::to_string(r.query_id) + " has no labels");
    }
    if (r.labels.size() != r.label_pv.size()) {
      throw Error("record " + std::to_string(r.query_id) +
                  ": labels/pv misaligned");
    }
    if (!std::is_sorted(r.labels.begin(), r.labels.end()) ||
        std::adjacent_find(r.labels.begin(), r.labels.end()) !=
            r.labels.end()) {
      throw Error("record " + std::to_string(r.query_id) +
                  ": labels not sorted unique");
    }
    for (std::size_t i = 0; i < r.labels.size(); ++i) {
      if (r.labels[i] < 0 || r.labels[i] >= k) {
        throw Error("record " + std::to_string(r.query_id) +
                    ": label index out of range");
      }
      if (!(r.label_pv[i] >= 0) || !std::isfinite(r.label_pv[i])) {
        throw Error("record " + std::to_string(r.query_id) + ": negative PV");
      }
    }
    if (!seen_ids.insert(r.query_id).second) {
      throw Error("duplicate query_id " + std::to_string(r.query_id));
    }
  }
}

bool datasets_equal(const ClickDataset& a, const ClickDataset& b) {
  return a.label_space == b.label_space && a.records == b.records;
}

std::string_view band_name(Band b) {
  switch (b) {
    case Band::high: return "high";
    case Band::middle: return "middle";
    case Band::low: return "low";
  }
  return "?";
}

void BandCuts::validate() const {
  if (!(0 < q_low && q_low < q_high && q_high < 1)) {
    throw Error("band cuts: need 0 < q_low < q_high < 1");
  }
}

std::vector<Band> assign_bands(const ClickDataset& ds, const BandCuts& cuts) {
  cuts.validate();
  const std::size_t n = ds.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::vector<double> totals(n);
  for (std::size_t i = 0; i < n; ++i) totals[i] = ds.records[i].total_pv();
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (totals[a] != totals[b]) return totals[a] < totals[b];
    return ds.records[a].query_id < ds.records[b].query_id;
  });
  const auto i_low = static_cast<std::size_t>(cuts.q_low * static_cast<double>(n));
  const auto i_high = static_cast<std::size_t>(cuts.q_high * static_cast<double>(n));
  std::vector<Band> bands(n, Band::low);
  for (std::size_t pos = 0; pos < n; ++pos) {
    bands[order[pos]] = pos < i_low    ? Band::low
                        : pos < i_high ? Band::middle
                                       : Band::high;
  }
  return bands;
}

Band band_of(const QueryRecord& record, const ClickDataset& ds,
             const BandCuts& cuts) {
  const std::vector<Band> bands = assign_bands(ds, cuts);
  for (std::size_t i = 0; i < ds.size(); ++i) {
    if (ds.records[i].query_id == record.query_id) return bands[i];
  }
  throw Error("band_of: record " + std::to_string(record.query_id) +
              " not in dataset");
}

namespace {

[[noreturn]] void malformed(const std::filesystem::path& path, std::size_t line,
                            const std::string& what) {
  throw ParseError(path.string() + ":" + std::to_string(line) + ": " + what);
}

double parse_pv(const std::string& s, bool allow_fractional,
                const std::filesystem::path& path, std::size_t line) {
  if (s.empty()) malformed(path, line, "empty PV value");
  if (s[0] == '-') malformed(path, line, "negative PV '" + s + "'");
  bool dot = false;
  for (char c : s) {
    if (c == '.') {
      if (dot || !allow_fractional) {
        malformed(path, line, "bad PV value '" + s + "'");
      }
      dot = true;
    } else if (c < '0' || c > '9') {
      malformed(path, line, "bad PV value '" + s + "'");
    }
  }
  try {
    return std::stod(s);
  } catch (const std::exception&) {
    malformed(path, line, "bad PV value '" + s + "'");
  }
}

}  // namespace

ClickDataset load_dataset(const std::filesystem::path& path,
                          const LabelSpace* fixed_space,
                          bool allow_fractional_pv) {
  const std::string content = read_file(path);
  ClickDataset ds;
  if (fixed_space != nullptr) ds.label_space = *fixed_space;

  std::size_t line_no = 0;
  std::size_t begin = 0;
  std::vector<std::pair<std::int32_t, double>> pairs;
  while (begin <= content.size()) {
    const std::size_t end = content.find('\n', begin);
    std::string_view line(content.data() + begin,
                          (end == std::string::npos ? content.size() : end) -
                              begin);
    begin = (end == std::string::npos) ? content.size() + 1 : end + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty() || line.front() == '#') continue;

    const std::size_t tab = line.find('\t');
    if (tab == std::string_view::npos) {
      malformed(path, line_no, "missing TAB separator");
    }
    QueryRecord rec;
    rec.query_id = static_cast<std::int64_t>(ds.records.size());
    rec.text = std::string(line.substr(0, tab));

    pairs.clear();
    std::string_view rest = line.substr(tab + 1);
    if (rest.empty()) malformed(path, line_no, "no category:pv pairs");
    while (!rest.empty()) {
      const std::size_t comma = rest.find(',');
      std::string_view item = rest.substr(0, comma);
      rest = (comma == std::string_view::npos) ? std::string_view{}
                                               : rest.substr(comma + 1);
      const std::size_t colon = item.find(':');
      if (colon == std::string_view::npos || colon == 0) {
        malformed(path, line_no, "expected <cat>:<pv>, got '" +
                                     std::string(item) + "'");
      }
      const std::string cat(item.substr(0, colon));
      std::int32_t idx = ds.label_space.index_of(cat);
      if (idx < 0) {
        if (fixed_space != nullptr) {
          malformed(path, line_no, "unknown category '" + cat + "'");
        }
        idx = ds.label_space.add(cat);
      }
      const double pv = parse_pv(std::string(item.substr(colon + 1)),
                                 allow_fractional_pv, path, line_no);
      pairs.emplace_back(idx, pv);
    }
    std::sort(pairs.begin(), pairs.end());
    for (std::size_t i = 1; i < pairs.size(); ++i) {
      if (pairs[i].first == pairs[i - 1].first) {
        malformed(path, line_no, "duplicate category in record");
      }
    }
    rec.labels.reserve(pairs.size());
    rec.label_pv.reserve(pairs.size());
    for (const auto& [idx, pv] : pairs) {
      rec.labels.push_back(idx);
      rec.label_pv.push_back(pv);
    }
    ds.records.push_back(std::move(rec));
  }
  if (ds.records.empty()) {
    throw ParseError(path.string() + ": empty dataset");
  }
  ds.validate();
  return ds;
}

void save_dataset(const ClickDataset& ds, const std::filesystem::path& path,
                  int pv_decimals) {
  std::string out;
  for (const auto& r : ds.records) {
    if (r.text.find('\t') != std::string::npos ||
        r.text.find('\n') != std::string::npos) {
      throw Error("record " + std::to_string(r.query_id) +
                  ": query text contains a reserved character");
    }
    out += r.text;
    out.push_back('\t');
    for (std::size_t i = 0; i < r.labels.size(); ++i) {
      if (i > 0) out.push_back(',');
      out += ds.label_space.name(r.labels[i]);
      out.push_back(':');
      const double v = r.label_pv[i];
      if (pv_decimals == 0) {
        if (v != std::floor(v)) {
          throw Error("record " + std::to_string(r.query_id) +
                      ": fractional PV in integer dataset");
        }
        out += std::to_string(static_cast<long long>(v));
      } else {
        out += format_fixed(v, pv_decimals);
      }
    }
    out.push_back('\n');
  }
  write_file(path, out);
}

LabelSpace load_label_space(const std::filesystem::path& path) {
  const std::string content = read_file(path);
  LabelSpace space;
  std::size_t begin = 0;
  while (begin < content.size()) {
    const std::size_t end = content.find('\n', begin);
    std::string_view line(content.data() + begin,
                          (end == std::string::npos ? content.size() : end) -
                              begin);
    begin = (end == std::string::npos) ? content.size() : end + 1;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty() || line.front() == '#') continue;
    space.add(std::string(line));
  }
  if (space.k() == 0) {
    throw ParseError(path.string() + ": empty label space");
  }
  return space;
}

void save_label_space(const LabelSpace& space,
                      const std::filesystem::path& path) {
  std::string out;
  for (const auto& c : space.categories()) {
    out += c;
    out.push_back('\n');
  }
  write_file(path, out);
}

void SyntheticSpec::validate() const {
  if (n_queries < 1) throw Error("synthetic: n_queries must be >= 1");
  if (k_categories < 1) throw Error("synthetic: k_categories must be >= 1");
  if (!(zipf_exponent > 0)) throw Error("synthetic: zipf_exponent must be > 0");
  if (vocab_size < 1) throw Error("synthetic: vocab_size must be >= 1");
  if (tail_label_dropout < 0 || tail_label_dropout > 1) {
    throw Error("synthetic: tail_label_dropout must be in [0,1]");
  }
}

namespace {

// Corpus shape constants. Category evidence is morphological: every category
// owns a stem, and queries mention it through suffixed variants. Head queries
// use the common variants; tail queries mostly use rare variants that never
// co-occur with an intact label elsewhere, so a whole-word memorizer cannot
// recover a dropped tail label while a subword model can still read the stem.
constexpr int kClusterSize = 5;
constexpr double kCategoryZipf = 0.5;      // category popularity skew
constexpr double kHeadPvMass = 100000.0;   // PV of the top-ranked query
constexpr double kPrimaryPvShare = 0.7;
constexpr double kCoLabelSameCluster = 0.25;
constexpr double kSpecificTokenProb = 0.7;  // vs cluster-shared stem
constexpr double kExtraPrimaryTokenProb = 0.5;
constexpr double kNoiseTokenProb = 0.45;
constexpr double kTailRareSuffixProb = 0.95;
constexpr int kMaxQueryTokens = 5;
constexpr double kTailQuantile = 0.5;       // dropout applies below this
constexpr double kT1SeenShare = 0.92;
constexpr double kT30SeenShare = 0.55;

constexpr std::string_view kCommonSuffixes[] = {"a",  "el", "in", "or",
                                                "us", "ik", "em"};

struct Vocab {
  std::vector<std::string> category_stems;  // per category
  std::vector<std::string> cluster_stems;   // per cluster
  std::vector<std::string> noise_stems;
};

std::string make_stem(Rng& rng, std::unordered_set<std::string>& used) {
  static constexpr std::string_view kConsonants = "bdfgklmnprstvz";
  static constexpr std::string_view kVowels = "aeiou";
  for (int attempt = 0;; ++attempt) {
    const int syllables = 2 + static_cast<int>(rng.below(2)) +
                          (attempt > 8 ? 1 : 0);
    std::string t;
    for (int s = 0; s < syllables; ++s) {
      t.push_back(kConsonants[rng.below(kConsonants.size())]);
      t.push_back(kVowels[rng.below(kVowels.size())]);
    }
    if (used.insert(t).second) return t;
  }
}

Vocab build_vocab(const SyntheticSpec& spec, Rng& rng) {
  const auto k = static_cast<std::size_t>(spec.k_categories);
  const std::size_t clusters = (k + kClusterSize - 1) / kClusterSize;
  const std::size_t suffixes = std::size(kCommonSuffixes) + 5;
  // vocab_size approximates the distinct-token count; stems beyond the
  // category/cluster needs become noise stems
  const std::size_t stems = std::max(
      k + clusters + 4, static_cast<std::size_t>(spec.vocab_size) / suffixes);
  std::unordered_set<std::string> used;
  Vocab v;
  for (std::size_t i = 0; i < k; ++i) {
    v.category_stems.push_back(make_stem(rng, used));
  }
  for (std::size_t i = 0; i < clusters; ++i) {
    v.cluster_stems.push_back(make_stem(rng, used));
  }
  for (std::size_t i = k + clusters; i < stems; ++i) {
    v.noise_stems.push_back(make_stem(rng, used));
  }
  if (v.noise_stems.empty()) v.noise_stems.push_back(make_stem(rng, used));
  return v;
}

// Head queries reuse the handful of common suffixes, so their variants are
// frequent words a memorizer can look up. Tail queries mostly carry ad-hoc
// CVC suffixes, which makes the surface form effectively unique: only the
// stem's character n-grams tie it back to the category.
std::string make_variant(const std::string& stem, bool tail, Rng& rng) {
  static constexpr std::string_view kConsonants = "bdfgklmnprstvz";
  static constexpr std::string_view kVowels = "aeiou";
  std::string t = stem;
  if (tail && rng.bernoulli(kTailRareSuffixProb)) {
    t.push_back(kConsonants[rng.below(kConsonants.size())]);
    t.push_back(kVowels[rng.below(kVowels.size())]);
    t.push_back(kConsonants[rng.below(kConsonants.size())]);
  } else {
    t += kCommonSuffixes[rng.below(std::size(kCommonSuffixes))];
  }
  return t;
}

struct QueryDraw {
  std::vector<std::int32_t> labels;  // primary first, unsorted
  std::string text;
};

// Labels plus 1-5 tokens of text: one stem variant per label (specific or
// cluster-shared stem), an optional second primary variant and an optional
// noise token.
QueryDraw draw_query(const SyntheticSpec& spec, const Vocab& vocab,
                     std::span<const double> category_cum,
                     std::span<const std::int32_t> category_by_rank, bool tail,
                     Rng& rng) {
  const std::int32_t k = spec.k_categories;
  QueryDraw q;

  const auto rank = rng.weighted_index(category_cum);
  const std::int32_t primary = category_by_rank[rank];
  q.labels.push_back(primary);

  int want = 1;
  const double u = rng.unit();
  if (k >= 4 && u >= 0.90) want = 4;
  else if (k >= 3 && u >= 0.70) want = 3;
  else if (k >= 2 && u >= 0.40) want = 2;

  const auto cluster_of = [&](std::int32_t c) {
    return static_cast<std::size_t>(c) / kClusterSize;
  };
  int attempts = 0;
  while (static_cast<int>(q.labels.size()) < want && attempts < 64) {
    ++attempts;
    std::int32_t cand;
    if (rng.bernoulli(kCoLabelSameCluster)) {
      const std::size_t cl = cluster_of(primary);
      const std::int32_t lo = static_cast<std::int32_t>(cl * kClusterSize);
      const std::int32_t hi = std::min<std::int32_t>(lo + kClusterSize, k);
      cand = lo + static_cast<std::int32_t>(rng.below(
                      static_cast<std::uint64_t>(hi - lo)));
    } else {
      cand = static_cast<std::int32_t>(rng.below(static_cast<std::uint64_t>(k)));
    }
    if (std::find(q.labels.begin(), q.labels.end(), cand) == q.labels.end()) {
      q.labels.push_back(cand);
    }
  }

  std::vector<std::string> tokens;
  for (std::int32_t label : q.labels) {
    if (static_cast<int>(tokens.size()) >= kMaxQueryTokens) break;
    const bool specific = rng.bernoulli(kSpecificTokenProb);
    const std::string& stem =
        specific ? vocab.category_stems[static_cast<std::size_t>(label)]
                 : vocab.cluster_stems[cluster_of(label)];
    tokens.push_back(make_variant(stem, tail, rng));
  }
  if (static_cast<int>(tokens.size()) < kMaxQueryTokens &&
      rng.bernoulli(kExtraPrimaryTokenProb)) {
    tokens.push_back(make_variant(
        vocab.category_stems[static_cast<std::size_t>(primary)], tail, rng));
  }
  if (static_cast<int>(tokens.size()) < kMaxQueryTokens &&
      rng.bernoulli(kNoiseTokenProb)) {
    tokens.push_back(make_variant(
        vocab.noise_stems[rng.below(vocab.noise_stems.size())], tail, rng));
  }
  rng.shuffle(tokens);

  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i > 0) q.text.push_back(' ');
    q.text += tokens[i];
  }
  return q;
}

// Integer PV split: primary gets ~kPrimaryPvShare, the rest is divided
// evenly; remainders go to the largest shares first so the total is exact.
std::vector<double> split_pv(double total, std::size_t n_labels) {
  std::vector<double> shares(n_labels);
  if (n_labels == 1) {
    shares[0] = 1.0;
  } else {
    shares[0] = kPrimaryPvShare;
    for (std::size_t i = 1; i < n_labels; ++i) {
      shares[i] = (1.0 - kPrimaryPvShare) / static_cast<double>(n_labels - 1);
    }
  }
  std::vector<double> out(n_labels);
  double assigned = 0;
  for (std::size_t i = 0; i < n_labels; ++i) {
    out[i] = std::floor(shares[i] * total);
    assigned += out[i];
  }
  std::size_t i = 0;
  while (assigned + 0.5 < total) {
    out[i % n_labels] += 1;
    assigned += 1;
    ++i;
  }
  return out;
}

QueryRecord finalize_record(std::int64_t id, const QueryDraw& draw,
                            const std::vector<double>& pv_by_label_pos) {
  QueryRecord rec;
  rec.query_id = id;
  rec.text = draw.text;
  std::vector<std::pair<std::int32_t, double>> pairs;
  pairs.reserve(draw.labels.size());
  for (std::size_t i = 0; i < draw.labels.size(); ++i) {
    pairs.emplace_back(draw.labels[i], pv_by_label_pos[i]);
  }
  std::sort(pairs.begin(), pairs.end());
  for (const auto& [label, pv] : pairs) {
    rec.labels.push_back(label);
    rec.label_pv.push_back(pv);
  }
  return rec;
}

ClickDataset make_heldout(const ClickDataset& full, const Vocab& vocab,
                          const SyntheticSpec& spec,
                          std::span<const double> category_cum,
                          std::span<const std::int32_t> category_by_rank,
                          const std::unordered_set<std::string>& full_texts,
                          double seen_share, Rng& rng) {
  const std::size_t size =
      std::max<std::size_t>(1, static_cast<std::size_t>(spec.n_queries) / 10);
  const auto n_seen = static_cast<std::size_t>(
      std::llround(seen_share * static_cast<double>(size)));
  const std::size_t n_novel = size - n_seen;

  // PV-weighted sample of training queries, without replacement.
  std::vector<double> cum(full.size());
  double acc = 0;
  for (std::size_t i = 0; i < full.size(); ++i) {
    acc += full.records[i].total_pv();
    cum[i] = acc;
  }
  std::vector<QueryRecord> picked;
  std::unordered_set<std::size_t> taken;
  std::size_t attempts = 0;
  while (picked.size() < n_seen && attempts < 64 * size) {
    ++attempts;
    const std::size_t idx = rng.weighted_index(cum);
    if (taken.insert(idx).second) picked.push_back(full.records[idx]);
  }
  if (picked.size() < n_seen) {
    // fill from the highest-PV queries not yet taken
    std::vector<std::size_t> order(full.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      const double pa = full.records[a].total_pv();
      const double pb = full.records[b].total_pv();
      if (pa != pb) return pa > pb;
      return a < b;
    });
    for (std::size_t idx : order) {
      if (picked.size() >= n_seen) break;
      if (taken.insert(idx).second) picked.push_back(full.records[idx]);
    }
  }

  std::unordered_set<std::string> novel_texts;
  for (std::size_t i = 0; i < n_novel; ++i) {
    QueryDraw draw;
    for (int attempt = 0; attempt < 100; ++attempt) {
      draw = draw_query(spec, vocab, category_cum, category_by_rank,
                        /*tail=*/true, rng);
      if (!full_texts.contains(draw.text) && !novel_texts.contains(draw.text)) {
        break;
      }
    }
    novel_texts.insert(draw.text);
    // Unexposed query: ground-truth labels, no page views yet.
    picked.push_back(finalize_record(
        0, draw, std::vector<double>(draw.labels.size(), 0.0)));
  }

  rng.shuffle(picked);
  ClickDataset out;
  out.label_space = full.label_space;
  out.records = std::move(picked);
  for (std::size_t i = 0; i < out.records.size(); ++i) {
    out.records[i].query_id = static_cast<std::int64_t>(i);
  }
  return out;
}

}  // namespace

SyntheticCorpus generate_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  Rng rng(spec.seed);

  const std::int32_t k = spec.k_categories;
  LabelSpace space;
  for (std::int32_t j = 0; j < k; ++j) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "c%03d", j);
    space.add(buf);
  }

  const Vocab vocab = build_vocab(spec, rng);

  // Category popularity: mild Zipf over a shuffled rank order.
  std::vector<std::int32_t> category_by_rank(static_cast<std::size_t>(k));
  std::iota(category_by_rank.begin(), category_by_rank.end(), 0);
  rng.shuffle(category_by_rank);
  std::vector<double> category_cum(static_cast<std::size_t>(k));
  double acc = 0;
  for (std::size_t r = 0; r < category_cum.size(); ++r) {
    acc += std::pow(static_cast<double>(r + 1), -kCategoryZipf);
    category_cum[r] = acc;
  }

  SyntheticCorpus corpus;
  corpus.full.label_space = space;
  const auto n = static_cast<std::size_t>(spec.n_queries);
  corpus.full.records.reserve(n);
  std::unordered_set<std::string> full_texts;
  // Total PV depends only on the query index, so low-band membership (the
  // dropout set) is known before the queries are drawn; tail queries get the
  // rare-variant token regime.
  std::vector<double> totals(n);
  for (std::size_t i = 0; i < n; ++i) {
    totals[i] = std::max(
        1.0, std::floor(kHeadPvMass /
                        std::pow(static_cast<double>(i + 1), spec.zipf_exponent)));
  }
  std::vector<bool> is_tail(n, false);
  {
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      if (totals[a] != totals[b]) return totals[a] < totals[b];
      return a < b;
    });
    const auto i_low =
        static_cast<std::size_t>(kTailQuantile * static_cast<double>(n));
    for (std::size_t pos = 0; pos < i_low; ++pos) is_tail[order[pos]] = true;
  }
  for (std::size_t i = 0; i < n; ++i) {
    const QueryDraw draw = draw_query(spec, vocab, category_cum,
                                      category_by_rank, is_tail[i], rng);
    const double total = totals[i];
    corpus.full.records.push_back(finalize_record(
        static_cast<std::int64_t>(i), draw, split_pv(total, draw.labels.size())));
    full_texts.insert(draw.text);
  }

  // observed = full with tail labels dropped; the highest-PV label survives.
  corpus.observed.label_space = space;
  corpus.observed.records = corpus.full.records;
  const std::vector<Band> bands =
      assign_bands(corpus.full, BandCuts{kTailQuantile, 0.9});
  for (std::size_t i = 0; i < n; ++i) {
    QueryRecord& rec = corpus.observed.records[i];
    if (bands[i] != Band::low || spec.tail_label_dropout <= 0) continue;
    std::vector<std::int32_t> kept_labels;
    std::vector<double> kept_pv;
    for (std::size_t j = 0; j < rec.labels.size(); ++j) {
      if (!rng.bernoulli(spec.tail_label_dropout)) {
        kept_labels.push_back(rec.labels[j]);
        kept_pv.push_back(rec.label_pv[j]);
      }
    }
    if (kept_labels.empty()) {
      const std::size_t best = static_cast<std::size_t>(
          std::max_element(rec.label_pv.begin(), rec.label_pv.end()) -
          rec.label_pv.begin());
      kept_labels.push_back(rec.labels[best]);
      kept_pv.push_back(rec.label_pv[best]);
    }
    rec.labels = std::move(kept_labels);
    rec.label_pv = std::move(kept_pv);
  }

  corpus.heldout_t1 =
      make_heldout(corpus.full, vocab, spec, category_cum, category_by_rank,
                   full_texts, kT1SeenShare, rng);
  corpus.heldout_t30 =
      make_heldout(corpus.full, vocab, spec, category_cum, category_by_rank,
                   full_texts, kT30SeenShare, rng);

  corpus.full.validate();
  corpus.observed.validate();
  corpus.heldout_t1.validate();
  corpus.heldout_t30.validate();
  return corpus;
}

}  // namespace ddme
