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

#include "ddme/student.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <numeric>
#include <thread>
#include <unordered_map>

#include "ddme/error.hpp"
#include "ddme/io.hpp"
#include "ddme/rng.hpp"

namespace ddme {

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

void StudentTrainConfig::validate() const {
  if (dim < 1) throw Error("student: dim must be >= 1");
  if (epochs < 1) throw Error("student: epochs must be >= 1");
  if (!(learning_rate > 0)) throw Error("student: learning_rate must be > 0");
  if (negative_mode == NegativeMode::sampled && negative_samples < 1) {
    throw Error("student: negative_samples must be >= 1 in sampled mode");
  }
  if (threads < 1) throw Error("student: threads must be >= 1");
}

double positive_weight(WeightMode mode, double pv) {
  if (mode == WeightMode::uniform) return 1.0;
  return pv > 0 ? std::log1p(pv) : 1.0;
}

std::vector<OvaTerm> build_full_terms(const QueryRecord& record, std::int32_t k,
                                      WeightMode mode) {
  std::vector<OvaTerm> terms;
  terms.reserve(static_cast<std::size_t>(k));
  std::size_t pos = 0;
  for (std::int32_t j = 0; j < k; ++j) {
    if (pos < record.labels.size() && record.labels[pos] == j) {
      terms.push_back({j, positive_weight(mode, record.label_pv[pos]), 1.0});
      ++pos;
    } else {
      terms.push_back({j, 1.0, 0.0});
    }
  }
  return terms;
}

namespace {

template <typename Real>
void average_embedding(const Matrix<Real>& embedding, const FeatureBag& bag,
                       std::vector<double>& hidden) {
  hidden.assign(embedding.cols(), 0.0);
  if (bag.indices.empty()) return;
  for (std::uint32_t idx : bag.indices) {
    const auto row = embedding.row(idx);
    for (std::size_t c = 0; c < row.size(); ++c) hidden[c] += row[c];
  }
  const double inv = 1.0 / static_cast<double>(bag.indices.size());
  for (double& h : hidden) h *= inv;
}

inline double bce_term(double p, double y) {
  const double pc = std::clamp(p, kSigmoidEps, 1.0 - kSigmoidEps);
  return -(y * std::log(pc) + (1.0 - y) * std::log(1.0 - pc));
}

}  // namespace

template <typename Real>
double student_record_loss(const StudentParamsT<Real>& params,
                           const FeatureBag& bag,
                           std::span<const OvaTerm> terms) {
  std::vector<double> hidden;
  average_embedding(params.embedding, bag, hidden);
  double loss = 0;
  for (const OvaTerm& t : terms) {
    const auto row = params.output.row(static_cast<std::size_t>(t.category));
    double s = 0;
    for (std::size_t c = 0; c < row.size(); ++c) s += row[c] * hidden[c];
    loss += t.weight * bce_term(sigmoid(s), t.y);
  }
  return loss;
}

template <typename Real>
double student_record_gradients(const StudentParamsT<Real>& params,
                                const FeatureBag& bag,
                                std::span<const OvaTerm> terms,
                                std::vector<double>& hidden,
                                std::vector<double>& score_grad,
                                std::vector<double>& hidden_grad) {
  average_embedding(params.embedding, bag, hidden);
  score_grad.assign(params.output.rows(), 0.0);
  hidden_grad.assign(params.output.cols(), 0.0);
  double loss = 0;
  for (const OvaTerm& t : terms) {
    const auto row = params.output.row(static_cast<std::size_t>(t.category));
    double s = 0;
    for (std::size_t c = 0; c < row.size(); ++c) s += row[c] * hidden[c];
    const double p = sigmoid(s);
    loss += t.weight * bce_term(p, t.y);
    const double g = t.weight * (p - t.y);
    score_grad[static_cast<std::size_t>(t.category)] += g;
    for (std::size_t c = 0; c < row.size(); ++c) hidden_grad[c] += g * row[c];
  }
  return loss;
}

template double student_record_loss<float>(const StudentParamsT<float>&,
                                           const FeatureBag&,
                                           std::span<const OvaTerm>);
template double student_record_loss<double>(const StudentParamsT<double>&,
                                            const FeatureBag&,
                                            std::span<const OvaTerm>);
template double student_record_gradients<float>(const StudentParamsT<float>&,
                                                const FeatureBag&,
                                                std::span<const OvaTerm>,
                                                std::vector<double>&,
                                                std::vector<double>&,
                                                std::vector<double>&);
template double student_record_gradients<double>(const StudentParamsT<double>&,
                                                 const FeatureBag&,
                                                 std::span<const OvaTerm>,
                                                 std::vector<double>&,
                                                 std::vector<double>&,
                                                 std::vector<double>&);

namespace {

WordFilter build_word_filter(const ClickDataset& ds,
                             const FeaturizerConfig& cfg) {
  std::unordered_map<std::string, std::int64_t> counts;
  for (const auto& rec : ds.records) {
    for (auto& tok : split_tokens(rec.text, cfg)) {
      ++counts[tok];
    }
  }
  WordFilter keep;
  keep.reserve(counts.size());
  for (const auto& [tok, count] : counts) {
    if (count >= cfg.min_word_count) keep.insert(fnv1a64(tok));
  }
  return keep;
}

std::vector<FeatureBag> featurize_corpus(const ClickDataset& ds,
                                         const FeaturizerConfig& cfg,
                                         int threads) {
  std::vector<FeatureBag> bags(ds.size());
  WordFilter filter;
  const WordFilter* filter_ptr = nullptr;
  if (cfg.min_word_count > 1) {
    filter = build_word_filter(ds, cfg);
    filter_ptr = &filter;
  }
  const int workers = std::max(1, threads);
  if (workers == 1 || ds.size() < 512) {
    for (std::size_t i = 0; i < ds.size(); ++i) {
      bags[i] = featurize(ds.records[i].text, cfg, filter_ptr);
    }
    return bags;
  }
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(workers));
  std::atomic<std::size_t> next{0};
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (;;) {
        const std::size_t i = next.fetch_add(256);
        if (i >= ds.size()) return;
        const std::size_t hi = std::min(ds.size(), i + 256);
        for (std::size_t j = i; j < hi; ++j) {
          bags[j] = featurize(ds.records[j].text, cfg, filter_ptr);
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  return bags;
}

// Builds the term list for one record visit. Sampled mode draws
// negative_samples negatives per positive, uniformly outside the label set.
void build_terms(const QueryRecord& rec, std::int32_t k,
                 const StudentTrainConfig& cfg, Rng& rng,
                 std::vector<OvaTerm>& terms) {
  terms.clear();
  if (cfg.negative_mode == NegativeMode::full_sigmoid) {
    std::size_t pos = 0;
    for (std::int32_t j = 0; j < k; ++j) {
      if (pos < rec.labels.size() && rec.labels[pos] == j) {
        terms.push_back(
            {j, positive_weight(cfg.weight_mode, rec.label_pv[pos]), 1.0});
        ++pos;
      } else {
        terms.push_back({j, 1.0, 0.0});
      }
    }
    return;
  }
  for (std::size_t i = 0; i < rec.labels.size(); ++i) {
    terms.push_back({rec.labels[i],
                     positive_weight(cfg.weight_mode, rec.label_pv[i]), 1.0});
  }
  const auto n_labels = static_cast<std::int32_t>(rec.labels.size());
  if (n_labels >= k) return;  // nothing to sample
  for (std::size_t i = 0; i < rec.labels.size(); ++i) {
    for (int m = 0; m < cfg.negative_samples; ++m) {
      std::int32_t j;
      do {
        j = static_cast<std::int32_t>(rng.below(static_cast<std::uint64_t>(k)));
      } while (rec.has_label(j));
      terms.push_back({j, 1.0, 0.0});
    }
  }
}

struct EpochShared {
  std::atomic<std::int64_t> step{0};
  std::atomic<bool> failed{false};
  std::int64_t failed_record = -1;
};

}  // namespace

StudentModel train_student(const ClickDataset& ds,
                           const StudentTrainConfig& cfg,
                           const FeaturizerConfig& featurizer_cfg,
                           TrainLog* log) {
  cfg.validate();
  featurizer_cfg.validate();
  if (ds.records.empty()) throw Error("train_student: empty dataset");
  const std::int32_t k = ds.label_space.k();
  if (k < 1) throw Error("train_student: empty label space");

  StudentModel model;
  model.featurizer = featurizer_cfg;
  model.label_space = ds.label_space;
  model.params.embedding =
      Matrix<float>(featurizer_cfg.bucket_count, static_cast<std::size_t>(cfg.dim));
  model.params.output = Matrix<float>(static_cast<std::size_t>(k),
                                      static_cast<std::size_t>(cfg.dim));

  // fastText-style init: small uniform embeddings, zero output.
  {
    Rng init_rng(derive_seed(cfg.seed, "student-init"));
    const double scale = 0.5 / static_cast<double>(cfg.dim);
    for (float& v : model.params.embedding.data()) {
      v = static_cast<float>(init_rng.range(-scale, scale));
    }
  }

  const std::vector<FeatureBag> bags =
      featurize_corpus(ds, featurizer_cfg, cfg.deterministic ? 2 : cfg.threads);

  const int workers = cfg.deterministic ? 1 : std::max(1, cfg.threads);
  const std::int64_t total_steps =
      static_cast<std::int64_t>(ds.size()) * cfg.epochs;

  std::vector<std::size_t> order(ds.size());
  std::iota(order.begin(), order.end(), 0);
  Rng shuffle_rng(derive_seed(cfg.seed, "student-shuffle"));

  if (log != nullptr) log->epoch_loss.clear();

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    shuffle_rng.shuffle(order);
    EpochShared shared;
    std::vector<double> worker_loss(static_cast<std::size_t>(workers), 0.0);

    auto body = [&](int worker_id) {
      Rng rng(derive_seed(cfg.seed, "student-epoch") ^
              (static_cast<std::uint64_t>(epoch) << 32) ^
              static_cast<std::uint64_t>(worker_id));
      std::vector<OvaTerm> terms;
      std::vector<double> hidden, score_grad, hidden_grad;
      double loss_sum = 0;
      for (std::size_t pos = static_cast<std::size_t>(worker_id);
           pos < order.size(); pos += static_cast<std::size_t>(workers)) {
        if (shared.failed.load(std::memory_order_relaxed)) return;
        const std::size_t i = order[pos];
        const QueryRecord& rec = ds.records[i];
        build_terms(rec, k, cfg, rng, terms);
        const double loss = student_record_gradients(
            model.params, bags[i], terms, hidden, score_grad, hidden_grad);
        if (!std::isfinite(loss)) {
          shared.failed.store(true);
          shared.failed_record = rec.query_id;
          return;
        }
        loss_sum += loss;

        const std::int64_t step =
            shared.step.fetch_add(1, std::memory_order_relaxed);
        const std::int64_t global_step =
            static_cast<std::int64_t>(epoch) *
                static_cast<std::int64_t>(ds.size()) +
            step;
        const double lr =
            cfg.learning_rate * (1.0 - static_cast<double>(global_step) /
                                           static_cast<double>(total_steps));

        for (const OvaTerm& t : terms) {
          const auto j = static_cast<std::size_t>(t.category);
          const double g = score_grad[j];
          if (g == 0) continue;
          auto row = model.params.output.row(j);
          for (std::size_t c = 0; c < row.size(); ++c) {
            row[c] -= static_cast<float>(lr * g * hidden[c]);
          }
          score_grad[j] = 0;  // terms may repeat a category
        }
        if (!bags[i].indices.empty()) {
          const double scale =
              lr / static_cast<double>(bags[i].indices.size());
          for (std::uint32_t idx : bags[i].indices) {
            auto row = model.params.embedding.row(idx);
            for (std::size_t c = 0; c < row.size(); ++c) {
              row[c] -= static_cast<float>(scale * hidden_grad[c]);
            }
          }
        }
      }
      worker_loss[static_cast<std::size_t>(worker_id)] = loss_sum;
    };

    if (workers == 1) {
      body(0);
    } else {
      std::vector<std::thread> pool;
      pool.reserve(static_cast<std::size_t>(workers));
      for (int w = 0; w < workers; ++w) pool.emplace_back(body, w);
      for (auto& t : pool) t.join();
    }
    if (shared.failed.load()) {
      throw Error("train_student: non-finite loss at record " +
                  std::to_string(shared.failed_record));
    }
    if (log != nullptr) {
      const double total =
          std::accumulate(worker_loss.begin(), worker_loss.end(), 0.0);
      log->epoch_loss.push_back(total / static_cast<double>(ds.size()));
    }
  }

  for (float v : model.params.output.data()) {
    if (!std::isfinite(v)) throw Error("train_student: non-finite parameters");
  }
  for (float v : model.params.embedding.data()) {
    if (!std::isfinite(v)) throw Error("train_student: non-finite parameters");
  }
  return model;
}

namespace {

std::vector<double> student_scores(const StudentModel& model,
                                   const FeatureBag& bag) {
  std::vector<double> hidden;
  average_embedding(model.params.embedding, bag, hidden);
  std::vector<double> scores(static_cast<std::size_t>(model.k()));
  for (std::size_t j = 0; j < scores.size(); ++j) {
    const auto row = model.params.output.row(j);
    double s = 0;
    for (std::size_t c = 0; c < row.size(); ++c) s += row[c] * hidden[c];
    scores[j] = sigmoid(s);
  }
  return scores;
}

std::vector<Prediction> rank_topk(std::span<const double> scores, int topk,
                                  double threshold) {
  std::vector<Prediction> preds;
  for (std::size_t j = 0; j < scores.size(); ++j) {
    if (scores[j] >= threshold) {
      preds.push_back({static_cast<std::int32_t>(j), scores[j]});
    }
  }
  std::sort(preds.begin(), preds.end(), [](const Prediction& a, const Prediction& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.category < b.category;
  });
  if (static_cast<int>(preds.size()) > topk) {
    preds.resize(static_cast<std::size_t>(topk));
  }
  return preds;
}

}  // namespace

std::vector<Prediction> predict_topk(const StudentModel& model,
                                     const FeatureBag& bag, int topk,
                                     double threshold) {
  if (topk < 1) throw Error("predict_topk: topk must be >= 1");
  if (threshold < 0 || threshold > 1) {
    throw Error("predict_topk: threshold must be in [0,1]");
  }
  return rank_topk(student_scores(model, bag), topk, threshold);
}

std::vector<Prediction> predict_topk(const StudentModel& model,
                                     std::string_view text, int topk,
                                     double threshold) {
  return predict_topk(model, featurize(text, model.featurizer), topk,
                      threshold);
}

namespace {

constexpr std::string_view kStudentMagic = "DDMESTU1";
constexpr std::uint32_t kStudentVersion = 1;

void write_featurizer_block(BinaryWriter& w, const FeaturizerConfig& cfg) {
  w.u32(static_cast<std::uint32_t>(cfg.word_ngram_max));
  w.u32(static_cast<std::uint32_t>(cfg.char_ngram_min));
  w.u32(static_cast<std::uint32_t>(cfg.char_ngram_max));
  w.u32(static_cast<std::uint32_t>(cfg.min_word_count));
  w.u8(cfg.lowercase ? 1 : 0);
}

void read_featurizer_block(BinaryReader& r, FeaturizerConfig& cfg) {
  cfg.word_ngram_max = static_cast<int>(r.u32());
  cfg.char_ngram_min = static_cast<int>(r.u32());
  cfg.char_ngram_max = static_cast<int>(r.u32());
  cfg.min_word_count = static_cast<int>(r.u32());
  cfg.lowercase = r.u8() != 0;
}

void write_matrix(BinaryWriter& w, const Matrix<float>& m) {
  for (float v : m.data()) w.f32(v);
}

// Guards the declared matrix payload against the actual file size before
// allocating, so absurd dimensions fail cleanly.
void check_payload(const BinaryReader& r, std::uint64_t floats,
                   std::string_view what) {
  if (floats > r.remaining() / 4) {
    throw Error(std::string("model file too small for declared ") +
                std::string(what) + " (need " + std::to_string(floats) +
                " float32 values)");
  }
}

Matrix<float> read_matrix(BinaryReader& r, std::size_t rows, std::size_t cols) {
  Matrix<float> m;
  try {
    m = Matrix<float>(rows, cols);
  } catch (const std::bad_alloc&) {
    throw Error("cannot allocate " + std::to_string(rows) + "x" +
                std::to_string(cols) + " matrix");
  }
  for (float& v : m.data()) v = r.f32();
  return m;
}

}  // namespace

void save_model(const StudentModel& model, const std::filesystem::path& path) {
  BinaryWriter w;
  w.bytes(kStudentMagic);
  w.u32(kStudentVersion);
  w.u32(static_cast<std::uint32_t>(model.dim()));
  w.u64(model.featurizer.bucket_count);
  w.u32(static_cast<std::uint32_t>(model.k()));
  write_featurizer_block(w, model.featurizer);
  for (const auto& name : model.label_space.categories()) w.str(name);
  write_matrix(w, model.params.embedding);
  write_matrix(w, model.params.output);
  w.to_file(path);
}

StudentModel load_model(const std::filesystem::path& path) {
  const std::string content = read_file(path);
  BinaryReader r(content);
  if (content.size() < kStudentMagic.size() ||
      std::string_view(content).substr(0, kStudentMagic.size()) !=
          kStudentMagic) {
    throw ParseError(path.string() + ": bad magic, not a student model file");
  }
  for (std::size_t i = 0; i < kStudentMagic.size(); ++i) r.u8();
  const std::uint32_t version = r.u32();
  if (version != kStudentVersion) {
    throw ParseError(path.string() + ": unsupported model version " +
                     std::to_string(version));
  }
  StudentModel model;
  const std::uint32_t dim = r.u32();
  const std::uint64_t buckets = r.u64();
  const std::uint32_t k = r.u32();
  if (dim == 0 || buckets < 2 || k == 0) {
    throw ParseError(path.string() + ": degenerate model dimensions");
  }
  model.featurizer.bucket_count = buckets;
  read_featurizer_block(r, model.featurizer);
  model.featurizer.validate();
  for (std::uint32_t j = 0; j < k; ++j) model.label_space.add(r.str());
  check_payload(r, (buckets + k) * static_cast<std::uint64_t>(dim),
                "embedding/output matrices");
  model.params.embedding = read_matrix(r, buckets, dim);
  model.params.output = read_matrix(r, k, dim);
  if (!r.done()) {
    throw ParseError(path.string() + ": trailing bytes after model payload");
  }
  return model;
}

}  // namespace ddme
