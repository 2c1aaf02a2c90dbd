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

#include "ddme/experts.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "ddme/error.hpp"
#include "ddme/io.hpp"
#include "ddme/rng.hpp"

namespace ddme {

std::string_view expert_mode_name(ExpertMode m) {
  switch (m) {
    case ExpertMode::forward: return "forward";
    case ExpertMode::uniform: return "uniform";
    case ExpertMode::backward: return "backward";
  }
  return "?";
}

ExpertMode expert_mode_from_name(std::string_view name) {
  if (name == "forward") return ExpertMode::forward;
  if (name == "uniform") return ExpertMode::uniform;
  if (name == "backward") return ExpertMode::backward;
  throw Error("unknown expert mode '" + std::string(name) + "'");
}

void ExpertTrainConfig::validate() const {
  if (embed_dim < 1) throw Error("expert: embed_dim must be >= 1");
  if (hidden_dim < 1) throw Error("expert: hidden_dim must be >= 1");
  if (epochs < 1) throw Error("expert: epochs must be >= 1");
  if (batch_size < 1) throw Error("expert: batch_size must be >= 1");
  if (!(learning_rate > 0)) throw Error("expert: learning_rate must be > 0");
  if (!(alpha > 0)) throw Error("expert: alpha must be > 0");
  if (threads < 1) throw Error("expert: threads must be >= 1");
}

PVWeights compute_pv_weights(const QueryRecord& record, std::int32_t k) {
  if (k < 2) {
    throw Error("compute_pv_weights: k must be >= 2 for backward weights");
  }
  PVWeights w;
  w.forward.assign(static_cast<std::size_t>(k), 0.0);
  const double mass = record.total_pv();
  if (mass > 0) {
    for (std::size_t i = 0; i < record.labels.size(); ++i) {
      w.forward[static_cast<std::size_t>(record.labels[i])] =
          record.label_pv[i] / mass;
    }
  }
  w.backward.resize(static_cast<std::size_t>(k));
  const double denom = static_cast<double>(k - 1);
  for (std::size_t j = 0; j < w.backward.size(); ++j) {
    w.backward[j] = (1.0 - w.forward[j]) / denom;
  }
  return w;
}

std::vector<double> expert_term_weights(const QueryRecord& record,
                                        std::int32_t k,
                                        const ExpertLossConfig& cfg) {
  switch (cfg.mode) {
    case ExpertMode::uniform:
      return std::vector<double>(static_cast<std::size_t>(k), 1.0);
    case ExpertMode::backward:
      return compute_pv_weights(record, k).backward;
    case ExpertMode::forward: {
      PVWeights w = compute_pv_weights(record, k);
      if (cfg.scheme == NegativeWeightScheme::literal) {
        return std::move(w.forward);
      }
      // smoothed: positives keep w_ij, negative terms get alpha / k
      std::vector<double> weights(static_cast<std::size_t>(k),
                                  cfg.alpha / static_cast<double>(k));
      for (std::int32_t label : record.labels) {
        weights[static_cast<std::size_t>(label)] =
            w.forward[static_cast<std::size_t>(label)];
      }
      return weights;
    }
  }
  throw Error("expert_term_weights: bad mode");
}

std::vector<double> dense_targets(const QueryRecord& record, std::int32_t k) {
  std::vector<double> y(static_cast<std::size_t>(k), 0.0);
  for (std::int32_t label : record.labels) {
    y[static_cast<std::size_t>(label)] = 1.0;
  }
  return y;
}

namespace {

template <typename Real>
void embed_average(const Matrix<Real>& embedding, const FeatureBag& bag,
                   std::vector<double>& input) {
  input.assign(embedding.cols(), 0.0);
  if (bag.indices.empty()) return;
  for (std::uint32_t idx : bag.indices) {
    const auto row = embedding.row(idx);
    for (std::size_t c = 0; c < row.size(); ++c) input[c] += row[c];
  }
  const double inv = 1.0 / static_cast<double>(bag.indices.size());
  for (double& v : input) v *= inv;
}

inline double bce_term(double p, double y) {
  const double pc = std::clamp(p, kSigmoidEps, 1.0 - kSigmoidEps);
  return -(y * std::log(pc) + (1.0 - y) * std::log(1.0 - pc));
}

template <typename Real>
void expert_forward(const ExpertParamsT<Real>& params, const FeatureBag& bag,
                    std::vector<double>& input, std::vector<double>& hidden_act,
                    std::vector<double>& scores) {
  embed_average(params.embedding, bag, input);
  const std::size_t h = params.w1.rows();
  hidden_act.assign(h, 0.0);
  for (std::size_t r = 0; r < h; ++r) {
    const auto row = params.w1.row(r);
    double z = params.b1[r];
    for (std::size_t c = 0; c < row.size(); ++c) z += row[c] * input[c];
    hidden_act[r] = std::tanh(z);
  }
  const std::size_t k = params.w2.rows();
  scores.assign(k, 0.0);
  for (std::size_t j = 0; j < k; ++j) {
    const auto row = params.w2.row(j);
    double s = params.b2[j];
    for (std::size_t c = 0; c < row.size(); ++c) s += row[c] * hidden_act[c];
    scores[j] = s;
  }
}

}  // namespace

template <typename Real>
double expert_record_loss(const ExpertParamsT<Real>& params,
                          const FeatureBag& bag,
                          std::span<const double> term_weights,
                          std::span<const double> targets) {
  std::vector<double> input, hidden_act, scores;
  expert_forward(params, bag, input, hidden_act, scores);
  double loss = 0;
  for (std::size_t j = 0; j < scores.size(); ++j) {
    loss += term_weights[j] * bce_term(sigmoid(scores[j]), targets[j]);
  }
  return loss;
}

template <typename Real>
double expert_record_gradients(const ExpertParamsT<Real>& params,
                               const FeatureBag& bag,
                               std::span<const double> term_weights,
                               std::span<const double> targets,
                               ExpertGradWork& work) {
  std::vector<double> scores;
  expert_forward(params, bag, work.input, work.hidden_act, scores);

  const std::size_t k = params.w2.rows();
  const std::size_t h = params.w1.rows();
  const std::size_t d = params.w1.cols();

  work.score_grad.assign(k, 0.0);
  double loss = 0;
  for (std::size_t j = 0; j < k; ++j) {
    const double p = sigmoid(scores[j]);
    loss += term_weights[j] * bce_term(p, targets[j]);
    work.score_grad[j] = term_weights[j] * (p - targets[j]);
  }

  // dL/da1 = W2^T g, then through tanh
  work.preact_grad.assign(h, 0.0);
  for (std::size_t j = 0; j < k; ++j) {
    const double g = work.score_grad[j];
    if (g == 0) continue;
    const auto row = params.w2.row(j);
    for (std::size_t c = 0; c < h; ++c) work.preact_grad[c] += g * row[c];
  }
  for (std::size_t c = 0; c < h; ++c) {
    work.preact_grad[c] *= 1.0 - work.hidden_act[c] * work.hidden_act[c];
  }

  work.input_grad.assign(d, 0.0);
  for (std::size_t r = 0; r < h; ++r) {
    const double g = work.preact_grad[r];
    if (g == 0) continue;
    const auto row = params.w1.row(r);
    for (std::size_t c = 0; c < d; ++c) work.input_grad[c] += g * row[c];
  }
  return loss;
}

template double expert_record_loss<float>(const ExpertParamsT<float>&,
                                          const FeatureBag&,
                                          std::span<const double>,
                                          std::span<const double>);
template double expert_record_loss<double>(const ExpertParamsT<double>&,
                                           const FeatureBag&,
                                           std::span<const double>,
                                           std::span<const double>);
template double expert_record_gradients<float>(const ExpertParamsT<float>&,
                                               const FeatureBag&,
                                               std::span<const double>,
                                               std::span<const double>,
                                               ExpertGradWork&);
template double expert_record_gradients<double>(const ExpertParamsT<double>&,
                                                const FeatureBag&,
                                                std::span<const double>,
                                                std::span<const double>,
                                                ExpertGradWork&);

namespace {

std::vector<FeatureBag> featurize_all(const ClickDataset& ds,
                                      const FeaturizerConfig& cfg) {
  std::vector<FeatureBag> bags(ds.size());
  WordFilter filter;
  const WordFilter* filter_ptr = nullptr;
  if (cfg.min_word_count > 1) {
    std::unordered_map<std::string, std::int64_t> counts;
    for (const auto& rec : ds.records) {
      for (auto& tok : split_tokens(rec.text, cfg)) ++counts[tok];
    }
    for (const auto& [tok, count] : counts) {
      if (count >= cfg.min_word_count) filter.insert(fnv1a64(tok));
    }
    filter_ptr = &filter;
  }
  for (std::size_t i = 0; i < ds.size(); ++i) {
    bags[i] = featurize(ds.records[i].text, cfg, filter_ptr);
  }
  return bags;
}

}  // namespace

ExpertModel train_expert(const ClickDataset& ds, ExpertMode mode,
                         const ExpertTrainConfig& cfg,
                         const FeaturizerConfig& featurizer_cfg,
                         TrainLog* log) {
  cfg.validate();
  featurizer_cfg.validate();
  if (ds.records.empty()) throw Error("train_expert: empty dataset");
  const std::int32_t k = ds.label_space.k();
  if (k < 2) throw Error("train_expert: need k >= 2");

  const auto d = static_cast<std::size_t>(cfg.embed_dim);
  const auto h = static_cast<std::size_t>(cfg.hidden_dim);

  ExpertModel model;
  model.mode = mode;
  model.featurizer = featurizer_cfg;
  model.label_space = ds.label_space;
  model.params.embedding = Matrix<float>(featurizer_cfg.bucket_count, d);
  model.params.w1 = Matrix<float>(h, d);
  model.params.b1.assign(h, 0.0f);
  model.params.w2 = Matrix<float>(static_cast<std::size_t>(k), h);
  model.params.b2.assign(static_cast<std::size_t>(k), 0.0f);

  {
    Rng init(derive_seed(cfg.seed, "expert-init") ^
             static_cast<std::uint64_t>(mode));
    // Embeddings start at zero: the random hidden layers break symmetry and
    // pull used rows away from the origin, while buckets never seen in
    // training stay exactly zero and cannot inject noise at inference.
    const double w1_scale =
        std::sqrt(6.0 / static_cast<double>(d + h));
    for (float& v : model.params.w1.data()) {
      v = static_cast<float>(init.range(-w1_scale, w1_scale));
    }
    const double w2_scale =
        std::sqrt(6.0 / static_cast<double>(h + static_cast<std::size_t>(k)));
    for (float& v : model.params.w2.data()) {
      v = static_cast<float>(init.range(-w2_scale, w2_scale));
    }
  }

  const std::vector<FeatureBag> bags = featurize_all(ds, featurizer_cfg);

  // Per-record term weights are fixed by the loss mode; compute them once.
  const ExpertLossConfig loss_cfg{mode, cfg.scheme, cfg.alpha};
  std::vector<std::vector<double>> weights(ds.size());
  std::vector<std::vector<double>> targets(ds.size());
  double weight_mass = 0;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    weights[i] = expert_term_weights(ds.records[i], k, loss_cfg);
    targets[i] = dense_targets(ds.records[i], k);
    for (double w : weights[i]) weight_mass += w;
  }
  // Step normalization: the modes put very different total weight on a
  // record (k for uniform, 1 for backward), which would starve the
  // low-weight losses at a shared learning rate. Scaling the step so the
  // mean per-record weight mass looks like uniform's k leaves each loss and
  // its optimum untouched.
  const double mean_mass = weight_mass / static_cast<double>(ds.size());
  const double lr_scale =
      mean_mass > 0 ? static_cast<double>(k) / mean_mass : 1.0;

  std::vector<std::size_t> order(ds.size());
  std::iota(order.begin(), order.end(), 0);
  Rng shuffle_rng(derive_seed(cfg.seed, "expert-shuffle") ^
                  static_cast<std::uint64_t>(mode));

  const std::int64_t total_batches =
      static_cast<std::int64_t>(cfg.epochs) *
      static_cast<std::int64_t>((ds.size() + cfg.batch_size - 1) /
                                static_cast<std::size_t>(cfg.batch_size));
  std::int64_t batch_index = 0;

  // Dense gradient buffers for the small layers; embedding updates are
  // applied row-sparse straight from each sample's input gradient.
  Matrix<double> g_w1(h, d);
  std::vector<double> g_b1(h);
  Matrix<double> g_w2(static_cast<std::size_t>(k), h);
  std::vector<double> g_b2(static_cast<std::size_t>(k));
  std::vector<std::pair<std::uint32_t, std::vector<double>>> embed_updates;
  ExpertGradWork work;

  if (log != nullptr) log->epoch_loss.clear();

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    shuffle_rng.shuffle(order);
    double epoch_loss = 0;
    for (std::size_t start = 0; start < order.size();
         start += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t stop =
          std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
      const double inv_batch = 1.0 / static_cast<double>(stop - start);
      const double lr =
          cfg.learning_rate * lr_scale *
          (1.0 - static_cast<double>(batch_index) /
                     static_cast<double>(total_batches));
      ++batch_index;

      std::fill(g_w1.data().begin(), g_w1.data().end(), 0.0);
      std::fill(g_b1.begin(), g_b1.end(), 0.0);
      std::fill(g_w2.data().begin(), g_w2.data().end(), 0.0);
      std::fill(g_b2.begin(), g_b2.end(), 0.0);
      embed_updates.clear();

      for (std::size_t pos = start; pos < stop; ++pos) {
        const std::size_t i = order[pos];
        const double loss = expert_record_gradients(
            model.params, bags[i], weights[i], targets[i], work);
        if (!std::isfinite(loss)) {
          throw Error("train_expert: non-finite loss at record " +
                      std::to_string(ds.records[i].query_id));
        }
        epoch_loss += loss;

        for (std::size_t j = 0; j < static_cast<std::size_t>(k); ++j) {
          const double g = work.score_grad[j] * inv_batch;
          if (g == 0) continue;
          auto row = g_w2.row(j);
          for (std::size_t c = 0; c < h; ++c) {
            row[c] += g * work.hidden_act[c];
          }
          g_b2[j] += g;
        }
        for (std::size_t r = 0; r < h; ++r) {
          const double g = work.preact_grad[r] * inv_batch;
          if (g == 0) continue;
          auto row = g_w1.row(r);
          for (std::size_t c = 0; c < d; ++c) row[c] += g * work.input[c];
          g_b1[r] += g;
        }
        if (!bags[i].indices.empty()) {
          const double scale =
              inv_batch / static_cast<double>(bags[i].indices.size());
          std::vector<double> g(d);
          for (std::size_t c = 0; c < d; ++c) {
            g[c] = scale * work.input_grad[c];
          }
          for (std::uint32_t idx : bags[i].indices) {
            embed_updates.emplace_back(idx, g);
          }
        }
      }

      // Apply the batch.
      for (std::size_t j = 0; j < static_cast<std::size_t>(k); ++j) {
        auto dst = model.params.w2.row(j);
        const auto src = g_w2.row(j);
        for (std::size_t c = 0; c < h; ++c) {
          dst[c] -= static_cast<float>(lr * src[c]);
        }
        model.params.b2[j] -= static_cast<float>(lr * g_b2[j]);
      }
      for (std::size_t r = 0; r < h; ++r) {
        auto dst = model.params.w1.row(r);
        const auto src = g_w1.row(r);
        for (std::size_t c = 0; c < d; ++c) {
          dst[c] -= static_cast<float>(lr * src[c]);
        }
        model.params.b1[r] -= static_cast<float>(lr * g_b1[r]);
      }
      for (const auto& [idx, g] : embed_updates) {
        auto row = model.params.embedding.row(idx);
        for (std::size_t c = 0; c < d; ++c) {
          row[c] -= static_cast<float>(lr * g[c]);
        }
      }
    }
    if (log != nullptr) {
      log->epoch_loss.push_back(epoch_loss / static_cast<double>(ds.size()));
    }
  }

  for (float v : model.params.w2.data()) {
    if (!std::isfinite(v)) throw Error("train_expert: non-finite parameters");
  }
  for (float v : model.params.w1.data()) {
    if (!std::isfinite(v)) throw Error("train_expert: non-finite parameters");
  }
  for (float v : model.params.embedding.data()) {
    if (!std::isfinite(v)) throw Error("train_expert: non-finite parameters");
  }
  return model;
}

std::vector<double> expert_score_all(const ExpertModel& model,
                                     std::string_view text) {
  const FeatureBag bag = featurize(text, model.featurizer);
  std::vector<double> input, hidden_act, scores;
  expert_forward(model.params, bag, input, hidden_act, scores);
  for (double& s : scores) s = sigmoid(s);
  return scores;
}

std::vector<std::int32_t> select_labels(std::span<const double> scores,
                                        double tau, int m_cap) {
  if (!(tau > 0 && tau < 1)) {
    throw Error("expert selection: tau must be in (0,1)");
  }
  if (m_cap < 1) throw Error("expert selection: m_cap must be >= 1");
  std::vector<Prediction> preds;
  for (std::size_t j = 0; j < scores.size(); ++j) {
    if (scores[j] >= tau) {
      preds.push_back({static_cast<std::int32_t>(j), scores[j]});
    }
  }
  std::sort(preds.begin(), preds.end(), [](const Prediction& a, const Prediction& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.category < b.category;
  });
  if (static_cast<int>(preds.size()) > m_cap) {
    preds.resize(static_cast<std::size_t>(m_cap));
  }
  std::vector<std::int32_t> labels;
  labels.reserve(preds.size());
  for (const auto& p : preds) labels.push_back(p.category);
  std::sort(labels.begin(), labels.end());
  return labels;
}

std::vector<std::int32_t> expert_predict(const ExpertModel& model,
                                         std::string_view text, double tau,
                                         int m_cap) {
  return select_labels(expert_score_all(model, text), tau, m_cap);
}

std::vector<Prediction> expert_predict_topk(const ExpertModel& model,
                                            std::string_view text, int topk,
                                            double threshold) {
  const std::vector<double> scores = expert_score_all(model, text);
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

namespace {

constexpr std::string_view kExpertMagic = "DDMEEXP1";
constexpr std::uint32_t kExpertVersion = 1;

}  // namespace

void save_expert(const ExpertModel& model, const std::filesystem::path& path) {
  BinaryWriter w;
  w.bytes(kExpertMagic);
  w.u32(kExpertVersion);
  w.u8(static_cast<std::uint8_t>(model.mode));
  w.u32(static_cast<std::uint32_t>(model.embed_dim()));
  w.u32(static_cast<std::uint32_t>(model.hidden_dim()));
  w.u64(model.featurizer.bucket_count);
  w.u32(static_cast<std::uint32_t>(model.k()));
  w.u32(static_cast<std::uint32_t>(model.featurizer.word_ngram_max));
  w.u32(static_cast<std::uint32_t>(model.featurizer.char_ngram_min));
  w.u32(static_cast<std::uint32_t>(model.featurizer.char_ngram_max));
  w.u32(static_cast<std::uint32_t>(model.featurizer.min_word_count));
  w.u8(model.featurizer.lowercase ? 1 : 0);
  for (const auto& name : model.label_space.categories()) w.str(name);
  for (float v : model.params.embedding.data()) w.f32(v);
  for (float v : model.params.w1.data()) w.f32(v);
  for (float v : model.params.b1) w.f32(v);
  for (float v : model.params.w2.data()) w.f32(v);
  for (float v : model.params.b2) w.f32(v);
  w.to_file(path);
}

ExpertModel load_expert(const std::filesystem::path& path) {
  const std::string content = read_file(path);
  if (content.size() < kExpertMagic.size() ||
      std::string_view(content).substr(0, kExpertMagic.size()) !=
          kExpertMagic) {
    throw ParseError(path.string() + ": bad magic, not an expert model file");
  }
  BinaryReader r(content);
  for (std::size_t i = 0; i < kExpertMagic.size(); ++i) r.u8();
  const std::uint32_t version = r.u32();
  if (version != kExpertVersion) {
    throw ParseError(path.string() + ": unsupported expert version " +
                     std::to_string(version));
  }
  ExpertModel model;
  const std::uint8_t mode = r.u8();
  if (mode < 1 || mode > 3) {
    throw ParseError(path.string() + ": bad expert mode byte");
  }
  model.mode = static_cast<ExpertMode>(mode);
  const std::uint32_t d = r.u32();
  const std::uint32_t h = r.u32();
  const std::uint64_t buckets = r.u64();
  const std::uint32_t k = r.u32();
  if (d == 0 || h == 0 || buckets < 2 || k == 0) {
    throw ParseError(path.string() + ": degenerate expert dimensions");
  }
  model.featurizer.bucket_count = buckets;
  model.featurizer.word_ngram_max = static_cast<int>(r.u32());
  model.featurizer.char_ngram_min = static_cast<int>(r.u32());
  model.featurizer.char_ngram_max = static_cast<int>(r.u32());
  model.featurizer.min_word_count = static_cast<int>(r.u32());
  model.featurizer.lowercase = r.u8() != 0;
  model.featurizer.validate();
  for (std::uint32_t j = 0; j < k; ++j) model.label_space.add(r.str());

  const std::uint64_t floats = buckets * d +
                               static_cast<std::uint64_t>(h) * d + h +
                               static_cast<std::uint64_t>(k) * h + k;
  if (floats > r.remaining() / 4) {
    throw Error(path.string() +
                ": model file too small for declared dimensions");
  }
  try {
    model.params.embedding = Matrix<float>(buckets, d);
    model.params.w1 = Matrix<float>(h, d);
    model.params.b1.assign(h, 0.0f);
    model.params.w2 = Matrix<float>(k, h);
    model.params.b2.assign(k, 0.0f);
  } catch (const std::bad_alloc&) {
    throw Error(path.string() + ": cannot allocate expert parameters");
  }
  for (float& v : model.params.embedding.data()) v = r.f32();
  for (float& v : model.params.w1.data()) v = r.f32();
  for (float& v : model.params.b1) v = r.f32();
  for (float& v : model.params.w2.data()) v = r.f32();
  for (float& v : model.params.b2) v = r.f32();
  if (!r.done()) {
    throw ParseError(path.string() + ": trailing bytes after expert payload");
  }
  return model;
}

}  // namespace ddme
