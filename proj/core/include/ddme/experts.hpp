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
#include <string_view>
#include <vector>

#include "ddme/corpus.hpp"
#include "ddme/featurizer.hpp"
#include "ddme/matrix.hpp"
#include "ddme/student.hpp"

namespace ddme {

// The three distribution emphases: forward reweights BCE terms by the PV
// share w_ij = v_ij / sum_l v_il, uniform is plain BCE, backward uses the
// reverse share r_ij = (1 - w_ij) / (k - 1).
enum class ExpertMode : std::uint8_t { forward = 1, uniform = 2, backward = 3 };

std::string_view expert_mode_name(ExpertMode m);
ExpertMode expert_mode_from_name(std::string_view name);

/// Forward-mode negative terms: literal keeps w_ij (zero on every unexposed
/// pair, which silences all negatives), smoothed replaces them with alpha / k.
enum class NegativeWeightScheme { literal, smoothed };

struct ExpertLossConfig {
  ExpertMode mode = ExpertMode::uniform;
  NegativeWeightScheme scheme = NegativeWeightScheme::smoothed;
  double alpha = 1.0;
};

/// w[j] = v_ij / sum_l v_il (all zero when the row has no mass);
/// r[j] = (1 - w[j]) / (k - 1).
struct PVWeights {
  std::vector<double> forward;
  std::vector<double> backward;
};

/// k >= 2 is required for the backward weights to exist.
PVWeights compute_pv_weights(const QueryRecord& record, std::int32_t k);

/// Per-category term weights c_j for one record under a loss config; the
/// record loss is -sum_j c_j [y_j log yhat_j + (1-y_j) log(1-yhat_j)].
std::vector<double> expert_term_weights(const QueryRecord& record,
                                        std::int32_t k,
                                        const ExpertLossConfig& cfg);

template <typename Real>
struct ExpertParamsT {
  Matrix<Real> embedding;  // bucket_count x embed_dim
  Matrix<Real> w1;         // hidden_dim x embed_dim
  std::vector<Real> b1;    // hidden_dim
  Matrix<Real> w2;         // k x hidden_dim
  std::vector<Real> b2;    // k
};

/// Hashed-embedding encoder with one tanh hidden layer and sigmoid outputs.
struct ExpertModel {
  ExpertMode mode = ExpertMode::uniform;
  FeaturizerConfig featurizer;
  LabelSpace label_space;
  ExpertParamsT<float> params;

  int embed_dim() const { return static_cast<int>(params.w1.cols()); }
  int hidden_dim() const { return static_cast<int>(params.w1.rows()); }
  std::int32_t k() const { return label_space.k(); }
};

struct ExpertTrainConfig {
  int embed_dim = 128;
  int hidden_dim = 256;
  int epochs = 10;
  int batch_size = 64;
  double learning_rate = 0.05;  // linearly decayed to 0
  NegativeWeightScheme scheme = NegativeWeightScheme::smoothed;
  double alpha = 1.0;
  bool deterministic = true;
  std::uint64_t seed = 0;
  int threads = 1;  // featurization only; parameter updates are single-writer

  void validate() const;
};

/// y per category for a record (0/1 over k).
std::vector<double> dense_targets(const QueryRecord& record, std::int32_t k);

template <typename Real>
double expert_record_loss(const ExpertParamsT<Real>& params,
                          const FeatureBag& bag,
                          std::span<const double> term_weights,
                          std::span<const double> targets);

// Forward activations and the compact gradient of one record. Dense
// parameter gradients factor as
//   d w2[j]      = score_grad[j] * hidden_act
//   d b2[j]      = score_grad[j]
//   d w1[r]      = preact_grad[r] * input
//   d b1[r]      = preact_grad[r]
//   d embedding[i] = input_grad * (count of i in bag) / bag size.
struct ExpertGradWork {
  std::vector<double> input;        // averaged embedding (embed_dim)
  std::vector<double> hidden_act;   // tanh activations (hidden_dim)
  std::vector<double> score_grad;   // dL/dscore (k)
  std::vector<double> preact_grad;  // dL/dz1 (hidden_dim)
  std::vector<double> input_grad;   // dL/dinput (embed_dim)
};

template <typename Real>
double expert_record_gradients(const ExpertParamsT<Real>& params,
                               const FeatureBag& bag,
                               std::span<const double> term_weights,
                               std::span<const double> targets,
                               ExpertGradWork& work);

ExpertModel train_expert(const ClickDataset& ds, ExpertMode mode,
                         const ExpertTrainConfig& cfg,
                         const FeaturizerConfig& featurizer,
                         TrainLog* log = nullptr);

/// Sigmoid scores for all k categories.
std::vector<double> expert_score_all(const ExpertModel& model,
                                     std::string_view text);

/// Thresholded, capped selection over a score vector; the binarization rule
/// shared by expert_predict and the batch-inference path. Sorted by index.
std::vector<std::int32_t> select_labels(std::span<const double> scores,
                                        double tau, int m_cap);

/// {j : score_j >= tau}, truncated to the m_cap highest scores (ties broken
/// by category index ascending); returned sorted by category index.
std::vector<std::int32_t> expert_predict(const ExpertModel& model,
                                         std::string_view text, double tau,
                                         int m_cap);

/// Ranked top-k view of the expert's scores (same contract as predict_topk).
std::vector<Prediction> expert_predict_topk(const ExpertModel& model,
                                            std::string_view text, int topk,
                                            double threshold);

// Versioned binary expert file, magic "DDMEEXP1":
//   magic[8] | version u32 | mode u8 | embed_dim u32 | hidden_dim u32
//   | bucket_count u64 | k u32 | featurizer block (as the student file)
//   | k label identifiers | embedding f32 | w1 f32 | b1 f32 | w2 f32 | b2 f32
void save_expert(const ExpertModel& model, const std::filesystem::path& path);
ExpertModel load_expert(const std::filesystem::path& path);

}  // namespace ddme
