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

namespace ddme {

/// Sigmoid clamp applied inside every BCE loss term so log() stays finite.
inline constexpr double kSigmoidEps = 1e-7;

double sigmoid(double z);

template <typename Real>
struct StudentParamsT {
  Matrix<Real> embedding;  // bucket_count x dim
  Matrix<Real> output;     // k x dim
};

enum class WeightMode { log_pv, uniform };
enum class NegativeMode { full_sigmoid, sampled };

struct StudentTrainConfig {
  int dim = 64;
  int epochs = 5;
  double learning_rate = 0.1;  // linearly decayed to 0 over training
  NegativeMode negative_mode = NegativeMode::full_sigmoid;
  int negative_samples = 5;  // per positive, sampled mode only
  WeightMode weight_mode = WeightMode::log_pv;
  bool deterministic = true;  // forces one worker
  std::uint64_t seed = 0;
  int threads = 1;

  void validate() const;
};

/// Averaged hashed-n-gram embeddings with a one-vs-all sigmoid output.
struct StudentModel {
  FeaturizerConfig featurizer;
  LabelSpace label_space;
  StudentParamsT<float> params;

  int dim() const { return static_cast<int>(params.output.cols()); }
  std::int32_t k() const { return label_space.k(); }
};

// One active term of the one-vs-all loss: loss += -weight * [y log s +
// (1-y) log(1-s)] with s = clamped sigmoid of the category's score.
// full_sigmoid builds k terms per record, sampled mode only the positives
// plus the drawn negatives.
struct OvaTerm {
  std::int32_t category;
  double weight;
  double y;
};

/// Positive-term weight: log(1 + pv) under log_pv with a fallback to 1 when
/// pv = 0; always 1 under uniform.
double positive_weight(WeightMode mode, double pv);

/// Full-sigmoid term list for a record (positives weighted as above,
/// negatives weight 1).
std::vector<OvaTerm> build_full_terms(const QueryRecord& record, std::int32_t k,
                                      WeightMode mode);

template <typename Real>
double student_record_loss(const StudentParamsT<Real>& params,
                           const FeatureBag& bag, std::span<const OvaTerm> terms);

// Loss plus the compact gradient of one record: score_grad[j] = dL/dscore_j
// (size k, zero for inactive terms), hidden = averaged embedding, hidden_grad
// = dL/dhidden. Dense parameter gradients factor as
//   d output[j] = score_grad[j] * hidden
//   d embedding[i] = hidden_grad * (count of i in bag) / bag size.
template <typename Real>
double student_record_gradients(const StudentParamsT<Real>& params,
                                const FeatureBag& bag,
                                std::span<const OvaTerm> terms,
                                std::vector<double>& hidden,
                                std::vector<double>& score_grad,
                                std::vector<double>& hidden_grad);

struct TrainLog {
  std::vector<double> epoch_loss;  // mean per-record loss per epoch
};

StudentModel train_student(const ClickDataset& ds, const StudentTrainConfig& cfg,
                           const FeaturizerConfig& featurizer,
                           TrainLog* log = nullptr);

struct Prediction {
  std::int32_t category;
  double score;

  bool operator==(const Prediction&) const = default;
};

// Up to topk categories with sigmoid score >= threshold, sorted by score
// descending, ties broken by category index ascending.
std::vector<Prediction> predict_topk(const StudentModel& model,
                                     std::string_view text, int topk,
                                     double threshold);
std::vector<Prediction> predict_topk(const StudentModel& model,
                                     const FeatureBag& bag, int topk,
                                     double threshold);

// Versioned binary model file, magic "DDMESTU1", little-endian throughout:
//   magic[8] | version u32 | dim u32 | bucket_count u64 | k u32
//   | featurizer: word_ngram_max u32, char_ngram_min u32, char_ngram_max u32,
//     min_word_count u32, lowercase u8
//   | k label identifiers (u32 length + bytes)
//   | embedding rows f32 | output rows f32
void save_model(const StudentModel& model, const std::filesystem::path& path);
StudentModel load_model(const std::filesystem::path& path);

}  // namespace ddme
