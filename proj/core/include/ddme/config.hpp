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
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "ddme/corpus.hpp"
#include "ddme/experts.hpp"
#include "ddme/student.hpp"

namespace ddme {

enum class RunMode { baseline, ddme_single, ddme_full };

std::string_view run_mode_name(RunMode m);
RunMode run_mode_from_name(std::string_view name);

// Resolved pipeline configuration. The file format is line-oriented
// "key = value" with dotted section keys; '#' starts a comment. Unknown keys
// are rejected and every violation is reported in one pass.
struct PipelineConfig {
  // paths
  std::filesystem::path out_dir = "out";
  std::filesystem::path train_data;    // empty when synth.enabled
  std::filesystem::path eval_data;     // optional extra evaluation split
  std::filesystem::path label_space_file;
  std::filesystem::path annotations;   // optional, adds acc / acc w/o pv

  // synthetic corpus
  bool synth_enabled = false;
  SyntheticSpec synth;
  bool synth_seed_set = false;  // when false, synth.seed derives from run seed

  // representation
  FeaturizerConfig featurizer;         // student side
  FeaturizerConfig expert_featurizer;  // defaults to featurizer with
                                       // word_ngram_max = 1

  // training
  StudentTrainConfig student;
  ExpertTrainConfig expert;

  // distillation
  double tau = 0.5;
  int m_cap = 5;
  double m_fraction = 0.2;   // M as a share of historical PV mass
  double m_absolute = 0;     // > 0 overrides m_fraction
  double zero_prior_floor = 1.0;

  // evaluation
  BandCuts bands;
  int eval_topk = 5;
  double eval_threshold = 0.0;

  // run
  RunMode mode = RunMode::baseline;
  std::uint64_t seed = 42;
  bool deterministic = true;
  std::vector<std::uint64_t> experiment_seeds = {1, 2, 3};

  /// Every effective key as "key = value", sorted; echoed into manifests.
  std::vector<std::pair<std::string, std::string>> resolved() const;

  /// Effective synthetic spec (seed derived from the run seed when unset).
  SyntheticSpec effective_synth() const;

  double resolve_m(double historical_mass) const;
};

/// Parses and range-checks config text; throws ConfigError listing every
/// violation. `source` names the input in error messages.
PipelineConfig parse_config(std::string_view text, std::string_view source);

PipelineConfig load_config(const std::filesystem::path& path);

}  // namespace ddme
